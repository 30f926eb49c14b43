#pragma once

#include "swarmseg/config.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"

namespace swarmseg {

// Per-agent segmentation network behind a fixed two-tensor contract: an
// intermediate spatial feature map (H_s x W_s x F) and the per-pixel class
// distribution (H x W x C). The trunk is three stacked 1x1 conv + ReLU layers
// (3 -> 16 -> 16 -> F); features come from patch-average pooling the trunk
// output and the distribution from a 1x1 conv + channel softmax head, so the
// whole net stays hand-differentiable and each feature cell depends only on
// its own patch.
struct BackboneOutput {
  GridTensor features;  // H_s x W_s x F
  GridTensor seg;       // H x W x C, fibers sum to 1
};

// Forward pass with cached activations for manual backprop.
struct BackboneForward {
  GridTensor pre1, act1;  // conv1 pre-activation / relu output
  GridTensor pre2, act2;
  GridTensor pre3, act3;  // act3 = trunk output, H x W x F
  GridTensor logits;      // H x W x C (pre-softmax)
  GridTensor seg;         // H x W x C
  GridTensor features;    // H_s x W_s x F
};

// Entry names: backbone.conv{1,2,3}.{w,b}, backbone.head.{w,b}.
void init_backbone_params(ParamBundle& params, const ModelConfig& model, int classes, Rng& rng);

BackboneForward backbone_forward_cached(const GridTensor& observation, const ParamBundle& params,
                                        const ViewConfig& view);
BackboneOutput backbone_forward(const GridTensor& observation, const ParamBundle& params,
                                const ViewConfig& view);

// Accumulate parameter gradients. dlogits is dL/d(head logits) (may be empty),
// dfeatures is dL/d(pooled features) from the compression paths (may be
// empty). Returns dL/d(observation) only if requested (unused by training).
void backbone_backward(const BackboneForward& fwd, const GridTensor& observation,
                       const GridTensor& dlogits, const GridTensor& dfeatures,
                       ParamBundle& params);

struct SegLoss {
  double loss = 0.0;
  GridTensor dlogits;  // (softmax - onehot) / count on scored pixels
};

// Mean cross-entropy over non-ignored pixels of a per-pixel distribution.
SegLoss seg_loss(const GridTensor& seg_distribution, const IntGrid& gt_mask,
                 const IntGrid* ignore_mask);

}  // namespace swarmseg
