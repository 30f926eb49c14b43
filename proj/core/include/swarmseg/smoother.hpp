#pragma once

#include "swarmseg/cost_volume.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"

namespace swarmseg {

// Convolutional autoencoder over correspondence-volume logits:
// 3x3 conv (channels -> hidden) + ReLU -> 3x3 conv (hidden -> hidden) + ReLU
// -> 3x3 conv (hidden -> channels), plus a residual skip from input to
// output. The final layer starts at zero, so an untrained smoother is exactly
// the identity. Entry names: smoother.{enc1,enc2,dec}.{w,b}.
void init_smoother_params(ParamBundle& params, int channels, int hidden, Rng& rng);

struct SmootherForward {
  GridTensor pre1, act1, pre2, act2, out;
};

SmootherForward smooth_cached(const GridTensor& volume_logits, const ParamBundle& params);
GridTensor smooth(const GridTensor& volume_logits, const ParamBundle& params);
CorrespondenceVolume smooth(const CorrespondenceVolume& volume, const ParamBundle& params);

// Accumulates smoother grads; returns dL/d(volume logits), residual included.
GridTensor smooth_backward(const SmootherForward& fwd, const GridTensor& volume_logits,
                           const GridTensor& dout, ParamBundle& params);

struct CorrespondenceLoss {
  double loss = 0.0;
  GridTensor dlogits;  // w.r.t. the smoothed (pre-softmax) volume
};

// Mean per-cell cross-entropy of channel_softmax(logits) against the
// ground-truth channel index; the no-match channel is a legitimate class.
CorrespondenceLoss correspondence_loss(const GridTensor& smoothed_logits, const IntGrid& gt);

}  // namespace swarmseg
