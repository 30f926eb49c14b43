#pragma once

#include <vector>

#include "swarmseg/cost_volume.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"

namespace swarmseg {

// Per-cell (match index, confidence) extracted from a matching distribution.
// match_index == source_rows*source_cols means no-match: the target keeps its
// own patch there.
struct WarpPlan {
  IntGrid match_index;    // H_s x W_s
  GridTensor confidence;  // H_s x W_s x 1, probability mass of the chosen channel
  int target_id = -1;
  int supporting_id = -1;
  int source_rows = 0;
  int source_cols = 0;

  int no_match_value() const { return source_rows * source_cols; }
};

// volume must hold probabilities (post-softmax). Ties resolve to the lowest
// channel, matching channel_argmax_max.
WarpPlan extract_warp_plan(const CorrespondenceVolume& distribution);

struct WarpResult {
  GridTensor warped;                   // H x W x C, patch-rigid copy
  std::vector<int> transmitted_cells;  // flat feature-cell indices with a real match
};

// Copy the matched source patch into each target cell's footprint (within-
// patch offsets preserved); no-match cells take the target's own patch.
WarpResult warp_distribution(const WarpPlan& plan, const GridTensor& source_seg,
                             const GridTensor& target_seg_self);

struct FusionContribution {
  const GridTensor* warped = nullptr;      // H x W x C
  const GridTensor* confidence = nullptr;  // H_s x W_s x 1
  int agent_id = -1;
};

// Target's own score per cell: the rate at which supporting pairs declared
// no-match there (their self-attention signal). Computable from message
// presence alone, so the distributed round needs no extra scalars.
GridTensor self_confidence_from_plans(const std::vector<const WarpPlan*>& plans);

// Per cell the output patch is exactly one contributor's patch: the one with
// the highest confidence. Ties go to the target itself, then the lowest agent id.
GridTensor fuse_hard(const GridTensor& target_seg, const GridTensor& self_confidence,
                     const std::vector<FusionContribution>& contributions);

// Confidence-weighted sum of distributions, renormalized per fiber; cells
// where every confidence is zero fall back to the target's own distribution.
GridTensor fuse_soft(const GridTensor& target_seg, const GridTensor& self_confidence,
                     const std::vector<FusionContribution>& contributions);

struct SoftFusionForward {
  GridTensor fused;     // H x W x C
  GridTensor pre_norm;  // weighted sums before per-fiber renormalization
};

SoftFusionForward fuse_soft_cached(const GridTensor& target_seg, const GridTensor& self_confidence,
                                   const std::vector<FusionContribution>& contributions);

// Backprop through fuse_soft with confidences treated as constants
// (stop-gradient). Returns dL/dtarget_seg; appends one dL/dwarped tensor per
// contribution in order.
GridTensor fuse_soft_backward(const SoftFusionForward& fwd, const GridTensor& dfused,
                              const GridTensor& target_seg, const GridTensor& self_confidence,
                              const std::vector<FusionContribution>& contributions,
                              std::vector<GridTensor>& dwarped_out);

// Learned fusion: stack log-distributions (self first, then contributions in
// ascending agent order), 1x1 conv to C channels, channel softmax. Entry
// names: fusion.stacked.{w,b}; the kernel width fixes the agent count.
void init_stacked_fusion_params(ParamBundle& params, int classes, int agents, Rng& rng);

struct StackedFusionForward {
  GridTensor stack;   // H x W x (N*C) of clamped log-probabilities
  GridTensor logits;  // H x W x C
  GridTensor fused;   // softmax(logits)
};

// Same head behind arbitrary entry prefixes; the output-stack style baselines
// share this machinery with their own kernels.
void init_stacked_head_params(ParamBundle& params, const std::string& prefix, int classes,
                              int agents, Rng& rng);
StackedFusionForward stacked_head_cached(const GridTensor& first,
                                         const std::vector<const GridTensor*>& rest,
                                         const ParamBundle& params, const std::string& prefix);
std::vector<GridTensor> stacked_head_backward(const StackedFusionForward& fwd,
                                              const GridTensor& dlogits, ParamBundle& params,
                                              const std::string& prefix);

StackedFusionForward fuse_stacked_cached(const GridTensor& target_seg,
                                         const std::vector<const GridTensor*>& warped,
                                         const ParamBundle& params);
GridTensor fuse_stacked(const GridTensor& target_seg,
                        const std::vector<const GridTensor*>& warped, const ParamBundle& params);

// Backprop from dL/dlogits: accumulates kernel grads and returns per-input
// dL/ddistribution tensors (self first, then the warped inputs in order).
std::vector<GridTensor> fuse_stacked_backward(const StackedFusionForward& fwd,
                                              const GridTensor& dlogits, ParamBundle& params);

// Channel-wise argmax, ties to the lowest class.
IntGrid final_mask(const GridTensor& fused_distribution);

}  // namespace swarmseg
