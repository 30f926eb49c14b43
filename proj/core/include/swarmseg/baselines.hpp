#pragma once

#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/metrics.hpp"
#include "swarmseg/params.hpp"
#include "swarmseg/warp_fuse.hpp"
#include "swarmseg/world.hpp"

namespace swarmseg {

// Comparator baselines. InputStack runs its own trunk over the channel-stacked
// RGB images; OutputStack fuses unwarped per-agent distributions through a
// learned 1x1 kernel; WarpedOutputStack does the same after warping by the
// ground-truth grids (an evaluation-time privilege that upper-bounds the
// learned warping).
// Entry names: baseline.inputstack.conv{1,2,3}.{w,b} + baseline.inputstack.head.{w,b},
// baseline.outputstack.{w,b}, baseline.warpedstack.{w,b}.
void init_baseline_params(ParamBundle& params, const ModelConfig& model, int classes, int agents,
                          Rng& rng);

struct InputStackForward {
  GridTensor stack;  // H x W x 3N (target's own image first)
  GridTensor pre1, act1, pre2, act2, pre3, act3, logits, seg;
};

InputStackForward input_stack_forward(const SceneSample& sample, int target,
                                      const ParamBundle& params);
void input_stack_backward(const InputStackForward& fwd, const GridTensor& dlogits,
                          ParamBundle& params);
IntGrid baseline_input_stack(const SceneSample& sample, int target, const ParamBundle& params);

// segs holds every agent's own distribution (from the shared backbone).
GridTensor output_stack_distribution(const std::vector<GridTensor>& segs, int target,
                                     const ParamBundle& params);
IntGrid baseline_output_stack(const SceneSample& sample, int target, const ParamBundle& params,
                              const ViewConfig& view);

// Build a warp plan straight from a ground-truth correspondence grid
// (confidence 1 at matched cells).
WarpPlan gt_warp_plan(const IntGrid& corr, int feat_rows, int feat_cols);

GridTensor warped_output_stack_distribution(const SceneSample& sample, int target,
                                            const std::vector<GridTensor>& segs,
                                            const ParamBundle& params);
IntGrid baseline_warped_output_stack(const SceneSample& sample, int target,
                                     const ParamBundle& params, const ViewConfig& view);

struct BaselineComparison {
  MetricsBundle single_agent;
  MetricsBundle input_stack;
  MetricsBundle output_stack;
  MetricsBundle warped_output_stack;
  MetricsBundle fused;  // the collaborative pipeline at the given fusion mode
};

// Score every method over every (sample, target) with shared backbone outputs.
BaselineComparison evaluate_baselines(const std::vector<SceneSample>& split,
                                      const ParamBundle& params, const EngineConfig& cfg,
                                      FusionMode fused_mode);

std::string baseline_comparison_to_json(const BaselineComparison& c);

}  // namespace swarmseg
