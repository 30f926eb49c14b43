#include "swarmseg/baselines.hpp"

#include <json.hpp>

#include "swarmseg/backbone.hpp"
#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"
#include "swarmseg/swarm.hpp"

namespace swarmseg {

namespace {
constexpr int kTrunkHidden = 16;
}

void init_baseline_params(ParamBundle& params, const ModelConfig& model, int classes, int agents,
                          Rng& rng) {
  params.add("baseline.inputstack.conv1.w", init_conv_kernel(rng, 1, 3 * agents, kTrunkHidden));
  params.add("baseline.inputstack.conv1.b", zero_bias(kTrunkHidden));
  params.add("baseline.inputstack.conv2.w", init_conv_kernel(rng, 1, kTrunkHidden, kTrunkHidden));
  params.add("baseline.inputstack.conv2.b", zero_bias(kTrunkHidden));
  params.add("baseline.inputstack.conv3.w",
             init_conv_kernel(rng, 1, kTrunkHidden, model.feature_dim));
  params.add("baseline.inputstack.conv3.b", zero_bias(model.feature_dim));
  params.add("baseline.inputstack.head.w", init_conv_kernel(rng, 1, model.feature_dim, classes));
  params.add("baseline.inputstack.head.b", zero_bias(classes));
  init_stacked_head_params(params, "baseline.outputstack", classes, agents, rng);
  init_stacked_head_params(params, "baseline.warpedstack", classes, agents, rng);
}

InputStackForward input_stack_forward(const SceneSample& sample, int target,
                                      const ParamBundle& params) {
  const int n = sample.agent_count();
  const GridTensor& own = sample.agents[target].observation;
  InputStackForward f;
  f.stack = GridTensor(own.rows, own.cols, 3 * n);
  int slot = 0;
  auto paste = [&](const GridTensor& obs) {
    for (int r = 0; r < obs.rows; ++r)
      for (int c = 0; c < obs.cols; ++c) {
        const double* src = obs.fiber(r, c);
        double* dst = f.stack.fiber(r, c);
        dst[slot * 3 + 0] = src[0];
        dst[slot * 3 + 1] = src[1];
        dst[slot * 3 + 2] = src[2];
      }
    ++slot;
  };
  paste(own);
  for (int i = 0; i < n; ++i)
    if (i != target) paste(sample.agents[i].observation);

  f.pre1 = conv2d_forward(f.stack, params.at("baseline.inputstack.conv1.w").value,
                          params.at("baseline.inputstack.conv1.b").value, 1);
  f.act1 = relu_forward(f.pre1);
  f.pre2 = conv2d_forward(f.act1, params.at("baseline.inputstack.conv2.w").value,
                          params.at("baseline.inputstack.conv2.b").value, 1);
  f.act2 = relu_forward(f.pre2);
  f.pre3 = conv2d_forward(f.act2, params.at("baseline.inputstack.conv3.w").value,
                          params.at("baseline.inputstack.conv3.b").value, 1);
  f.act3 = relu_forward(f.pre3);
  f.logits = conv2d_forward(f.act3, params.at("baseline.inputstack.head.w").value,
                            params.at("baseline.inputstack.head.b").value, 1);
  f.seg = channel_softmax(f.logits);
  return f;
}

void input_stack_backward(const InputStackForward& fwd, const GridTensor& dlogits,
                          ParamBundle& params) {
  auto& hw = params.at("baseline.inputstack.head.w");
  auto& hb = params.at("baseline.inputstack.head.b");
  GridTensor dact3 = conv2d_backward(dlogits, fwd.act3, hw.value, 1, hw.grad, hb.grad);
  GridTensor dpre3 = relu_backward(dact3, fwd.pre3);
  auto& w3 = params.at("baseline.inputstack.conv3.w");
  auto& b3 = params.at("baseline.inputstack.conv3.b");
  GridTensor dact2 = conv2d_backward(dpre3, fwd.act2, w3.value, 1, w3.grad, b3.grad);
  GridTensor dpre2 = relu_backward(dact2, fwd.pre2);
  auto& w2 = params.at("baseline.inputstack.conv2.w");
  auto& b2 = params.at("baseline.inputstack.conv2.b");
  GridTensor dact1 = conv2d_backward(dpre2, fwd.act1, w2.value, 1, w2.grad, b2.grad);
  GridTensor dpre1 = relu_backward(dact1, fwd.pre1);
  auto& w1 = params.at("baseline.inputstack.conv1.w");
  auto& b1 = params.at("baseline.inputstack.conv1.b");
  conv2d_backward(dpre1, fwd.stack, w1.value, 1, w1.grad, b1.grad);
}

IntGrid baseline_input_stack(const SceneSample& sample, int target, const ParamBundle& params) {
  return final_mask(input_stack_forward(sample, target, params).seg);
}

GridTensor output_stack_distribution(const std::vector<GridTensor>& segs, int target,
                                     const ParamBundle& params) {
  std::vector<const GridTensor*> rest;
  for (std::size_t i = 0; i < segs.size(); ++i)
    if (static_cast<int>(i) != target) rest.push_back(&segs[i]);
  return stacked_head_cached(segs[target], rest, params, "baseline.outputstack").fused;
}

IntGrid baseline_output_stack(const SceneSample& sample, int target, const ParamBundle& params,
                              const ViewConfig& view) {
  std::vector<GridTensor> segs;
  for (const auto& a : sample.agents)
    segs.push_back(backbone_forward(a.observation, params, view).seg);
  return final_mask(output_stack_distribution(segs, target, params));
}

WarpPlan gt_warp_plan(const IntGrid& corr, int feat_rows, int feat_cols) {
  WarpPlan plan;
  plan.match_index = corr;
  plan.confidence = GridTensor(corr.rows, corr.cols, 1, 1.0);
  plan.source_rows = feat_rows;
  plan.source_cols = feat_cols;
  return plan;
}

GridTensor warped_output_stack_distribution(const SceneSample& sample, int target,
                                            const std::vector<GridTensor>& segs,
                                            const ParamBundle& params) {
  const int n = sample.agent_count();
  std::vector<GridTensor> warped;
  std::vector<const GridTensor*> rest;
  warped.reserve(n - 1);
  for (int s = 0; s < n; ++s) {
    if (s == target) continue;
    const WarpPlan plan = gt_warp_plan(sample.corr(target, s), sample.feat_rows, sample.feat_cols);
    warped.push_back(warp_distribution(plan, segs[s], segs[target]).warped);
  }
  for (const auto& w : warped) rest.push_back(&w);
  return stacked_head_cached(segs[target], rest, params, "baseline.warpedstack").fused;
}

IntGrid baseline_warped_output_stack(const SceneSample& sample, int target,
                                     const ParamBundle& params, const ViewConfig& view) {
  std::vector<GridTensor> segs;
  for (const auto& a : sample.agents)
    segs.push_back(backbone_forward(a.observation, params, view).seg);
  return final_mask(warped_output_stack_distribution(sample, target, segs, params));
}

BaselineComparison evaluate_baselines(const std::vector<SceneSample>& split,
                                      const ParamBundle& params, const EngineConfig& cfg,
                                      FusionMode fused_mode) {
  if (split.empty()) throw data_error("evaluate_baselines: empty split");
  std::vector<MetricsBundle> single, input, output, wos, fused;
  for (const SceneSample& sample : split) {
    const RoundResult round = run_round(sample, params, fused_mode, cfg);
    const int n = sample.agent_count();
    for (int t = 0; t < n; ++t) {
      const AgentObservation& a = sample.agents[t];
      const IntGrid* om = &a.obstruction_mask;
      single.push_back(
          compute_metrics(final_mask(round.self_seg[t]), a.gt_mask, om, sample.classes));
      input.push_back(
          compute_metrics(baseline_input_stack(sample, t, params), a.gt_mask, om, sample.classes));
      output.push_back(compute_metrics(final_mask(output_stack_distribution(round.self_seg, t, params)),
                                       a.gt_mask, om, sample.classes));
      wos.push_back(compute_metrics(
          final_mask(warped_output_stack_distribution(sample, t, round.self_seg, params)),
          a.gt_mask, om, sample.classes));
      fused.push_back(compute_metrics(round.fused_masks[t], a.gt_mask, om, sample.classes));
    }
  }
  BaselineComparison out;
  out.single_agent = aggregate_metrics(single);
  out.input_stack = aggregate_metrics(input);
  out.output_stack = aggregate_metrics(output);
  out.warped_output_stack = aggregate_metrics(wos);
  out.fused = aggregate_metrics(fused);
  return out;
}

std::string baseline_comparison_to_json(const BaselineComparison& c) {
  nlohmann::json j;
  j["single_agent"] = nlohmann::json::parse(metrics_to_json(c.single_agent));
  j["input_stack"] = nlohmann::json::parse(metrics_to_json(c.input_stack));
  j["output_stack"] = nlohmann::json::parse(metrics_to_json(c.output_stack));
  j["warped_output_stack"] = nlohmann::json::parse(metrics_to_json(c.warped_output_stack));
  j["fused"] = nlohmann::json::parse(metrics_to_json(c.fused));
  return j.dump(2);
}

}  // namespace swarmseg
