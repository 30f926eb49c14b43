#include "swarmseg/warp_fuse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {

constexpr double kLogFloor = 1e-300;

struct PatchDims {
  int pr, pc, feat_rows, feat_cols;
};

PatchDims patch_dims(const GridTensor& seg, const GridTensor& cell_grid, const char* who) {
  if (cell_grid.rows < 1 || cell_grid.cols < 1 || seg.rows % cell_grid.rows != 0 ||
      seg.cols % cell_grid.cols != 0)
    throw config_error(std::string(who) + ": segmentation dims not divisible by cell grid");
  return {seg.rows / cell_grid.rows, seg.cols / cell_grid.cols, cell_grid.rows, cell_grid.cols};
}

std::vector<FusionContribution> sorted_by_agent(std::vector<FusionContribution> contribs) {
  std::sort(contribs.begin(), contribs.end(),
            [](const FusionContribution& a, const FusionContribution& b) {
              return a.agent_id < b.agent_id;
            });
  return contribs;
}

void copy_patch(GridTensor& dst, const GridTensor& src, int dst_r0, int dst_c0, int src_r0,
                int src_c0, int pr, int pc) {
  const int ch = dst.channels;
  for (int r = 0; r < pr; ++r) {
    for (int c = 0; c < pc; ++c) {
      const double* s = src.fiber(src_r0 + r, src_c0 + c);
      double* d = dst.fiber(dst_r0 + r, dst_c0 + c);
      for (int k = 0; k < ch; ++k) d[k] = s[k];
    }
  }
}

}  // namespace

WarpPlan extract_warp_plan(const CorrespondenceVolume& distribution) {
  const ChannelArgMax am = channel_argmax_max(distribution.logits);
  WarpPlan plan;
  plan.match_index = am.index;
  plan.confidence = am.value;
  plan.target_id = distribution.target_id;
  plan.supporting_id = distribution.supporting_id;
  plan.source_rows = distribution.source_rows;
  plan.source_cols = distribution.source_cols;
  return plan;
}

WarpResult warp_distribution(const WarpPlan& plan, const GridTensor& source_seg,
                             const GridTensor& target_seg_self) {
  if (!source_seg.same_shape(target_seg_self))
    throw config_error("warp_distribution: source and target segs differ in shape");
  const int feat_rows = plan.match_index.rows, feat_cols = plan.match_index.cols;
  if (source_seg.rows % feat_rows != 0 || source_seg.cols % feat_cols != 0)
    throw config_error("warp_distribution: seg dims not divisible by the plan grid");
  const int pr = source_seg.rows / feat_rows, pc = source_seg.cols / feat_cols;
  const int no_match = plan.no_match_value();

  WarpResult out;
  out.warped = GridTensor(source_seg.rows, source_seg.cols, source_seg.channels);
  for (int i = 0; i < feat_rows; ++i) {
    for (int j = 0; j < feat_cols; ++j) {
      const int m = plan.match_index.at(i, j);
      if (m == no_match) {
        copy_patch(out.warped, target_seg_self, i * pr, j * pc, i * pr, j * pc, pr, pc);
      } else {
        const int si = m / plan.source_cols;
        const int sj = m % plan.source_cols;
        copy_patch(out.warped, source_seg, i * pr, j * pc, si * pr, sj * pc, pr, pc);
        out.transmitted_cells.push_back(i * feat_cols + j);
      }
    }
  }
  return out;
}

GridTensor self_confidence_from_plans(const std::vector<const WarpPlan*>& plans) {
  if (plans.empty()) throw config_error("self_confidence_from_plans: no plans");
  const int rows = plans[0]->match_index.rows, cols = plans[0]->match_index.cols;
  GridTensor conf(rows, cols, 1, 0.0);
  for (const WarpPlan* p : plans) {
    if (p->match_index.rows != rows || p->match_index.cols != cols)
      throw config_error("self_confidence_from_plans: plan grids differ");
    const int no_match = p->no_match_value();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (p->match_index.at(r, c) == no_match) conf.at(r, c, 0) += 1.0;
  }
  const double inv = 1.0 / static_cast<double>(plans.size());
  for (auto& v : conf.data) v *= inv;
  return conf;
}

GridTensor fuse_hard(const GridTensor& target_seg, const GridTensor& self_confidence,
                     const std::vector<FusionContribution>& contributions) {
  const PatchDims d = patch_dims(target_seg, self_confidence, "fuse_hard");
  const auto contribs = sorted_by_agent(contributions);
  GridTensor fused(target_seg.rows, target_seg.cols, target_seg.channels);
  for (int i = 0; i < d.feat_rows; ++i) {
    for (int j = 0; j < d.feat_cols; ++j) {
      double best = self_confidence.at(i, j, 0);
      const GridTensor* winner = &target_seg;
      for (const auto& cb : contribs) {
        if (cb.confidence->at(i, j, 0) > best) {  // strict: ties keep self / lower id
          best = cb.confidence->at(i, j, 0);
          winner = cb.warped;
        }
      }
      copy_patch(fused, *winner, i * d.pr, j * d.pc, i * d.pr, j * d.pc, d.pr, d.pc);
    }
  }
  return fused;
}

SoftFusionForward fuse_soft_cached(const GridTensor& target_seg, const GridTensor& self_confidence,
                                   const std::vector<FusionContribution>& contributions) {
  const PatchDims d = patch_dims(target_seg, self_confidence, "fuse_soft");
  const auto contribs = sorted_by_agent(contributions);
  SoftFusionForward out;
  out.pre_norm = GridTensor(target_seg.rows, target_seg.cols, target_seg.channels, 0.0);
  out.fused = GridTensor(target_seg.rows, target_seg.cols, target_seg.channels);
  for (int i = 0; i < d.feat_rows; ++i) {
    for (int j = 0; j < d.feat_cols; ++j) {
      const double wself = self_confidence.at(i, j, 0);
      double total = wself;
      for (const auto& cb : contribs) total += cb.confidence->at(i, j, 0);
      for (int r = i * d.pr; r < (i + 1) * d.pr; ++r) {
        for (int c = j * d.pc; c < (j + 1) * d.pc; ++c) {
          double* acc = out.pre_norm.fiber(r, c);
          double* y = out.fused.fiber(r, c);
          const double* self_f = target_seg.fiber(r, c);
          if (total <= 0.0) {
            // Every confidence is zero: fall back to the target's own fiber.
            for (int k = 0; k < target_seg.channels; ++k) y[k] = self_f[k];
            continue;
          }
          for (int k = 0; k < target_seg.channels; ++k) acc[k] = wself * self_f[k];
          for (const auto& cb : contribs) {
            const double w = cb.confidence->at(i, j, 0);
            const double* wf = cb.warped->fiber(r, c);
            for (int k = 0; k < target_seg.channels; ++k) acc[k] += w * wf[k];
          }
          double sum = 0.0;
          for (int k = 0; k < target_seg.channels; ++k) sum += acc[k];
          const double inv = 1.0 / sum;
          for (int k = 0; k < target_seg.channels; ++k) y[k] = acc[k] * inv;
        }
      }
    }
  }
  return out;
}

GridTensor fuse_soft(const GridTensor& target_seg, const GridTensor& self_confidence,
                     const std::vector<FusionContribution>& contributions) {
  return fuse_soft_cached(target_seg, self_confidence, contributions).fused;
}

GridTensor fuse_soft_backward(const SoftFusionForward& fwd, const GridTensor& dfused,
                              const GridTensor& target_seg, const GridTensor& self_confidence,
                              const std::vector<FusionContribution>& contributions,
                              std::vector<GridTensor>& dwarped_out) {
  const PatchDims d = patch_dims(target_seg, self_confidence, "fuse_soft_backward");
  const auto contribs = sorted_by_agent(contributions);
  GridTensor dtarget(target_seg.rows, target_seg.cols, target_seg.channels, 0.0);
  dwarped_out.clear();
  for (std::size_t i = 0; i < contribs.size(); ++i)
    dwarped_out.emplace_back(target_seg.rows, target_seg.cols, target_seg.channels, 0.0);

  const int C = target_seg.channels;
  std::vector<double> dv(C);
  for (int i = 0; i < d.feat_rows; ++i) {
    for (int j = 0; j < d.feat_cols; ++j) {
      const double wself = self_confidence.at(i, j, 0);
      double total = wself;
      for (const auto& cb : contribs) total += cb.confidence->at(i, j, 0);
      for (int r = i * d.pr; r < (i + 1) * d.pr; ++r) {
        for (int c = j * d.pc; c < (j + 1) * d.pc; ++c) {
          const double* dy = dfused.fiber(r, c);
          double* dt = dtarget.fiber(r, c);
          if (total <= 0.0) {
            for (int k = 0; k < C; ++k) dt[k] += dy[k];
            continue;
          }
          const double* v = fwd.pre_norm.fiber(r, c);
          const double* y = fwd.fused.fiber(r, c);
          double S = 0.0;
          for (int k = 0; k < C; ++k) S += v[k];
          double dot = 0.0;
          for (int k = 0; k < C; ++k) dot += dy[k] * y[k];
          const double invS = 1.0 / S;
          for (int k = 0; k < C; ++k) dv[k] = (dy[k] - dot) * invS;
          for (int k = 0; k < C; ++k) dt[k] += wself * dv[k];
          for (std::size_t ci = 0; ci < contribs.size(); ++ci) {
            const double w = contribs[ci].confidence->at(i, j, 0);
            double* dw = dwarped_out[ci].fiber(r, c);
            for (int k = 0; k < C; ++k) dw[k] += w * dv[k];
          }
        }
      }
    }
  }
  return dtarget;
}

void init_stacked_head_params(ParamBundle& params, const std::string& prefix, int classes,
                              int agents, Rng& rng) {
  params.add(prefix + ".w", init_conv_kernel(rng, 1, agents * classes, classes));
  params.add(prefix + ".b", zero_bias(classes));
}

void init_stacked_fusion_params(ParamBundle& params, int classes, int agents, Rng& rng) {
  init_stacked_head_params(params, "fusion.stacked", classes, agents, rng);
}

StackedFusionForward stacked_head_cached(const GridTensor& first,
                                         const std::vector<const GridTensor*>& rest,
                                         const ParamBundle& params, const std::string& prefix) {
  const int C = first.channels;
  const int n = 1 + static_cast<int>(rest.size());
  const auto& w = params.at(prefix + ".w").value;
  if (w.cols != n * C)
    throw config_error(prefix + ": kernel was trained for " + std::to_string(w.cols / C) +
                       " agents, got " + std::to_string(n));
  StackedFusionForward f;
  f.stack = GridTensor(first.rows, first.cols, n * C);
  for (int r = 0; r < first.rows; ++r) {
    for (int c = 0; c < first.cols; ++c) {
      double* s = f.stack.fiber(r, c);
      const double* self_f = first.fiber(r, c);
      for (int k = 0; k < C; ++k) s[k] = std::log(std::max(self_f[k], kLogFloor));
      for (int a = 0; a < n - 1; ++a) {
        const double* wf = rest[a]->fiber(r, c);
        for (int k = 0; k < C; ++k) s[(a + 1) * C + k] = std::log(std::max(wf[k], kLogFloor));
      }
    }
  }
  f.logits = conv2d_forward(f.stack, w, params.at(prefix + ".b").value, 1);
  f.fused = channel_softmax(f.logits);
  return f;
}

StackedFusionForward fuse_stacked_cached(const GridTensor& target_seg,
                                         const std::vector<const GridTensor*>& warped,
                                         const ParamBundle& params) {
  return stacked_head_cached(target_seg, warped, params, "fusion.stacked");
}

GridTensor fuse_stacked(const GridTensor& target_seg, const std::vector<const GridTensor*>& warped,
                        const ParamBundle& params) {
  return fuse_stacked_cached(target_seg, warped, params).fused;
}

std::vector<GridTensor> stacked_head_backward(const StackedFusionForward& fwd,
                                              const GridTensor& dlogits, ParamBundle& params,
                                              const std::string& prefix) {
  auto& w = params.at(prefix + ".w");
  auto& b = params.at(prefix + ".b");
  GridTensor dstack = conv2d_backward(dlogits, fwd.stack, w.value, 1, w.grad, b.grad);
  const int C = dlogits.channels;
  const int n = dstack.channels / C;
  std::vector<GridTensor> dinputs;
  for (int a = 0; a < n; ++a) dinputs.emplace_back(dstack.rows, dstack.cols, C, 0.0);
  for (int r = 0; r < dstack.rows; ++r) {
    for (int c = 0; c < dstack.cols; ++c) {
      const double* ds = dstack.fiber(r, c);
      const double* s = fwd.stack.fiber(r, c);
      for (int a = 0; a < n; ++a) {
        double* di = dinputs[a].fiber(r, c);
        for (int k = 0; k < C; ++k) {
          // d log(p) / dp = 1/p; the clamp floor never binds for softmax outputs.
          const double p = std::exp(s[a * C + k]);
          di[k] = p > kLogFloor ? ds[a * C + k] / p : 0.0;
        }
      }
    }
  }
  return dinputs;
}

std::vector<GridTensor> fuse_stacked_backward(const StackedFusionForward& fwd,
                                              const GridTensor& dlogits, ParamBundle& params) {
  return stacked_head_backward(fwd, dlogits, params, "fusion.stacked");
}

IntGrid final_mask(const GridTensor& fused_distribution) {
  return channel_argmax_max(fused_distribution).index;
}

}  // namespace swarmseg
