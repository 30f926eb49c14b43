#include "swarmseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "swarmseg/backbone.hpp"
#include "swarmseg/baselines.hpp"
#include "swarmseg/codec.hpp"
#include "swarmseg/conv.hpp"
#include "swarmseg/cost_volume.hpp"
#include "swarmseg/errors.hpp"
#include "swarmseg/smoother.hpp"
#include "swarmseg/warp_fuse.hpp"

namespace swarmseg {

namespace {

constexpr double kLogFloor = 1e-300;
constexpr std::uint64_t kSaltCorrupt = 0xc0417u;

struct DistLoss {
  double loss = 0.0;
  GridTensor dprob;  // w.r.t. the probability tensor itself
};

// Cross-entropy evaluated directly on an already-normalized distribution
// (the soft-fusion output is not a softmax of anything).
DistLoss distribution_cross_entropy(const GridTensor& prob, const IntGrid& gt) {
  DistLoss out;
  out.dprob = GridTensor(prob.rows, prob.cols, prob.channels, 0.0);
  const double inv = 1.0 / (static_cast<double>(gt.rows) * gt.cols);
  for (int r = 0; r < gt.rows; ++r) {
    for (int c = 0; c < gt.cols; ++c) {
      const int cls = gt.at(r, c);
      if (cls < 0 || cls >= prob.channels)
        throw data_error("fused loss: ground-truth class out of range");
      const double p = std::max(prob.at(r, c, cls), kLogFloor);
      out.loss -= std::log(p) * inv;
      out.dprob.at(r, c, cls) = -inv / p;
    }
  }
  return out;
}

// Softmax-output cross-entropy with the analytic (p - onehot)/count logit
// gradient (used by the stacked head).
SegLoss softmax_ce(const GridTensor& prob, const IntGrid& gt) { return seg_loss(prob, gt, nullptr); }

void add_into(GridTensor& acc, const GridTensor& inc) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += inc.data[i];
}

// Non-positive like every real volume logit; fixed so the replacement noise
// never depends on the current parameters.
constexpr double kCorruptLogitLo = -4.0;

struct PairState {
  GridTensor p;            // transformed query, cached for volume backward
  GridTensor volume;       // corrupted volume logits (smoother input)
  IntGrid corrupt_mask;
  SmootherForward smoothed;
  WarpPlan plan;
};

// Shared forward/backward pipeline for one sample. When accumulate is false
// only losses are produced.
LossBreakdown run_sample(const SceneSample& sample, ParamBundle& params, const EngineConfig& cfg,
                         std::uint64_t corrupt_salt, bool accumulate) {
  const int n = sample.agent_count();
  if (n < 1) throw data_error("train: sample without agents");
  const int C = sample.classes;
  const double lambda = cfg.train.lambda_corr;
  LossBreakdown bd;

  std::vector<BackboneForward> bf(n);
  std::vector<EncoderForward> qf(n), kf(n);
  std::vector<GridTensor> dlogits(n), dseg(n), dfeat(n), dq(n), dk(n);
  for (int i = 0; i < n; ++i) {
    bf[i] = backbone_forward_cached(sample.agents[i].observation, params, cfg.view);
    qf[i] = encoder_forward(bf[i].features, params, "query_enc");
    kf[i] = encoder_forward(bf[i].features, params, "key_enc");
    dlogits[i] = GridTensor(cfg.view.rows, cfg.view.cols, C, 0.0);
    dseg[i] = GridTensor(cfg.view.rows, cfg.view.cols, C, 0.0);
    dfeat[i] = GridTensor(cfg.view.feat_rows, cfg.view.feat_cols, cfg.model.feature_dim, 0.0);
    dq[i] = GridTensor(cfg.view.feat_rows, cfg.view.feat_cols, cfg.model.query_dim, 0.0);
    dk[i] = GridTensor(cfg.view.feat_rows, cfg.view.feat_cols, cfg.model.key_dim, 0.0);
  }

  // (1) Per-agent segmentation supervision against the unobstructed masks.
  for (int i = 0; i < n; ++i) {
    const SegLoss sl = seg_loss(bf[i].seg, sample.agents[i].gt_mask, nullptr);
    bd.seg_self += sl.loss;
    if (accumulate) add_into(dlogits[i], sl.dlogits);
  }

  // (2) Correspondence supervision per ordered pair, end to end through the
  // smoother, the volume, the transform and both encoders.
  std::vector<PairState> pairs(static_cast<std::size_t>(n) * n);
  if (n >= 2 && lambda >= 0.0) {
    for (int t = 0; t < n; ++t) {
      for (int s = 0; s < n; ++s) {
        if (s == t) continue;
        PairState& ps = pairs[static_cast<std::size_t>(t) * n + s];
        ps.p = conv2d_forward(qf[t].out, params.at("qk_transform.w").value, GridTensor(), 1);
        const ComparableMap pm{ps.p, t, s};
        const KeyMap km{kf[s].out, s};
        CorrespondenceVolume vol = compute_volume(pm, km);
        Rng crng(splitmix64(corrupt_salt ^ kSaltCorrupt ^
                            (static_cast<std::uint64_t>(t) * 131 + s)));
        ps.corrupt_mask = corrupt_volume_fibers(vol.logits, cfg.train.corrupt_fraction, crng);
        ps.volume = vol.logits;
        ps.smoothed = smooth_cached(ps.volume, params);
        const CorrespondenceLoss cl = correspondence_loss(ps.smoothed.out, sample.corr(t, s));
        bd.corr += lambda * cl.loss;

        CorrespondenceVolume dist = vol;
        dist.logits = channel_softmax(ps.smoothed.out);
        ps.plan = extract_warp_plan(dist);
        ps.plan.target_id = t;
        ps.plan.supporting_id = s;

        if (accumulate && lambda > 0.0) {
          GridTensor dout = cl.dlogits;
          for (auto& v : dout.data) v *= lambda;
          GridTensor dvol = smooth_backward(ps.smoothed, ps.volume, dout, params);
          // Corrupted fibers were replaced by constants: cut their gradient.
          for (int r = 0; r < dvol.rows; ++r)
            for (int c = 0; c < dvol.cols; ++c)
              if (ps.corrupt_mask.at(r, c) != 0) {
                double* f = dvol.fiber(r, c);
                std::fill(f, f + dvol.channels, 0.0);
              }
          GridTensor dp(ps.p.rows, ps.p.cols, ps.p.channels, 0.0);
          GridTensor dkk(kf[s].out.rows, kf[s].out.cols, kf[s].out.channels, 0.0);
          compute_volume_backward(dvol, ps.p, kf[s].out, dp, dkk);
          add_into(dq[t], query_key_transform_backward(qf[t].out, dp, params));
          add_into(dk[s], dkk);
        }
      }
    }
  }

  // (3) Fused-output supervision. Plans and confidences are stop-gradient;
  // the signal reaches the backbones through the copied distribution patches.
  if (n >= 2) {
    const int pr = cfg.view.patch_rows(), pc = cfg.view.patch_cols();
    for (int t = 0; t < n; ++t) {
      std::vector<GridTensor> warped(n), conf(n);
      std::vector<const WarpPlan*> plan_ptrs;
      std::vector<FusionContribution> contribs;
      std::vector<const GridTensor*> warped_ptrs;
      for (int s = 0; s < n; ++s) {
        if (s == t) continue;
        const PairState& ps = pairs[static_cast<std::size_t>(t) * n + s];
        WarpResult wr = warp_distribution(ps.plan, bf[s].seg, bf[t].seg);
        warped[s] = std::move(wr.warped);
        conf[s] = GridTensor(cfg.view.feat_rows, cfg.view.feat_cols, 1, 0.0);
        const int no_match = ps.plan.no_match_value();
        for (int i = 0; i < cfg.view.feat_rows; ++i)
          for (int j = 0; j < cfg.view.feat_cols; ++j)
            if (ps.plan.match_index.at(i, j) != no_match)
              conf[s].at(i, j, 0) = ps.plan.confidence.at(i, j, 0);
        plan_ptrs.push_back(&ps.plan);
      }
      GridTensor self_conf = self_confidence_from_plans(plan_ptrs);
      for (int s = 0; s < n; ++s) {
        if (s == t) continue;
        contribs.push_back({&warped[s], &conf[s], s});
        warped_ptrs.push_back(&warped[s]);
      }

      // Scatter a warped tensor's gradient back to its producers.
      auto route_dwarped = [&](int s, const GridTensor& dwarp) {
        const PairState& ps = pairs[static_cast<std::size_t>(t) * n + s];
        const int no_match = ps.plan.no_match_value();
        for (int i = 0; i < cfg.view.feat_rows; ++i) {
          for (int j = 0; j < cfg.view.feat_cols; ++j) {
            const int m = ps.plan.match_index.at(i, j);
            const bool matched = m != no_match;
            const int si = matched ? m / ps.plan.source_cols : i;
            const int sj = matched ? m % ps.plan.source_cols : j;
            GridTensor& dst = matched ? dseg[s] : dseg[t];
            for (int rr = 0; rr < pr; ++rr)
              for (int cc = 0; cc < pc; ++cc) {
                const double* src = dwarp.fiber(i * pr + rr, j * pc + cc);
                double* d = dst.fiber(si * pr + rr, sj * pc + cc);
                for (int ch = 0; ch < C; ++ch) d[ch] += src[ch];
              }
          }
        }
      };

      if (cfg.train.fusion == FusionMode::kStacked) {
        const StackedFusionForward sf = fuse_stacked_cached(bf[t].seg, warped_ptrs, params);
        const SegLoss fl = softmax_ce(sf.fused, sample.agents[t].gt_mask);
        bd.seg_fused += fl.loss;
        if (accumulate) {
          std::vector<GridTensor> dins = fuse_stacked_backward(sf, fl.dlogits, params);
          add_into(dseg[t], dins[0]);
          int idx = 1;
          for (int s = 0; s < n; ++s) {
            if (s == t) continue;
            route_dwarped(s, dins[idx++]);
          }
        }
      } else {
        // SoftSelection: the differentiable fused path (HardSelection is
        // inference-only for gradient purposes).
        const SoftFusionForward sf = fuse_soft_cached(bf[t].seg, self_conf, contribs);
        const DistLoss fl = distribution_cross_entropy(sf.fused, sample.agents[t].gt_mask);
        bd.seg_fused += fl.loss;
        if (accumulate) {
          std::vector<GridTensor> dwarped;
          GridTensor dtarget =
              fuse_soft_backward(sf, fl.dprob, bf[t].seg, self_conf, contribs, dwarped);
          add_into(dseg[t], dtarget);
          int idx = 0;
          for (int s = 0; s < n; ++s) {
            if (s == t) continue;
            route_dwarped(s, dwarped[idx++]);
          }
        }
      }
    }
  }

  // (4) Close the graph per agent.
  if (accumulate) {
    for (int i = 0; i < n; ++i) {
      add_into(dlogits[i], channel_softmax_backward(bf[i].seg, dseg[i]));
      add_into(dfeat[i], encoder_backward(qf[i], bf[i].features, dq[i], params, "query_enc"));
      add_into(dfeat[i], encoder_backward(kf[i], bf[i].features, dk[i], params, "key_enc"));
      backbone_backward(bf[i], sample.agents[i].observation, dlogits[i], dfeat[i], params);
    }
  }

  bd.total = bd.seg_self + bd.seg_fused + bd.corr;
  const char* term = nullptr;
  if (!std::isfinite(bd.seg_self)) term = "seg_self";
  else if (!std::isfinite(bd.seg_fused)) term = "seg_fused";
  else if (!std::isfinite(bd.corr)) term = "corr";
  if (term != nullptr)
    throw data_error("train: non-finite " + std::string(term) + " loss (sample seed " +
                     std::to_string(sample.seed) + ")");
  return bd;
}

}  // namespace

IntGrid corrupt_volume_fibers(GridTensor& logits, double fraction, Rng& rng) {
  IntGrid mask(logits.rows, logits.cols, 0);
  if (fraction <= 0.0) return mask;
  for (int r = 0; r < logits.rows; ++r)
    for (int c = 0; c < logits.cols; ++c)
      if (rng.coin(fraction)) {
        mask.at(r, c) = 1;
        double* f = logits.fiber(r, c);
        for (int ch = 0; ch < logits.channels; ++ch) f[ch] = rng.uniform(kCorruptLogitLo, 0.0);
      }
  return mask;
}

ParamBundle init_all_params(const EngineConfig& cfg, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x1417a3ULL));
  ParamBundle params;
  init_backbone_params(params, cfg.model, cfg.world.classes, rng);
  init_codec_params(params, cfg.model, rng);
  init_smoother_params(params, cfg.view.feat_cells() + 1, cfg.model.smoother_hidden, rng);
  init_stacked_fusion_params(params, cfg.world.classes, cfg.agents, rng);
  init_baseline_params(params, cfg.model, cfg.world.classes, cfg.agents, rng);
  return params;
}

LossBreakdown accumulate_sample_gradients(const SceneSample& sample, ParamBundle& params,
                                          const EngineConfig& cfg, std::uint64_t corrupt_salt) {
  return run_sample(sample, params, cfg, corrupt_salt, true);
}

LossBreakdown sample_losses(const SceneSample& sample, ParamBundle& params,
                            const EngineConfig& cfg, std::uint64_t corrupt_salt) {
  return run_sample(sample, params, cfg, corrupt_salt, false);
}

TrainResult train(const std::vector<SceneSample>& dataset, const EngineConfig& cfg) {
  if (dataset.empty()) throw data_error("train: dataset is empty");
  for (const auto& s : dataset)
    if (s.agent_count() != cfg.agents)
      throw config_error("train: sample agent count differs from config");

  TrainResult result;
  result.params = init_all_params(cfg, cfg.seed);
  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    LossBreakdown mean;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const std::uint64_t salt =
          splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(epoch) * 1000003ULL + i));
      const LossBreakdown bd =
          accumulate_sample_gradients(dataset[i], result.params, cfg, salt);
      result.params.sgd_step(cfg.train.learning_rate);
      mean.seg_self += bd.seg_self;
      mean.seg_fused += bd.seg_fused;
      mean.corr += bd.corr;
      mean.total += bd.total;
    }
    const double inv = 1.0 / static_cast<double>(dataset.size());
    result.history.rows.push_back({epoch, "seg_self", mean.seg_self * inv});
    result.history.rows.push_back({epoch, "seg_fused", mean.seg_fused * inv});
    result.history.rows.push_back({epoch, "corr", mean.corr * inv});
    result.history.rows.push_back({epoch, "total", mean.total * inv});
  }
  train_auxiliary_heads(dataset, result.params, cfg, &result.history);
  return result;
}

void train_auxiliary_heads(const std::vector<SceneSample>& dataset, ParamBundle& params,
                           const EngineConfig& cfg, TrainHistory* history) {
  if (dataset.empty()) throw data_error("train_auxiliary_heads: dataset is empty");
  const int n = cfg.agents;
  if (n < 2) return;  // the stacks degenerate to the single backbone

  // The backbone is frozen here, so distributions, plans and warps are
  // constants across auxiliary epochs; compute them once.
  struct SampleCache {
    std::vector<GridTensor> segs;
    std::vector<std::vector<GridTensor>> model_warped;  // [target][idx]
    std::vector<std::vector<GridTensor>> gt_warped;
  };
  std::vector<SampleCache> caches;
  caches.reserve(dataset.size());
  for (const SceneSample& sample : dataset) {
    SampleCache cache;
    std::vector<GridTensor> feats(n);
    for (int i = 0; i < n; ++i) {
      BackboneOutput bo = backbone_forward(sample.agents[i].observation, params, cfg.view);
      cache.segs.push_back(std::move(bo.seg));
      feats[i] = std::move(bo.features);
    }
    cache.model_warped.resize(n);
    cache.gt_warped.resize(n);
    for (int t = 0; t < n; ++t) {
      const QueryMap q{encoder_forward(feats[t], params, "query_enc").out, t};
      for (int s = 0; s < n; ++s) {
        if (s == t) continue;
        const KeyMap k{encoder_forward(feats[s], params, "key_enc").out, s};
        const ComparableMap p = query_key_transform(q, params, s);
        const CorrespondenceVolume dist =
            to_distribution(smooth(compute_volume(p, k), params));
        const WarpPlan plan = extract_warp_plan(dist);
        cache.model_warped[t].push_back(
            warp_distribution(plan, cache.segs[s], cache.segs[t]).warped);
        const WarpPlan gt_plan =
            gt_warp_plan(sample.corr(t, s), sample.feat_rows, sample.feat_cols);
        cache.gt_warped[t].push_back(
            warp_distribution(gt_plan, cache.segs[s], cache.segs[t]).warped);
      }
    }
    caches.push_back(std::move(cache));
  }

  for (int epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    double l_input = 0.0, l_output = 0.0, l_warped = 0.0, l_stacked = 0.0;
    for (std::size_t si = 0; si < dataset.size(); ++si) {
      const SceneSample& sample = dataset[si];
      const SampleCache& cache = caches[si];
      for (int t = 0; t < n; ++t) {
        const IntGrid& gt = sample.agents[t].gt_mask;
        {
          const InputStackForward f = input_stack_forward(sample, t, params);
          const SegLoss l = seg_loss(f.seg, gt, nullptr);
          l_input += l.loss;
          input_stack_backward(f, l.dlogits, params);
        }
        auto head_pass = [&](const std::vector<GridTensor>& rest_v, const char* prefix,
                             double& acc) {
          std::vector<const GridTensor*> rest;
          for (const auto& w : rest_v) rest.push_back(&w);
          const StackedFusionForward f =
              stacked_head_cached(cache.segs[t], rest, params, prefix);
          const SegLoss l = seg_loss(f.fused, gt, nullptr);
          acc += l.loss;
          stacked_head_backward(f, l.dlogits, params, prefix);
        };
        {
          std::vector<GridTensor> rest;
          for (int s = 0; s < n; ++s)
            if (s != t) rest.push_back(cache.segs[s]);
          head_pass(rest, "baseline.outputstack", l_output);
        }
        head_pass(cache.gt_warped[t], "baseline.warpedstack", l_warped);
        head_pass(cache.model_warped[t], "fusion.stacked", l_stacked);
      }
      params.sgd_step(cfg.train.learning_rate);
    }
    if (history != nullptr) {
      const double inv = 1.0 / (static_cast<double>(dataset.size()) * n);
      history->rows.push_back({epoch, "aux_input_stack", l_input * inv});
      history->rows.push_back({epoch, "aux_output_stack", l_output * inv});
      history->rows.push_back({epoch, "aux_warped_stack", l_warped * inv});
      history->rows.push_back({epoch, "aux_stacked_fusion", l_stacked * inv});
    }
  }
}

void save_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream os(path);
  if (!os) throw data_error("cannot open '" + path + "' for writing");
  os << "epoch,term,value\n";
  os.precision(17);
  for (const auto& row : history.rows)
    os << row.epoch << "," << row.term << "," << row.value << "\n";
  if (!os) throw data_error("write failed on '" + path + "'");
}

}  // namespace swarmseg
