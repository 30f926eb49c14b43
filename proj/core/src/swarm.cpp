#include "swarmseg/swarm.hpp"

#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "swarmseg/backbone.hpp"
#include "swarmseg/codec.hpp"
#include "swarmseg/cost_volume.hpp"
#include "swarmseg/errors.hpp"
#include "swarmseg/smoother.hpp"

namespace swarmseg {

using nlohmann::json;

namespace {

double wire_round(double v, int bytes) {
  return bytes == 4 ? static_cast<double>(static_cast<float>(v)) : v;
}

struct PairOut {
  WarpPlan plan;
  ResponseMsg msg;
};

// The full supporting-side pipeline for one (target, supporting) pair.
PairOut run_pair(const QueryMap& received_query, const KeyMap& key, const GridTensor& own_seg,
                 const ParamBundle& params, const EngineConfig& cfg, int target, int supporting) {
  PairOut out;
  const ComparableMap p = query_key_transform(received_query, params, supporting);
  const CorrespondenceVolume vol = compute_volume(p, key);
  const CorrespondenceVolume smoothed = smooth(vol, params);
  const CorrespondenceVolume dist = to_distribution(smoothed);
  out.plan = extract_warp_plan(dist);
  out.msg.sender = supporting;
  out.msg.receiver = target;
  const int pr = cfg.view.patch_rows(), pc = cfg.view.patch_cols();
  const int no_match = out.plan.no_match_value();
  for (int i = 0; i < out.plan.match_index.rows; ++i) {
    for (int j = 0; j < out.plan.match_index.cols; ++j) {
      const int m = out.plan.match_index.at(i, j);
      if (m == no_match) continue;
      ResponseCellPayload cell;
      cell.cell = i * out.plan.match_index.cols + j;
      cell.confidence = wire_round(out.plan.confidence.at(i, j, 0), cfg.wire_scalar_bytes);
      cell.patch.reserve(static_cast<std::size_t>(pr) * pc * own_seg.channels);
      const int si = m / out.plan.source_cols, sj = m % out.plan.source_cols;
      for (int r = si * pr; r < (si + 1) * pr; ++r)
        for (int c = sj * pc; c < (sj + 1) * pc; ++c) {
          const double* f = own_seg.fiber(r, c);
          for (int ch = 0; ch < own_seg.channels; ++ch)
            cell.patch.push_back(wire_round(f[ch], cfg.wire_scalar_bytes));
        }
      out.msg.cells.push_back(std::move(cell));
    }
  }
  return out;
}

}  // namespace

long long ResponseMsg::payload_scalars() const {
  long long n = 0;
  for (const auto& c : cells) n += static_cast<long long>(c.patch.size());
  return n;
}

long long ResponseMsg::confidence_scalars() const { return static_cast<long long>(cells.size()); }

std::string op_log_to_jsonl(const std::vector<OpLogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    json j = {{"executor", e.executor}, {"op", e.op}, {"target", e.target},
              {"supporting", e.supporting}};
    out += j.dump();
    out += "\n";
  }
  return out;
}

std::string BandwidthLedger::to_json() const {
  json j;
  j["wire_scalar_bytes"] = wire_scalar_bytes;
  j["query_scalars_per_broadcast"] = query_scalars_per_broadcast;
  j["agents"] = json::array();
  for (const auto& a : agents)
    j["agents"].push_back({{"tx_scalars", a.tx_scalars},
                           {"rx_scalars", a.rx_scalars},
                           {"tx_bytes", a.tx_bytes},
                           {"rx_bytes", a.rx_bytes}});
  j["pairs"] = json::array();
  for (const auto& p : pairs)
    j["pairs"].push_back({{"target", p.target},
                          {"supporting", p.supporting},
                          {"transmitted_cells", p.transmitted_cells},
                          {"selection_factor", p.selection_factor},
                          {"response_payload_scalars", p.response_payload_scalars},
                          {"response_confidence_scalars", p.response_confidence_scalars}});
  return j.dump(2);
}

LedgerPrediction ledger_predict(int H, int W, int C, int Hs, int Ws, int Q, int N, double r) {
  if (H < 1 || W < 1 || C < 1 || Hs < 1 || Ws < 1 || Q < 1 || N < 1)
    throw config_error("ledger_predict: dimensions must be positive");
  if (r < 0.0 || r > 1.0) throw config_error("ledger_predict: r must lie in [0,1]");
  LedgerPrediction p;
  p.target_tx_scalars = static_cast<long long>(Hs) * Ws * Q;
  p.per_supporting_rx_scalars = static_cast<double>(H) * W * C * r;
  p.naive_scalars = static_cast<long long>(N - 1) * H * W * 3;
  p.target_tx_fraction =
      static_cast<double>(p.target_tx_scalars) / (static_cast<double>(H) * W * 3);
  return p;
}

ComputeProfile agent_compute_profile(const std::vector<OpLogEntry>& log, int n_agents) {
  ComputeProfile profile;
  for (const auto& e : log) {
    auto& v = profile.counts[e.op];
    if (v.empty()) v.assign(n_agents, 0);
    if (e.executor < 0 || e.executor >= n_agents)
      throw data_error("agent_compute_profile: executor id out of range");
    ++v[e.executor];
  }
  return profile;
}

std::string ComputeProfile::to_json() const {
  json j;
  for (const auto& [op, per_agent] : counts) j[op] = per_agent;
  return j.dump(2);
}

RoundResult run_round(const SceneSample& sample, const ParamBundle& params, FusionMode fusion,
                      const EngineConfig& cfg, bool parallel_pairs) {
  const int n = sample.agent_count();
  if (n < 2) throw config_error("run_round: need at least 2 agents");
  const int pr = cfg.view.patch_rows(), pc = cfg.view.patch_cols();

  RoundResult res;
  res.ledger.agents.assign(n, AgentCounters{});
  res.ledger.wire_scalar_bytes = cfg.wire_scalar_bytes;
  res.ledger.query_scalars_per_broadcast = query_scalar_count(cfg.view, cfg.model);

  // (1) Local backbone pass; every agent also prepares its key map since it
  // will act as a supporting agent for everyone else.
  std::vector<GridTensor> feats(n);
  std::vector<KeyMap> keys(n);
  res.self_seg.resize(n);
  for (int i = 0; i < n; ++i) {
    BackboneOutput bo = backbone_forward(sample.agents[i].observation, params, cfg.view);
    feats[i] = std::move(bo.features);
    res.self_seg[i] = std::move(bo.seg);
    res.op_log.push_back({i, kOpBackbone, i, -1});
  }
  for (int i = 0; i < n; ++i) {
    keys[i] = encode_key(feats[i], params, i);
    res.op_log.push_back({i, kOpEncodeKey, -1, i});
  }

  // (2) Each target encodes and broadcasts one query, reused by every receiver.
  std::vector<QueryMap> received(n);
  for (int t = 0; t < n; ++t) {
    const QueryMap q = encode_query(feats[t], params, t);
    res.op_log.push_back({t, kOpEncodeQuery, t, -1});
    const auto bytes = serialize_query(q, cfg.wire_scalar_bytes);
    const long long scalars = static_cast<long long>(q.q.size());
    const long long payload_bytes = scalars * cfg.wire_scalar_bytes;
    res.ledger.agents[t].tx_scalars += scalars;
    res.ledger.agents[t].tx_bytes += payload_bytes;
    for (int s = 0; s < n; ++s) {
      if (s == t) continue;
      res.ledger.agents[s].rx_scalars += scalars;
      res.ledger.agents[s].rx_bytes += payload_bytes;
    }
    received[t] = deserialize_query(bytes, cfg.wire_scalar_bytes);
  }

  // (3) Supporting-side pair pipelines; independent, so the parallel schedule
  // fills the same slots from worker threads.
  std::vector<PairOut> pair_out(static_cast<std::size_t>(n) * n);
  auto pair_job = [&](int t, int s) {
    pair_out[static_cast<std::size_t>(t) * n + s] =
        run_pair(received[t], keys[s], res.self_seg[s], params, cfg, t, s);
  };
  if (parallel_pairs) {
    std::vector<std::thread> workers;
    for (int t = 0; t < n; ++t)
      for (int s = 0; s < n; ++s)
        if (s != t) workers.emplace_back(pair_job, t, s);
    for (auto& w : workers) w.join();
  } else {
    for (int t = 0; t < n; ++t)
      for (int s = 0; s < n; ++s)
        if (s != t) pair_job(t, s);
  }
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s < n; ++s) {
      if (s == t) continue;
      res.op_log.push_back({s, kOpQueryKeyTransform, t, s});
      res.op_log.push_back({s, kOpComputeVolume, t, s});
      res.op_log.push_back({s, kOpSmooth, t, s});
      res.op_log.push_back({s, kOpExtractWarpPlan, t, s});
      res.op_log.push_back({s, kOpWarp, t, s});
    }
  }

  // (4) Deliver responses and settle the ledger.
  res.plans.resize(static_cast<std::size_t>(n) * n);
  const long long cell_scalars = static_cast<long long>(pr) * pc * sample.classes;
  for (int t = 0; t < n; ++t) {
    for (int s = 0; s < n; ++s) {
      if (s == t) continue;
      PairOut& po = pair_out[static_cast<std::size_t>(t) * n + s];
      res.plans[static_cast<std::size_t>(t) * n + s] = po.plan;
      PairLedger pl;
      pl.target = t;
      pl.supporting = s;
      pl.transmitted_cells = static_cast<int>(po.msg.cells.size());
      pl.selection_factor =
          static_cast<double>(pl.transmitted_cells) / cfg.view.feat_cells();
      pl.response_payload_scalars = po.msg.payload_scalars();
      pl.response_confidence_scalars = po.msg.confidence_scalars();
      if (pl.response_payload_scalars != cell_scalars * pl.transmitted_cells)
        throw data_error("run_round: response payload size drifted from the cell contract");
      const long long scalars = pl.response_payload_scalars + pl.response_confidence_scalars;
      const long long bytes = scalars * cfg.wire_scalar_bytes;
      res.ledger.agents[s].tx_scalars += scalars;
      res.ledger.agents[s].tx_bytes += bytes;
      res.ledger.agents[t].rx_scalars += scalars;
      res.ledger.agents[t].rx_bytes += bytes;
      res.ledger.pairs.push_back(pl);
    }
  }

  // (5) Target-side assembly and fusion. Cells nobody transmitted keep the
  // target's own patch; message presence doubles as the no-match signal.
  res.fused.resize(n);
  res.fused_masks.resize(n);
  for (int t = 0; t < n; ++t) {
    const GridTensor& own = res.self_seg[t];
    std::vector<GridTensor> warped(n);
    std::vector<GridTensor> conf(n);
    GridTensor self_conf(cfg.view.feat_rows, cfg.view.feat_cols, 1, 0.0);
    for (int s = 0; s < n; ++s) {
      if (s == t) continue;
      const ResponseMsg& msg = pair_out[static_cast<std::size_t>(t) * n + s].msg;
      warped[s] = own;  // start from the target's own patches
      conf[s] = GridTensor(cfg.view.feat_rows, cfg.view.feat_cols, 1, 0.0);
      std::vector<char> present(static_cast<std::size_t>(cfg.view.feat_cells()), 0);
      for (const auto& cell : msg.cells) {
        const int i = cell.cell / cfg.view.feat_cols;
        const int j = cell.cell % cfg.view.feat_cols;
        present[cell.cell] = 1;
        conf[s].at(i, j, 0) = cell.confidence;
        std::size_t k = 0;
        for (int r = i * pr; r < (i + 1) * pr; ++r)
          for (int c = j * pc; c < (j + 1) * pc; ++c) {
            double* f = warped[s].fiber(r, c);
            for (int ch = 0; ch < own.channels; ++ch) f[ch] = cell.patch[k++];
          }
      }
      for (int cellk = 0; cellk < cfg.view.feat_cells(); ++cellk)
        if (!present[cellk])
          self_conf.at(cellk / cfg.view.feat_cols, cellk % cfg.view.feat_cols, 0) += 1.0;
    }
    for (auto& v : self_conf.data) v /= (n - 1);

    std::vector<FusionContribution> contribs;
    std::vector<const GridTensor*> warped_ptrs;
    for (int s = 0; s < n; ++s) {
      if (s == t) continue;
      contribs.push_back({&warped[s], &conf[s], s});
      warped_ptrs.push_back(&warped[s]);
    }
    switch (fusion) {
      case FusionMode::kHard: res.fused[t] = fuse_hard(own, self_conf, contribs); break;
      case FusionMode::kSoft: res.fused[t] = fuse_soft(own, self_conf, contribs); break;
      case FusionMode::kStacked: res.fused[t] = fuse_stacked(own, warped_ptrs, params); break;
    }
    res.op_log.push_back({t, kOpFuse, t, -1});
    res.fused_masks[t] = final_mask(res.fused[t]);
  }
  return res;
}

void save_round_result(const std::string& dir, const RoundResult& result) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < result.fused_masks.size(); ++t)
    save_int_grid(dir + "/fused_mask_" + std::to_string(t) + ".bin", "fused_mask",
                  result.fused_masks[t]);
  {
    std::ofstream os(dir + "/ledger.json");
    os << result.ledger.to_json() << "\n";
    if (!os) throw data_error("cannot write ledger under '" + dir + "'");
  }
  {
    std::ofstream os(dir + "/oplog.jsonl");
    os << op_log_to_jsonl(result.op_log);
    if (!os) throw data_error("cannot write op log under '" + dir + "'");
  }
}

}  // namespace swarmseg
