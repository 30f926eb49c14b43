#pragma once

#include <map>
#include <string>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/params.hpp"
#include "swarmseg/warp_fuse.hpp"
#include "swarmseg/world.hpp"

namespace swarmseg {

// Operation names as they appear in the per-agent operation log.
inline constexpr const char* kOpBackbone = "backbone";
inline constexpr const char* kOpEncodeQuery = "encode_query";
inline constexpr const char* kOpEncodeKey = "encode_key";
inline constexpr const char* kOpQueryKeyTransform = "query_key_transform";
inline constexpr const char* kOpComputeVolume = "compute_volume";
inline constexpr const char* kOpSmooth = "smooth";
inline constexpr const char* kOpExtractWarpPlan = "extract_warp_plan";
inline constexpr const char* kOpWarp = "warp";
inline constexpr const char* kOpFuse = "fuse";

struct OpLogEntry {
  int executor = -1;          // agent that ran the operation
  std::string op;
  int target = -1;            // pair context; -1 when not pair-scoped
  int supporting = -1;
};

std::string op_log_to_jsonl(const std::vector<OpLogEntry>& log);

// Typed wire units. A query broadcast carries H_s*W_s*Q scalars; a response
// carries, per matched cell, the warped distribution patch plus one
// confidence scalar.
struct ResponseCellPayload {
  int cell = 0;               // flat target feature-cell index
  double confidence = 0.0;
  std::vector<double> patch;  // patch_rows*patch_cols*C scalars, row-major
};

struct ResponseMsg {
  int sender = -1;    // supporting agent
  int receiver = -1;  // target agent
  std::vector<ResponseCellPayload> cells;

  long long payload_scalars() const;     // sum of patch scalars (the Eq.-3 term)
  long long confidence_scalars() const;  // one per matched cell
};

struct AgentCounters {
  long long tx_scalars = 0;
  long long rx_scalars = 0;
  long long tx_bytes = 0;
  long long rx_bytes = 0;
};

struct PairLedger {
  int target = -1;
  int supporting = -1;
  int transmitted_cells = 0;
  double selection_factor = 0.0;              // r = cells / (H_s*W_s)
  long long response_payload_scalars = 0;     // cells * patch_rows*patch_cols*C
  long long response_confidence_scalars = 0;  // cells (+1 scalar/cell deviation)
};

struct BandwidthLedger {
  std::vector<AgentCounters> agents;
  std::vector<PairLedger> pairs;
  long long query_scalars_per_broadcast = 0;
  int wire_scalar_bytes = 4;

  std::string to_json() const;
};

struct LedgerPrediction {
  long long target_tx_scalars = 0;        // H_s*W_s*Q
  double per_supporting_rx_scalars = 0;   // H*W*C*r
  long long naive_scalars = 0;            // (N-1)*H*W*3
  double target_tx_fraction = 0;          // of the raw input size H*W*3
};

// Analytic communication-cost model per collaborative round (one target).
LedgerPrediction ledger_predict(int H, int W, int C, int Hs, int Ws, int Q, int N, double r);

// Per-agent operation counts derived from a round's log.
struct ComputeProfile {
  std::map<std::string, std::vector<long long>> counts;  // op -> per-agent count
  std::string to_json() const;
};
ComputeProfile agent_compute_profile(const std::vector<OpLogEntry>& log, int n_agents);

struct RoundResult {
  std::vector<GridTensor> fused;       // per agent as target, H x W x C
  std::vector<IntGrid> fused_masks;    // channel argmax of fused
  std::vector<GridTensor> self_seg;    // each agent's own distribution
  std::vector<WarpPlan> plans;         // [target*N + supporting], empty on diagonal
  BandwidthLedger ledger;
  std::vector<OpLogEntry> op_log;
};

// One synchronized collaborative round: every agent acts simultaneously as a
// target and as a supporting agent. Query encoding runs on the target; key
// encoding, query-key transform, volume, smoothing, plan extraction and
// warping run on the supporting agent; fusion runs back on the target.
// Deterministic given (sample, params, cfg); the parallel schedule computes
// pair pipelines on worker threads with identical results.
RoundResult run_round(const SceneSample& sample, const ParamBundle& params, FusionMode fusion,
                      const EngineConfig& cfg, bool parallel_pairs = false);

// Persist fused masks (binary tensors), the ledger (JSON) and the operation
// log (JSON lines) under dir.
void save_round_result(const std::string& dir, const RoundResult& result);

}  // namespace swarmseg
