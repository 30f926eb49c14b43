#pragma once

#include <string>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/params.hpp"
#include "swarmseg/world.hpp"

namespace swarmseg {

struct LossBreakdown {
  double seg_self = 0.0;   // sum of per-agent segmentation losses
  double seg_fused = 0.0;  // fused-output segmentation loss (all targets)
  double corr = 0.0;       // lambda-weighted correspondence loss (all pairs)
  double total = 0.0;      // seg_self + seg_fused + corr
};

struct HistoryRow {
  int epoch = 0;
  std::string term;
  double value = 0.0;
};

struct TrainHistory {
  std::vector<HistoryRow> rows;
};

struct TrainResult {
  ParamBundle params;
  TrainHistory history;
};

// Every trainable subsystem: backbone, query/key encoders, query-key
// transform, smoother, stacked fusion kernel, baseline comparators.
ParamBundle init_all_params(const EngineConfig& cfg, std::uint64_t seed);

// Denoising augmentation: replace a fraction of target fibers with uniform
// noise in a fixed logit range. Returns the mask of replaced cells; replaced
// fibers are constants with respect to the parameters.
IntGrid corrupt_volume_fibers(GridTensor& volume_logits, double fraction, Rng& rng);

// One sample's losses with gradient accumulation into params. corrupt_salt
// seeds the volume-corruption draw (denoising augmentation), so a given
// (sample, params, salt) triple is pure. Non-finite losses raise a data error
// naming the offending term.
LossBreakdown accumulate_sample_gradients(const SceneSample& sample, ParamBundle& params,
                                          const EngineConfig& cfg, std::uint64_t corrupt_salt);

// Same pipeline, losses only (no gradient writes).
LossBreakdown sample_losses(const SceneSample& sample, ParamBundle& params,
                            const EngineConfig& cfg, std::uint64_t corrupt_salt);

// Centralized end-to-end training (per-agent seg loss + fused seg loss +
// lambda * correspondence loss, SGD per sample), then auxiliary passes that
// fit the stacked-fusion kernel and the baseline comparators against the
// frozen backbone. Deterministic given (dataset, cfg).
TrainResult train(const std::vector<SceneSample>& dataset, const EngineConfig& cfg);

void train_auxiliary_heads(const std::vector<SceneSample>& dataset, ParamBundle& params,
                           const EngineConfig& cfg, TrainHistory* history);

// CSV rows: epoch,term,value
void save_history_csv(const std::string& path, const TrainHistory& history);

}  // namespace swarmseg
