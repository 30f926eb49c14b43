#pragma once

#include <string>
#include <vector>

#include "swarmseg/config.hpp"
#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"
#include "swarmseg/world.hpp"

namespace swarmseg {

struct MetricsBundle {
  double full_accuracy = 0.0;
  double full_mean_iou = 0.0;
  bool has_obstructed = false;  // false when the obstruction mask is empty
  double obstructed_accuracy = 0.0;
  double obstructed_mean_iou = 0.0;
  std::vector<double> per_class_iou;      // full image
  std::vector<bool> per_class_present;    // class appears in ground truth
};

// Full-image metrics over all pixels; obstructed metrics restricted to mask
// pixels (reported absent, not zero, when the mask is empty). Mean IoU is the
// unweighted mean over classes present in the ground truth.
MetricsBundle compute_metrics(const IntGrid& pred, const IntGrid& gt,
                              const IntGrid* obstruction_mask, int classes);

// Macro-average across samples; obstructed means skip absent entries.
MetricsBundle aggregate_metrics(const std::vector<MetricsBundle>& all);

std::string metrics_to_json(const MetricsBundle& m);

struct EvalReport {
  MetricsBundle fused;              // the collaborative pipeline's fused masks
  MetricsBundle single_agent;       // each agent's own (unfused) prediction
  double mean_selection_factor = 0.0;
  long long total_tx_scalars = 0;
  long long total_tx_bytes = 0;
  int samples = 0;
};

// Run the collaborative round over every sample (every agent scored as a
// target) and aggregate metrics plus a bandwidth summary.
EvalReport evaluate_checkpoint(const std::vector<SceneSample>& split, const ParamBundle& params,
                               FusionMode fusion, const EngineConfig& cfg);

std::string eval_report_to_json(const EvalReport& r);

// Dump a mask as a plain PGM image (class index scaled into 0..255).
void write_mask_pgm(const std::string& path, const IntGrid& mask, int classes);

}  // namespace swarmseg
