#include "swarmseg/metrics.hpp"

#include <fstream>

#include <json.hpp>

#include "swarmseg/errors.hpp"
#include "swarmseg/swarm.hpp"

namespace swarmseg {

using nlohmann::json;

namespace {

struct Confusion {
  int classes;
  std::vector<long long> m;  // classes x classes, row = gt, col = pred
  long long total = 0;

  explicit Confusion(int c) : classes(c), m(static_cast<std::size_t>(c) * c, 0) {}
  void add(int gt, int pred) {
    ++m[static_cast<std::size_t>(gt) * classes + pred];
    ++total;
  }
  long long at(int gt, int pred) const { return m[static_cast<std::size_t>(gt) * classes + pred]; }
};

void fill_from_confusion(const Confusion& cm, double& accuracy, double& mean_iou,
                         std::vector<double>* per_class, std::vector<bool>* present) {
  long long correct = 0;
  for (int c = 0; c < cm.classes; ++c) correct += cm.at(c, c);
  accuracy = cm.total > 0 ? static_cast<double>(correct) / cm.total : 0.0;

  double iou_sum = 0.0;
  int counted = 0;
  for (int c = 0; c < cm.classes; ++c) {
    long long gt_count = 0, pred_count = 0;
    for (int k = 0; k < cm.classes; ++k) {
      gt_count += cm.at(c, k);
      pred_count += cm.at(k, c);
    }
    const bool in_gt = gt_count > 0;
    const long long tp = cm.at(c, c);
    const long long uni = gt_count + pred_count - tp;
    const double iou = uni > 0 ? static_cast<double>(tp) / uni : 0.0;
    if (per_class) (*per_class).push_back(in_gt ? iou : 0.0);
    if (present) (*present).push_back(in_gt);
    if (in_gt) {
      iou_sum += iou;
      ++counted;
    }
  }
  mean_iou = counted > 0 ? iou_sum / counted : 0.0;
}

}  // namespace

MetricsBundle compute_metrics(const IntGrid& pred, const IntGrid& gt,
                              const IntGrid* obstruction_mask, int classes) {
  if (!pred.same_shape(gt)) throw config_error("compute_metrics: pred/gt shapes differ");
  if (obstruction_mask != nullptr && !obstruction_mask->same_shape(gt))
    throw config_error("compute_metrics: obstruction mask shape differs");
  MetricsBundle out;
  Confusion full(classes);
  Confusion obst(classes);
  long long obst_pixels = 0;
  for (int r = 0; r < gt.rows; ++r) {
    for (int c = 0; c < gt.cols; ++c) {
      const int g = gt.at(r, c), p = pred.at(r, c);
      if (g < 0 || g >= classes || p < 0 || p >= classes)
        throw data_error("compute_metrics: class index out of range");
      full.add(g, p);
      if (obstruction_mask != nullptr && obstruction_mask->at(r, c) != 0) {
        obst.add(g, p);
        ++obst_pixels;
      }
    }
  }
  fill_from_confusion(full, out.full_accuracy, out.full_mean_iou, &out.per_class_iou,
                      &out.per_class_present);
  if (obst_pixels > 0) {
    out.has_obstructed = true;
    fill_from_confusion(obst, out.obstructed_accuracy, out.obstructed_mean_iou, nullptr, nullptr);
  }
  return out;
}

MetricsBundle aggregate_metrics(const std::vector<MetricsBundle>& all) {
  if (all.empty()) throw data_error("aggregate_metrics: empty input");
  MetricsBundle agg;
  const int classes = static_cast<int>(all.front().per_class_iou.size());
  agg.per_class_iou.assign(classes, 0.0);
  agg.per_class_present.assign(classes, false);
  std::vector<int> class_counts(classes, 0);
  int obst_count = 0;
  for (const auto& m : all) {
    agg.full_accuracy += m.full_accuracy;
    agg.full_mean_iou += m.full_mean_iou;
    if (m.has_obstructed) {
      agg.obstructed_accuracy += m.obstructed_accuracy;
      agg.obstructed_mean_iou += m.obstructed_mean_iou;
      ++obst_count;
    }
    for (int c = 0; c < classes; ++c) {
      if (m.per_class_present[c]) {
        agg.per_class_iou[c] += m.per_class_iou[c];
        ++class_counts[c];
      }
    }
  }
  const double n = static_cast<double>(all.size());
  agg.full_accuracy /= n;
  agg.full_mean_iou /= n;
  if (obst_count > 0) {
    agg.has_obstructed = true;
    agg.obstructed_accuracy /= obst_count;
    agg.obstructed_mean_iou /= obst_count;
  }
  for (int c = 0; c < classes; ++c) {
    if (class_counts[c] > 0) {
      agg.per_class_iou[c] /= class_counts[c];
      agg.per_class_present[c] = true;
    }
  }
  return agg;
}

std::string metrics_to_json(const MetricsBundle& m) {
  json j;
  j["full_accuracy"] = m.full_accuracy;
  j["full_mean_iou"] = m.full_mean_iou;
  if (m.has_obstructed) {
    j["obstructed_accuracy"] = m.obstructed_accuracy;
    j["obstructed_mean_iou"] = m.obstructed_mean_iou;
  } else {
    j["obstructed_accuracy"] = nullptr;
    j["obstructed_mean_iou"] = nullptr;
  }
  j["per_class_iou"] = json::array();
  for (std::size_t c = 0; c < m.per_class_iou.size(); ++c) {
    if (m.per_class_present[c])
      j["per_class_iou"].push_back(m.per_class_iou[c]);
    else
      j["per_class_iou"].push_back(nullptr);
  }
  return j.dump(2);
}

EvalReport evaluate_checkpoint(const std::vector<SceneSample>& split, const ParamBundle& params,
                               FusionMode fusion, const EngineConfig& cfg) {
  if (split.empty()) throw data_error("evaluate_checkpoint: empty split");
  EvalReport report;
  std::vector<MetricsBundle> fused_all, single_all;
  double r_sum = 0.0;
  long long r_count = 0;
  for (const SceneSample& sample : split) {
    const RoundResult round = run_round(sample, params, fusion, cfg);
    const int n = sample.agent_count();
    for (int t = 0; t < n; ++t) {
      const AgentObservation& a = sample.agents[t];
      fused_all.push_back(
          compute_metrics(round.fused_masks[t], a.gt_mask, &a.obstruction_mask, sample.classes));
      single_all.push_back(compute_metrics(final_mask(round.self_seg[t]), a.gt_mask,
                                           &a.obstruction_mask, sample.classes));
    }
    for (const auto& p : round.ledger.pairs) {
      r_sum += p.selection_factor;
      ++r_count;
    }
    for (const auto& a : round.ledger.agents) {
      report.total_tx_scalars += a.tx_scalars;
      report.total_tx_bytes += a.tx_bytes;
    }
  }
  report.fused = aggregate_metrics(fused_all);
  report.single_agent = aggregate_metrics(single_all);
  report.mean_selection_factor = r_count > 0 ? r_sum / r_count : 0.0;
  report.samples = static_cast<int>(split.size());
  return report;
}

std::string eval_report_to_json(const EvalReport& r) {
  json j;
  j["samples"] = r.samples;
  j["fused"] = json::parse(metrics_to_json(r.fused));
  j["single_agent"] = json::parse(metrics_to_json(r.single_agent));
  j["bandwidth"] = {{"mean_selection_factor", r.mean_selection_factor},
                    {"total_tx_scalars", r.total_tx_scalars},
                    {"total_tx_bytes", r.total_tx_bytes}};
  return j.dump(2);
}

void write_mask_pgm(const std::string& path, const IntGrid& mask, int classes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw data_error("cannot open '" + path + "' for writing");
  os << "P5\n" << mask.cols << " " << mask.rows << "\n255\n";
  const int denom = classes > 1 ? classes - 1 : 1;
  for (int v : mask.data) {
    const unsigned char b = static_cast<unsigned char>((255 * v) / denom);
    os.put(static_cast<char>(b));
  }
  if (!os) throw data_error("write failed on '" + path + "'");
}

}  // namespace swarmseg
