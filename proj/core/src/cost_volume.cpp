#include "swarmseg/cost_volume.hpp"

#include <cmath>
#include <string>

#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {

// Keeps the L2 gradient bounded (and exactly zero) when two fibers coincide;
// shifts the distance itself by less than 1e-15.
constexpr double kL2Eps2 = 1e-30;

double fiber_distance(const double* a, const double* b, int n, DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::kL2: {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double d = a[i] - (b ? b[i] : 0.0);
        s += d * d;
      }
      return std::sqrt(s + kL2Eps2);
    }
    case DistanceMetric::kL1: {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += std::abs(a[i] - (b ? b[i] : 0.0));
      return s;
    }
    case DistanceMetric::kCosine: {
      // Distance to the zero vector is defined as the maximum (1).
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int i = 0; i < n; ++i) {
        const double bv = b ? b[i] : 0.0;
        dot += a[i] * bv;
        na += a[i] * a[i];
        nb += bv * bv;
      }
      if (na <= 0.0 || nb <= 0.0) return 1.0;
      return 1.0 - dot / std::sqrt(na * nb);
    }
  }
  return 0.0;
}

}  // namespace

CorrespondenceVolume compute_volume(const ComparableMap& p, const KeyMap& k,
                                    DistanceMetric metric) {
  if (p.p.channels != k.k.channels)
    throw config_error("compute_volume: channel dims differ (" + std::to_string(p.p.channels) +
                       " vs " + std::to_string(k.k.channels) + ")");
  CorrespondenceVolume v;
  v.target_id = p.target_id;
  v.supporting_id = k.agent_id;
  v.source_rows = k.k.rows;
  v.source_cols = k.k.cols;
  const int src_cells = v.source_rows * v.source_cols;
  const int K = p.p.channels;
  v.logits = GridTensor(p.p.rows, p.p.cols, src_cells + 1);
  for (int r = 0; r < p.p.rows; ++r) {
    for (int c = 0; c < p.p.cols; ++c) {
      const double* pf = p.p.fiber(r, c);
      double* out = v.logits.fiber(r, c);
      // Key fibers are contiguous in memory; this quadruple loop is the
      // pipeline's hot spot.
      const double* kf = k.k.data.data();
      for (int s = 0; s < src_cells; ++s, kf += K) out[s] = -fiber_distance(pf, kf, K, metric);
      out[src_cells] = -fiber_distance(pf, nullptr, K, metric);
    }
  }
  return v;
}

GridTensor no_match_scores(const GridTensor& p, DistanceMetric metric) {
  GridTensor out(p.rows, p.cols, 1);
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c)
      out.at(r, c, 0) = -fiber_distance(p.fiber(r, c), nullptr, p.channels, metric);
  return out;
}

CorrespondenceVolume to_distribution(const CorrespondenceVolume& v, double scale) {
  CorrespondenceVolume out = v;
  out.logits = channel_softmax(v.logits, scale);
  return out;
}

void compute_volume_backward(const GridTensor& dlogits, const GridTensor& p, const GridTensor& k,
                             GridTensor& dp, GridTensor& dk) {
  const int src_cells = k.rows * k.cols;
  const int K = p.channels;
  if (dlogits.rows != p.rows || dlogits.cols != p.cols || dlogits.channels != src_cells + 1)
    throw config_error("compute_volume_backward: upstream shape mismatch");
  if (!dp.same_shape(p) || !dk.same_shape(k))
    throw config_error("compute_volume_backward: gradient buffers mismatch");
  for (int r = 0; r < p.rows; ++r) {
    for (int c = 0; c < p.cols; ++c) {
      const double* pf = p.fiber(r, c);
      double* dpf = dp.fiber(r, c);
      const double* up = dlogits.fiber(r, c);
      const double* kf = k.data.data();
      double* dkf = dk.data.data();
      for (int s = 0; s < src_cells; ++s, kf += K, dkf += K) {
        const double g = up[s];
        if (g == 0.0) continue;
        double sum = kL2Eps2;
        for (int i = 0; i < K; ++i) {
          const double d = pf[i] - kf[i];
          sum += d * d;
        }
        const double inv = 1.0 / std::sqrt(sum);
        for (int i = 0; i < K; ++i) {
          const double d = (pf[i] - kf[i]) * inv;
          dpf[i] -= g * d;
          dkf[i] += g * d;
        }
      }
      const double g = up[src_cells];
      if (g != 0.0) {
        double sum = kL2Eps2;
        for (int i = 0; i < K; ++i) sum += pf[i] * pf[i];
        const double inv = 1.0 / std::sqrt(sum);
        for (int i = 0; i < K; ++i) dpf[i] -= g * pf[i] * inv;
      }
    }
  }
}

}  // namespace swarmseg
