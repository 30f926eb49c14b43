#pragma once

#include "swarmseg/codec.hpp"
#include "swarmseg/grid.hpp"

namespace swarmseg {

enum class DistanceMetric { kL2, kL1, kCosine };

// Dense matching tensor between one target/supporting pair. Channel
// c < source_rows*source_cols decodes to source cell (c / source_cols,
// c % source_cols); the last channel is the no-match score.
struct CorrespondenceVolume {
  GridTensor logits;  // H_T x W_T x (H_S*W_S + 1)
  int target_id = -1;
  int supporting_id = -1;
  int source_rows = 0;
  int source_cols = 0;

  int no_match_channel() const { return source_rows * source_cols; }
};

// logits[x,y,c] = -d(p[x,y], k[x',y']) for every source cell, with the
// no-match channel -d(p[x,y], 0) appended. All entries are <= 0.
CorrespondenceVolume compute_volume(const ComparableMap& p, const KeyMap& k,
                                    DistanceMetric metric = DistanceMetric::kL2);

// The no-match column on its own: -d(p[x,y], 0) per cell (rows x cols x 1).
GridTensor no_match_scores(const GridTensor& p, DistanceMetric metric = DistanceMetric::kL2);

// Softmax across channels; optional temperature-style scale on the logits.
CorrespondenceVolume to_distribution(const CorrespondenceVolume& v, double scale = 1.0);

// Backprop through the L2 volume (the training metric): accumulates dL/dp and
// dL/dk from dL/dlogits over all channels including no-match.
void compute_volume_backward(const GridTensor& dlogits, const GridTensor& p, const GridTensor& k,
                             GridTensor& dp, GridTensor& dk);

}  // namespace swarmseg
