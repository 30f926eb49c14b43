#include "swarmseg/grid.hpp"

#include <algorithm>
#include <cmath>

#include "swarmseg/errors.hpp"

namespace swarmseg {

GridTensor channel_softmax(const GridTensor& t, double scale) {
  if (t.channels < 1) throw config_error("channel_softmax: tensor has no channels");
  GridTensor out(t.rows, t.cols, t.channels);
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      const double* in = t.fiber(r, c);
      double* o = out.fiber(r, c);
      double m = in[0] * scale;
      for (int ch = 1; ch < t.channels; ++ch) m = std::max(m, in[ch] * scale);
      double sum = 0.0;
      for (int ch = 0; ch < t.channels; ++ch) {
        o[ch] = std::exp(in[ch] * scale - m);
        sum += o[ch];
      }
      const double inv = 1.0 / sum;
      for (int ch = 0; ch < t.channels; ++ch) o[ch] *= inv;
    }
  }
  return out;
}

GridTensor channel_softmax_backward(const GridTensor& probs, const GridTensor& dprobs) {
  if (!probs.same_shape(dprobs))
    throw config_error("channel_softmax_backward: shape mismatch");
  GridTensor dlogits(probs.rows, probs.cols, probs.channels);
  for (int r = 0; r < probs.rows; ++r) {
    for (int c = 0; c < probs.cols; ++c) {
      const double* p = probs.fiber(r, c);
      const double* dp = dprobs.fiber(r, c);
      double* dl = dlogits.fiber(r, c);
      double dot = 0.0;
      for (int ch = 0; ch < probs.channels; ++ch) dot += p[ch] * dp[ch];
      for (int ch = 0; ch < probs.channels; ++ch) dl[ch] = p[ch] * (dp[ch] - dot);
    }
  }
  return dlogits;
}

ChannelArgMax channel_argmax_max(const GridTensor& t) {
  if (t.channels < 1) throw config_error("channel_argmax_max: tensor has no channels");
  ChannelArgMax out;
  out.index = IntGrid(t.rows, t.cols);
  out.value = GridTensor(t.rows, t.cols, 1);
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      const double* f = t.fiber(r, c);
      int best = 0;
      double bestv = f[0];
      for (int ch = 1; ch < t.channels; ++ch) {
        if (f[ch] > bestv) {  // strict: ties keep the lowest channel index
          bestv = f[ch];
          best = ch;
        }
      }
      out.index.at(r, c) = best;
      out.value.at(r, c, 0) = bestv;
    }
  }
  return out;
}

bool all_finite(const GridTensor& t) {
  for (double v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace swarmseg
