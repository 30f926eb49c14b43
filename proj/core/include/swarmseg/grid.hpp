#pragma once

#include <cstddef>
#include <vector>

namespace swarmseg {

// Rank-3 grid of real scalars, row-major (row, col, channel). The one numeric
// container: images, feature maps, correspondence volumes and distributions
// are all GridTensors behind thin semantic wrappers.
struct GridTensor {
  int rows = 0;
  int cols = 0;
  int channels = 0;
  std::vector<double> data;

  GridTensor() = default;
  GridTensor(int r, int c, int ch, double fill = 0.0)
      : rows(r), cols(c), channels(ch),
        data(static_cast<std::size_t>(r) * c * ch, fill) {}

  std::size_t size() const { return data.size(); }

  std::size_t idx(int r, int c, int ch) const {
    return (static_cast<std::size_t>(r) * cols + c) * channels + ch;
  }

  double& at(int r, int c, int ch) { return data[idx(r, c, ch)]; }
  double at(int r, int c, int ch) const { return data[idx(r, c, ch)]; }

  // Contiguous channel fiber at one spatial cell.
  double* fiber(int r, int c) { return data.data() + idx(r, c, 0); }
  const double* fiber(int r, int c) const { return data.data() + idx(r, c, 0); }

  bool same_shape(const GridTensor& o) const {
    return rows == o.rows && cols == o.cols && channels == o.channels;
  }

  void fill(double v) { data.assign(data.size(), v); }
};

// Rank-2 integer grid: class maps, match indices, boolean masks (0/1).
struct IntGrid {
  int rows = 0;
  int cols = 0;
  std::vector<int> data;

  IntGrid() = default;
  IntGrid(int r, int c, int fill = 0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  std::size_t size() const { return data.size(); }
  int& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  int at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool same_shape(const IntGrid& o) const { return rows == o.rows && cols == o.cols; }
};

struct ChannelArgMax {
  IntGrid index;      // argmax channel per cell, ties to the lowest index
  GridTensor value;   // rows x cols x 1, the max value per cell
};

// Per-fiber softmax across the channel dimension, computed with
// max-subtraction. Optional scale multiplies logits before exponentiation.
GridTensor channel_softmax(const GridTensor& t, double scale = 1.0);

// Backprop through channel_softmax: given probabilities and dL/dprobs,
// produce dL/dlogits.
GridTensor channel_softmax_backward(const GridTensor& probs, const GridTensor& dprobs);

ChannelArgMax channel_argmax_max(const GridTensor& t);

// True iff every scalar is finite.
bool all_finite(const GridTensor& t);

}  // namespace swarmseg
