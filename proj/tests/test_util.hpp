#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "swarmseg/grid.hpp"
#include "swarmseg/params.hpp"
#include "swarmseg/rng.hpp"

namespace testutil {

using swarmseg::GridTensor;
using swarmseg::IntGrid;
using swarmseg::ParamBundle;
using swarmseg::Rng;

inline GridTensor random_tensor(int r, int c, int ch, Rng& rng, double lo = -1.0,
                                double hi = 1.0) {
  GridTensor t(r, c, ch);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

inline IntGrid random_mask(int r, int c, int classes, Rng& rng) {
  IntGrid g(r, c);
  for (auto& v : g.data) v = rng.uniform_int(classes);
  return g;
}

// Independent six-nested-loop convolution (zero same-padding), kept free of
// the production kernel's loop order and fast paths.
inline GridTensor conv_oracle(const GridTensor& in, const GridTensor& w, const GridTensor& b,
                              int ksize) {
  const int pad = ksize / 2;
  const int out_ch = w.channels;
  GridTensor out(in.rows, in.cols, out_ch);
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c)
      for (int oc = 0; oc < out_ch; ++oc) {
        double acc = b.size() != 0 ? b.data[oc] : 0.0;
        for (int ky = 0; ky < ksize; ++ky)
          for (int kx = 0; kx < ksize; ++kx)
            for (int ic = 0; ic < in.channels; ++ic) {
              const int ir = r + ky - pad, icc = c + kx - pad;
              if (ir < 0 || ir >= in.rows || icc < 0 || icc >= in.cols) continue;
              acc += in.at(ir, icc, ic) * w.at(ky * ksize + kx, ic, oc);
            }
        out.at(r, c, oc) = acc;
      }
  return out;
}

// Quadruple-loop pairwise L2 volume with the appended no-match channel,
// using plain sqrt (no epsilon).
inline GridTensor volume_oracle(const GridTensor& p, const GridTensor& k) {
  const int cells = k.rows * k.cols;
  GridTensor out(p.rows, p.cols, cells + 1);
  for (int x = 0; x < p.rows; ++x)
    for (int y = 0; y < p.cols; ++y) {
      for (int xs = 0; xs < k.rows; ++xs)
        for (int ys = 0; ys < k.cols; ++ys) {
          double s = 0.0;
          for (int ch = 0; ch < p.channels; ++ch) {
            const double d = p.at(x, y, ch) - k.at(xs, ys, ch);
            s += d * d;
          }
          out.at(x, y, xs * k.cols + ys) = -std::sqrt(s);
        }
      double s = 0.0;
      for (int ch = 0; ch < p.channels; ++ch) s += p.at(x, y, ch) * p.at(x, y, ch);
      out.at(x, y, cells) = -std::sqrt(s);
    }
  return out;
}

struct FdReport {
  double max_rel = 0.0;
  int checked = 0;
  std::string worst;
};

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4});
}

// Central finite differences (step 1e-5, 64-bit) against gradients already
// accumulated in params. Large entries are spot-checked on a seeded sample of
// coordinates; small entries are checked fully.
inline FdReport fd_check_params(ParamBundle& params, const std::function<double()>& loss_fn,
                                const std::vector<std::string>& only = {}, double h = 1e-5,
                                int max_per_entry = 16, std::uint64_t pick_seed = 1234) {
  FdReport report;
  Rng pick(pick_seed);
  for (auto& entry : params.entries()) {
    if (!only.empty()) {
      bool keep = false;
      for (const auto& prefix : only)
        if (entry.name.rfind(prefix, 0) == 0) keep = true;
      if (!keep) continue;
    }
    const int n = static_cast<int>(entry.value.size());
    std::vector<int> idx;
    if (n <= max_per_entry) {
      for (int i = 0; i < n; ++i) idx.push_back(i);
    } else {
      for (int i = 0; i < max_per_entry; ++i) idx.push_back(pick.uniform_int(n));
    }
    for (int i : idx) {
      const double keep = entry.value.data[i];
      entry.value.data[i] = keep + h;
      const double lp = loss_fn();
      entry.value.data[i] = keep - h;
      const double lm = loss_fn();
      entry.value.data[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = entry.grad.data[i];
      const double r = rel_err(a, fd);
      ++report.checked;
      if (r > report.max_rel) {
        report.max_rel = r;
        report.worst = entry.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                       " fd=" + std::to_string(fd);
      }
    }
  }
  return report;
}

// Same check for the gradient of a loss w.r.t. one input tensor.
inline FdReport fd_check_tensor(GridTensor& input, const GridTensor& analytic,
                                const std::function<double()>& loss_fn, double h = 1e-5,
                                int max_coords = 48, std::uint64_t pick_seed = 99) {
  FdReport report;
  Rng pick(pick_seed);
  const int n = static_cast<int>(input.size());
  std::vector<int> idx;
  if (n <= max_coords) {
    for (int i = 0; i < n; ++i) idx.push_back(i);
  } else {
    for (int i = 0; i < max_coords; ++i) idx.push_back(pick.uniform_int(n));
  }
  for (int i : idx) {
    const double keep = input.data[i];
    input.data[i] = keep + h;
    const double lp = loss_fn();
    input.data[i] = keep - h;
    const double lm = loss_fn();
    input.data[i] = keep;
    const double fd = (lp - lm) / (2.0 * h);
    const double r = rel_err(analytic.data[i], fd);
    ++report.checked;
    if (r > report.max_rel) {
      report.max_rel = r;
      report.worst = "input[" + std::to_string(i) + "] analytic=" +
                     std::to_string(analytic.data[i]) + " fd=" + std::to_string(fd);
    }
  }
  return report;
}

inline double max_abs_diff(const GridTensor& a, const GridTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace testutil
