#include "swarmseg/conv.hpp"

#include <string>

#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {

std::string shape_str(const GridTensor& t) {
  return std::to_string(t.rows) + "x" + std::to_string(t.cols) + "x" + std::to_string(t.channels);
}

void check_conv_shapes(const GridTensor& input, const GridTensor& kernel,
                       const GridTensor& bias, int ksize, const char* who) {
  if (ksize < 1 || ksize % 2 == 0)
    throw config_error(std::string(who) + ": kernel size must be odd, got " + std::to_string(ksize));
  if (kernel.rows != ksize * ksize)
    throw config_error(std::string(who) + ": kernel tensor " + shape_str(kernel) +
                       " does not match ksize " + std::to_string(ksize));
  if (kernel.cols != input.channels)
    throw config_error(std::string(who) + ": input " + shape_str(input) + " vs kernel " +
                       shape_str(kernel) + " (channel-in mismatch)");
  if (bias.size() != 0 && bias.channels != kernel.channels)
    throw config_error(std::string(who) + ": bias " + shape_str(bias) + " vs kernel " +
                       shape_str(kernel));
}

}  // namespace

GridTensor conv2d_forward(const GridTensor& input, const GridTensor& kernel,
                          const GridTensor& bias, int ksize) {
  check_conv_shapes(input, kernel, bias, ksize, "conv2d_forward");
  const int rows = input.rows, cols = input.cols;
  const int in_ch = input.channels, out_ch = kernel.channels;
  GridTensor out(rows, cols, out_ch);

  if (ksize == 1) {
    // Per-pixel linear map; the hot path for the compression encoders.
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const double* in = input.fiber(r, c);
        double* o = out.fiber(r, c);
        if (bias.size() != 0)
          for (int oc = 0; oc < out_ch; ++oc) o[oc] = bias.data[oc];
        for (int ic = 0; ic < in_ch; ++ic) {
          const double x = in[ic];
          const double* w = kernel.fiber(0, ic);
          for (int oc = 0; oc < out_ch; ++oc) o[oc] += x * w[oc];
        }
      }
    }
    return out;
  }

  const int pad = ksize / 2;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double* o = out.fiber(r, c);
      if (bias.size() != 0)
        for (int oc = 0; oc < out_ch; ++oc) o[oc] = bias.data[oc];
      for (int ky = 0; ky < ksize; ++ky) {
        const int ir = r + ky - pad;
        if (ir < 0 || ir >= rows) continue;
        for (int kx = 0; kx < ksize; ++kx) {
          const int ic_col = c + kx - pad;
          if (ic_col < 0 || ic_col >= cols) continue;
          const double* in = input.fiber(ir, ic_col);
          const int ktap = ky * ksize + kx;
          for (int ic = 0; ic < in_ch; ++ic) {
            const double x = in[ic];
            const double* w = kernel.fiber(ktap, ic);
            for (int oc = 0; oc < out_ch; ++oc) o[oc] += x * w[oc];
          }
        }
      }
    }
  }
  return out;
}

GridTensor conv2d_backward(const GridTensor& upstream, const GridTensor& input,
                           const GridTensor& kernel, int ksize,
                           GridTensor& dkernel, GridTensor& dbias) {
  check_conv_shapes(input, kernel, GridTensor(), ksize, "conv2d_backward");
  if (upstream.rows != input.rows || upstream.cols != input.cols ||
      upstream.channels != kernel.channels)
    throw config_error("conv2d_backward: upstream " + shape_str(upstream) +
                       " does not match forward output " + std::to_string(input.rows) + "x" +
                       std::to_string(input.cols) + "x" + std::to_string(kernel.channels));
  if (!dkernel.same_shape(kernel))
    throw config_error("conv2d_backward: dkernel shape mismatch");

  const int rows = input.rows, cols = input.cols;
  const int in_ch = input.channels, out_ch = kernel.channels;
  const int pad = ksize / 2;
  GridTensor dinput(rows, cols, in_ch);

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double* up = upstream.fiber(r, c);
      if (dbias.size() != 0)
        for (int oc = 0; oc < out_ch; ++oc) dbias.data[oc] += up[oc];
      for (int ky = 0; ky < ksize; ++ky) {
        const int ir = r + ky - pad;
        if (ir < 0 || ir >= rows) continue;
        for (int kx = 0; kx < ksize; ++kx) {
          const int icol = c + kx - pad;
          if (icol < 0 || icol >= cols) continue;
          const double* in = input.fiber(ir, icol);
          double* din = dinput.fiber(ir, icol);
          const int ktap = ky * ksize + kx;
          for (int ic = 0; ic < in_ch; ++ic) {
            const double* w = kernel.fiber(ktap, ic);
            double* dw = dkernel.fiber(ktap, ic);
            const double x = in[ic];
            double acc = 0.0;
            for (int oc = 0; oc < out_ch; ++oc) {
              acc += up[oc] * w[oc];
              dw[oc] += up[oc] * x;
            }
            din[ic] += acc;
          }
        }
      }
    }
  }
  return dinput;
}

GridTensor relu_forward(const GridTensor& input) {
  GridTensor out(input.rows, input.cols, input.channels);
  for (std::size_t i = 0; i < input.size(); ++i)
    out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
  return out;
}

GridTensor relu_backward(const GridTensor& upstream, const GridTensor& input) {
  if (!upstream.same_shape(input)) throw config_error("relu_backward: shape mismatch");
  GridTensor dinput(input.rows, input.cols, input.channels);
  for (std::size_t i = 0; i < input.size(); ++i)
    dinput.data[i] = input.data[i] > 0.0 ? upstream.data[i] : 0.0;
  return dinput;
}

GridTensor patch_average_pool(const GridTensor& input, int out_rows, int out_cols) {
  if (out_rows < 1 || out_cols < 1 || input.rows % out_rows != 0 || input.cols % out_cols != 0)
    throw config_error("patch_average_pool: " + shape_str(input) + " not divisible into " +
                       std::to_string(out_rows) + "x" + std::to_string(out_cols));
  const int pr = input.rows / out_rows, pc = input.cols / out_cols;
  const double inv = 1.0 / (static_cast<double>(pr) * pc);
  GridTensor out(out_rows, out_cols, input.channels);
  for (int r = 0; r < input.rows; ++r) {
    for (int c = 0; c < input.cols; ++c) {
      const double* in = input.fiber(r, c);
      double* o = out.fiber(r / pr, c / pc);
      for (int ch = 0; ch < input.channels; ++ch) o[ch] += in[ch] * inv;
    }
  }
  return out;
}

GridTensor patch_average_pool_backward(const GridTensor& upstream, int in_rows, int in_cols) {
  if (in_rows % upstream.rows != 0 || in_cols % upstream.cols != 0)
    throw config_error("patch_average_pool_backward: dims not divisible");
  const int pr = in_rows / upstream.rows, pc = in_cols / upstream.cols;
  const double inv = 1.0 / (static_cast<double>(pr) * pc);
  GridTensor dinput(in_rows, in_cols, upstream.channels);
  for (int r = 0; r < in_rows; ++r) {
    for (int c = 0; c < in_cols; ++c) {
      const double* up = upstream.fiber(r / pr, c / pc);
      double* d = dinput.fiber(r, c);
      for (int ch = 0; ch < upstream.channels; ++ch) d[ch] = up[ch] * inv;
    }
  }
  return dinput;
}

}  // namespace swarmseg
