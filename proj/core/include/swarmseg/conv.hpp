#pragma once

#include "swarmseg/grid.hpp"

namespace swarmseg {

// 2D convolution with zero same-padding. Kernel tensor layout:
// rows = ksize*ksize (ky*ksize + kx), cols = in channels, channels = out
// channels. Bias is 1x1xout (pass an empty tensor for no bias). ksize must be
// odd; output spatial dims equal input spatial dims.
GridTensor conv2d_forward(const GridTensor& input, const GridTensor& kernel,
                          const GridTensor& bias, int ksize);

// Analytic backward pass. Returns dL/dinput; accumulates kernel and bias
// gradients into dkernel / dbias (dbias may be empty to skip).
GridTensor conv2d_backward(const GridTensor& upstream, const GridTensor& input,
                           const GridTensor& kernel, int ksize,
                           GridTensor& dkernel, GridTensor& dbias);

GridTensor relu_forward(const GridTensor& input);
// dL/dinput from dL/doutput and the forward input.
GridTensor relu_backward(const GridTensor& upstream, const GridTensor& input);

// Average-pool non-overlapping (rows/out_rows x cols/out_cols) patches.
// Input dims must be divisible by the output dims.
GridTensor patch_average_pool(const GridTensor& input, int out_rows, int out_cols);
GridTensor patch_average_pool_backward(const GridTensor& upstream, int in_rows, int in_cols);

}  // namespace swarmseg
