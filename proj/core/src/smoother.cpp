#include "swarmseg/smoother.hpp"

#include <cmath>
#include <string>

#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {
constexpr double kLogFloor = 1e-300;
}

void init_smoother_params(ParamBundle& params, int channels, int hidden, Rng& rng) {
  params.add("smoother.enc1.w", init_conv_kernel(rng, 3, channels, hidden));
  params.add("smoother.enc1.b", zero_bias(hidden));
  params.add("smoother.enc2.w", init_conv_kernel(rng, 3, hidden, hidden));
  params.add("smoother.enc2.b", zero_bias(hidden));
  // Zero-initialized final layer: the residual skip makes smoothing start as
  // the identity map.
  params.add("smoother.dec.w", zero_conv_kernel(3, hidden, channels));
  params.add("smoother.dec.b", zero_bias(channels));
}

SmootherForward smooth_cached(const GridTensor& volume_logits, const ParamBundle& params) {
  const auto& w1 = params.at("smoother.enc1.w").value;
  if (w1.cols != volume_logits.channels)
    throw config_error("smooth: volume has " + std::to_string(volume_logits.channels) +
                       " channels but the smoother was built for " + std::to_string(w1.cols));
  SmootherForward f;
  f.pre1 = conv2d_forward(volume_logits, w1, params.at("smoother.enc1.b").value, 3);
  f.act1 = relu_forward(f.pre1);
  f.pre2 = conv2d_forward(f.act1, params.at("smoother.enc2.w").value,
                          params.at("smoother.enc2.b").value, 3);
  f.act2 = relu_forward(f.pre2);
  f.out = conv2d_forward(f.act2, params.at("smoother.dec.w").value,
                         params.at("smoother.dec.b").value, 3);
  for (std::size_t i = 0; i < f.out.size(); ++i) f.out.data[i] += volume_logits.data[i];
  return f;
}

GridTensor smooth(const GridTensor& volume_logits, const ParamBundle& params) {
  return smooth_cached(volume_logits, params).out;
}

CorrespondenceVolume smooth(const CorrespondenceVolume& volume, const ParamBundle& params) {
  CorrespondenceVolume out = volume;
  out.logits = smooth(volume.logits, params);
  return out;
}

GridTensor smooth_backward(const SmootherForward& fwd, const GridTensor& volume_logits,
                           const GridTensor& dout, ParamBundle& params) {
  auto& wd = params.at("smoother.dec.w");
  auto& bd = params.at("smoother.dec.b");
  GridTensor dact2 = conv2d_backward(dout, fwd.act2, wd.value, 3, wd.grad, bd.grad);
  GridTensor dpre2 = relu_backward(dact2, fwd.pre2);
  auto& w2 = params.at("smoother.enc2.w");
  auto& b2 = params.at("smoother.enc2.b");
  GridTensor dact1 = conv2d_backward(dpre2, fwd.act1, w2.value, 3, w2.grad, b2.grad);
  GridTensor dpre1 = relu_backward(dact1, fwd.pre1);
  auto& w1 = params.at("smoother.enc1.w");
  auto& b1 = params.at("smoother.enc1.b");
  GridTensor dinput = conv2d_backward(dpre1, volume_logits, w1.value, 3, w1.grad, b1.grad);
  for (std::size_t i = 0; i < dinput.size(); ++i) dinput.data[i] += dout.data[i];  // residual
  return dinput;
}

CorrespondenceLoss correspondence_loss(const GridTensor& smoothed_logits, const IntGrid& gt) {
  if (smoothed_logits.rows != gt.rows || smoothed_logits.cols != gt.cols)
    throw config_error("correspondence_loss: grid shapes differ");
  const int channels = smoothed_logits.channels;
  const GridTensor probs = channel_softmax(smoothed_logits);
  CorrespondenceLoss out;
  out.dlogits = GridTensor(gt.rows, gt.cols, channels);
  const double inv = 1.0 / (static_cast<double>(gt.rows) * gt.cols);
  double loss = 0.0;
  for (int r = 0; r < gt.rows; ++r) {
    for (int c = 0; c < gt.cols; ++c) {
      const int target = gt.at(r, c);
      if (target < 0 || target >= channels)
        throw data_error("correspondence_loss: ground-truth index " + std::to_string(target) +
                         " out of range [0," + std::to_string(channels) + ")");
      const double* p = probs.fiber(r, c);
      loss -= std::log(std::max(p[target], kLogFloor));
      double* d = out.dlogits.fiber(r, c);
      for (int ch = 0; ch < channels; ++ch) d[ch] = p[ch] * inv;
      d[target] -= inv;
    }
  }
  out.loss = loss * inv;
  return out;
}

}  // namespace swarmseg
