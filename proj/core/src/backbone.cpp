#include "swarmseg/backbone.hpp"

#include <cmath>
#include <string>

#include "swarmseg/conv.hpp"
#include "swarmseg/errors.hpp"

namespace swarmseg {

namespace {
constexpr int kTrunkHidden = 16;
constexpr double kLogFloor = 1e-300;
}  // namespace

void init_backbone_params(ParamBundle& params, const ModelConfig& model, int classes, Rng& rng) {
  params.add("backbone.conv1.w", init_conv_kernel(rng, 1, 3, kTrunkHidden));
  params.add("backbone.conv1.b", zero_bias(kTrunkHidden));
  params.add("backbone.conv2.w", init_conv_kernel(rng, 1, kTrunkHidden, kTrunkHidden));
  params.add("backbone.conv2.b", zero_bias(kTrunkHidden));
  params.add("backbone.conv3.w", init_conv_kernel(rng, 1, kTrunkHidden, model.feature_dim));
  params.add("backbone.conv3.b", zero_bias(model.feature_dim));
  params.add("backbone.head.w", init_conv_kernel(rng, 1, model.feature_dim, classes));
  params.add("backbone.head.b", zero_bias(classes));
}

BackboneForward backbone_forward_cached(const GridTensor& observation, const ParamBundle& params,
                                        const ViewConfig& view) {
  if (observation.channels != 3)
    throw config_error("backbone_forward: observation must have 3 channels, got " +
                       std::to_string(observation.channels));
  if (observation.rows != view.rows || observation.cols != view.cols)
    throw config_error("backbone_forward: observation dims do not match the view config");
  BackboneForward f;
  f.pre1 = conv2d_forward(observation, params.at("backbone.conv1.w").value,
                          params.at("backbone.conv1.b").value, 1);
  f.act1 = relu_forward(f.pre1);
  f.pre2 = conv2d_forward(f.act1, params.at("backbone.conv2.w").value,
                          params.at("backbone.conv2.b").value, 1);
  f.act2 = relu_forward(f.pre2);
  f.pre3 = conv2d_forward(f.act2, params.at("backbone.conv3.w").value,
                          params.at("backbone.conv3.b").value, 1);
  f.act3 = relu_forward(f.pre3);
  f.logits = conv2d_forward(f.act3, params.at("backbone.head.w").value,
                            params.at("backbone.head.b").value, 1);
  f.seg = channel_softmax(f.logits);
  f.features = patch_average_pool(f.act3, view.feat_rows, view.feat_cols);
  return f;
}

BackboneOutput backbone_forward(const GridTensor& observation, const ParamBundle& params,
                                const ViewConfig& view) {
  BackboneForward f = backbone_forward_cached(observation, params, view);
  return {std::move(f.features), std::move(f.seg)};
}

void backbone_backward(const BackboneForward& fwd, const GridTensor& observation,
                       const GridTensor& dlogits, const GridTensor& dfeatures,
                       ParamBundle& params) {
  GridTensor dact3(fwd.act3.rows, fwd.act3.cols, fwd.act3.channels, 0.0);
  if (dlogits.size() != 0) {
    auto& head_w = params.at("backbone.head.w");
    auto& head_b = params.at("backbone.head.b");
    GridTensor d = conv2d_backward(dlogits, fwd.act3, head_w.value, 1, head_w.grad, head_b.grad);
    for (std::size_t i = 0; i < dact3.size(); ++i) dact3.data[i] += d.data[i];
  }
  if (dfeatures.size() != 0) {
    GridTensor d = patch_average_pool_backward(dfeatures, fwd.act3.rows, fwd.act3.cols);
    for (std::size_t i = 0; i < dact3.size(); ++i) dact3.data[i] += d.data[i];
  }
  GridTensor dpre3 = relu_backward(dact3, fwd.pre3);
  auto& w3 = params.at("backbone.conv3.w");
  auto& b3 = params.at("backbone.conv3.b");
  GridTensor dact2 = conv2d_backward(dpre3, fwd.act2, w3.value, 1, w3.grad, b3.grad);
  GridTensor dpre2 = relu_backward(dact2, fwd.pre2);
  auto& w2 = params.at("backbone.conv2.w");
  auto& b2 = params.at("backbone.conv2.b");
  GridTensor dact1 = conv2d_backward(dpre2, fwd.act1, w2.value, 1, w2.grad, b2.grad);
  GridTensor dpre1 = relu_backward(dact1, fwd.pre1);
  auto& w1 = params.at("backbone.conv1.w");
  auto& b1 = params.at("backbone.conv1.b");
  conv2d_backward(dpre1, observation, w1.value, 1, w1.grad, b1.grad);
}

SegLoss seg_loss(const GridTensor& seg_distribution, const IntGrid& gt_mask,
                 const IntGrid* ignore_mask) {
  if (seg_distribution.rows != gt_mask.rows || seg_distribution.cols != gt_mask.cols)
    throw config_error("seg_loss: prediction and ground truth shapes differ");
  if (ignore_mask != nullptr && !gt_mask.same_shape(*ignore_mask))
    throw config_error("seg_loss: ignore mask shape mismatch");
  const int C = seg_distribution.channels;
  long long count = 0;
  for (int r = 0; r < gt_mask.rows; ++r)
    for (int c = 0; c < gt_mask.cols; ++c)
      if (ignore_mask == nullptr || ignore_mask->at(r, c) == 0) ++count;
  if (count == 0) throw data_error("seg_loss: every pixel is ignored");

  SegLoss out;
  out.dlogits = GridTensor(seg_distribution.rows, seg_distribution.cols, C, 0.0);
  const double inv = 1.0 / static_cast<double>(count);
  double loss = 0.0;
  for (int r = 0; r < gt_mask.rows; ++r) {
    for (int c = 0; c < gt_mask.cols; ++c) {
      if (ignore_mask != nullptr && ignore_mask->at(r, c) != 0) continue;
      const int cls = gt_mask.at(r, c);
      if (cls < 0 || cls >= C)
        throw data_error("seg_loss: ground-truth class " + std::to_string(cls) +
                         " out of range [0," + std::to_string(C) + ")");
      const double* p = seg_distribution.fiber(r, c);
      loss -= std::log(std::max(p[cls], kLogFloor));
      double* d = out.dlogits.fiber(r, c);
      for (int ch = 0; ch < C; ++ch) d[ch] = p[ch] * inv;
      d[cls] -= inv;
    }
  }
  out.loss = loss * inv;
  return out;
}

}  // namespace swarmseg
