#include <doctest.h>

#include <cmath>

#include "swarmseg/errors.hpp"
#include "swarmseg/smoother.hpp"
#include "test_util.hpp"

using namespace swarmseg;
using namespace testutil;

TEST_SUITE_BEGIN("smoother");

TEST_CASE("smooth preserves the volume shape") {
  Rng rng(41);
  const int channels = 17;
  ParamBundle params;
  init_smoother_params(params, channels, 12, rng);
  const GridTensor vol = random_tensor(4, 4, channels, rng);
  const GridTensor out = smooth(vol, params);
  CHECK(out.rows == 4);
  CHECK(out.cols == 4);
  CHECK(out.channels == channels);
}

TEST_CASE("zero-initialized final layer makes smoothing the exact identity") {
  Rng rng(42);
  const int channels = 17;
  ParamBundle params;
  init_smoother_params(params, channels, 12, rng);
  const GridTensor vol = random_tensor(5, 3, channels, rng);
  const GridTensor out = smooth(vol, params);
  CHECK(max_abs_diff(out, vol) == 0.0);
}

TEST_CASE("channel mismatch with trained params raises a configuration error") {
  Rng rng(43);
  ParamBundle params;
  init_smoother_params(params, 17, 12, rng);
  const GridTensor vol = random_tensor(4, 4, 10, rng);
  CHECK_THROWS_AS(smooth(vol, params), config_error);
}

TEST_CASE("correspondence_loss: confident correct logits score near zero") {
  const int channels = 17;
  GridTensor logits(2, 2, channels, 0.0);
  IntGrid gt(2, 2);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      gt.at(r, c) = r * 2 + c;
      logits.at(r, c, gt.at(r, c)) = 50.0;  // large margin
    }
  const CorrespondenceLoss l = correspondence_loss(logits, gt);
  CHECK(l.loss == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("correspondence_loss: uniform logits over an 8x8 source cost ln 65 per cell") {
  const int channels = 65;
  const GridTensor logits(3, 3, channels, 0.0);
  const IntGrid gt(3, 3, 64);  // no-match is a legitimate class
  const CorrespondenceLoss l = correspondence_loss(logits, gt);
  CHECK(l.loss == doctest::Approx(std::log(65.0)).epsilon(1e-12));
}

TEST_CASE("correspondence_loss: out-of-range ground truth raises a data error") {
  const GridTensor logits(2, 2, 5, 0.0);
  IntGrid gt(2, 2, 5);  // max legal index is 4
  CHECK_THROWS_AS(correspondence_loss(logits, gt), data_error);
}

TEST_CASE("smoother + correspondence loss gradients pass the finite-difference check") {
  Rng rng(44);
  const int channels = 10;  // 3x3 source + no-match
  ParamBundle params;
  init_smoother_params(params, channels, 8, rng);
  // Give the zero-initialized decoder a nonzero state so its gradient paths engage.
  for (auto& v : params.at("smoother.dec.w").value.data) v = rng.uniform(-0.05, 0.05);
  GridTensor vol = random_tensor(3, 3, channels, rng);
  const IntGrid gt = random_mask(3, 3, channels, rng);
  auto loss_fn = [&]() { return correspondence_loss(smooth(vol, params), gt).loss; };
  const SmootherForward f = smooth_cached(vol, params);
  const CorrespondenceLoss cl = correspondence_loss(f.out, gt);
  const GridTensor dvol = smooth_backward(f, vol, cl.dlogits, params);
  auto rep = fd_check_params(params, loss_fn, {"smoother."}, 1e-5, 24);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
  rep = fd_check_tensor(vol, dvol, loss_fn);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("training progress: denoising a shifted-identity pattern halves the loss") {
  // Tiny synthetic task: volumes whose true matching is a fixed +1 column
  // shift, 30% of fibers replaced by noise. 200 epochs of SGD on the smoother
  // alone must reach half the initial loss (spec pins <= 50%).
  Rng rng(45);
  const int side = 4;
  const int cells = side * side;
  const int channels = cells + 1;
  ParamBundle params;
  init_smoother_params(params, channels, 16, rng);

  auto make_example = [&](Rng& r, GridTensor& vol, IntGrid& gt) {
    vol = GridTensor(side, side, channels, 0.0);
    gt = IntGrid(side, side);
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        const int m = j + 1 < side ? i * side + (j + 1) : cells;  // shift or no-match
        gt.at(i, j) = m;
        for (int ch = 0; ch < channels; ++ch) vol.at(i, j, ch) = -2.0 + 0.1 * r.uniform();
        vol.at(i, j, m) = -0.2;
        if (r.coin(0.3)) {  // corrupted fiber
          for (int ch = 0; ch < channels; ++ch) vol.at(i, j, ch) = r.uniform(-2.0, 0.0);
        }
      }
  };

  std::vector<GridTensor> vols(6);
  std::vector<IntGrid> gts(6);
  Rng data_rng(46);
  for (int i = 0; i < 6; ++i) make_example(data_rng, vols[i], gts[i]);

  double initial = 0.0;
  for (int i = 0; i < 6; ++i) initial += correspondence_loss(smooth(vols[i], params), gts[i]).loss;

  for (int epoch = 0; epoch < 200; ++epoch) {
    for (int i = 0; i < 6; ++i) {
      const SmootherForward f = smooth_cached(vols[i], params);
      const CorrespondenceLoss cl = correspondence_loss(f.out, gts[i]);
      smooth_backward(f, vols[i], cl.dlogits, params);
      params.sgd_step(0.2);
    }
  }
  double trained = 0.0;
  for (int i = 0; i < 6; ++i) trained += correspondence_loss(smooth(vols[i], params), gts[i]).loss;
  CHECK(trained <= 0.5 * initial);
}

TEST_SUITE_END();
