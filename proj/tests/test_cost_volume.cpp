#include <doctest.h>

#include <cmath>

#include "swarmseg/cost_volume.hpp"
#include "swarmseg/errors.hpp"
#include "test_util.hpp"

using namespace swarmseg;
using namespace testutil;

TEST_SUITE_BEGIN("cost_volume");

TEST_CASE("identical fibers score the maximum possible logit (zero)") {
  Rng rng(21);
  GridTensor pf = random_tensor(2, 2, 4, rng);
  GridTensor kf = random_tensor(2, 2, 4, rng);
  for (int ch = 0; ch < 4; ++ch) kf.at(0, 0, ch) = pf.at(0, 0, ch);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  CHECK(v.logits.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  for (int ch = 0; ch < v.logits.channels; ++ch) CHECK(v.logits.at(0, 0, ch) <= 1e-15);
}

TEST_CASE("shape: 8x8 target and source grids give an 8x8x65 volume") {
  Rng rng(22);
  const GridTensor pf = random_tensor(8, 8, 4, rng);
  const GridTensor kf = random_tensor(8, 8, 4, rng);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  CHECK(v.logits.rows == 8);
  CHECK(v.logits.cols == 8);
  CHECK(v.logits.channels == 65);
  CHECK(v.no_match_channel() == 64);
}

TEST_CASE("random 3x3 grids match the quadruple-loop oracle within 1e-12") {
  Rng rng(23);
  const GridTensor pf = random_tensor(3, 3, 4, rng);
  const GridTensor kf = random_tensor(3, 3, 4, rng);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  const GridTensor expect = volume_oracle(pf, kf);
  CHECK(max_abs_diff(v.logits, expect) < 1e-12);
}

TEST_CASE("channel mismatch raises a configuration error") {
  Rng rng(24);
  const GridTensor pf = random_tensor(2, 2, 4, rng);
  const GridTensor kf = random_tensor(2, 2, 5, rng);
  CHECK_THROWS_AS(compute_volume({pf, 0, 1}, {kf, 1}), config_error);
}

TEST_CASE("no_match_scores: zero fiber ties the best possible match") {
  GridTensor pf(1, 1, 3, 0.0);
  const GridTensor nm = no_match_scores(pf);
  CHECK(nm.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("no_match_scores: (3,4) fiber scores -5 under L2") {
  GridTensor pf(1, 1, 2);
  pf.data = {3.0, 4.0};
  const GridTensor nm = no_match_scores(pf);
  CHECK(nm.at(0, 0, 0) == doctest::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("no_match_scores: random fibers match the norm oracle, and fill the last channel") {
  Rng rng(25);
  const GridTensor pf = random_tensor(3, 4, 6, rng);
  const GridTensor nm = no_match_scores(pf);
  const GridTensor kf = random_tensor(2, 2, 6, rng);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) {
      double s = 0.0;
      for (int ch = 0; ch < 6; ++ch) s += pf.at(r, c, ch) * pf.at(r, c, ch);
      CHECK(nm.at(r, c, 0) == doctest::Approx(-std::sqrt(s)).epsilon(1e-12));
      CHECK(v.logits.at(r, c, v.no_match_channel()) ==
            doctest::Approx(nm.at(r, c, 0)).epsilon(1e-12));
    }
}

TEST_CASE("to_distribution: fibers sum to one; scale sharpens deterministically") {
  Rng rng(26);
  const GridTensor pf = random_tensor(3, 3, 4, rng);
  const GridTensor kf = random_tensor(3, 3, 4, rng);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  const CorrespondenceVolume d = to_distribution(v);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (int ch = 0; ch < d.logits.channels; ++ch) sum += d.logits.at(r, c, ch);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  const CorrespondenceVolume sharp = to_distribution(v, 4.0);
  const auto am = channel_argmax_max(d.logits);
  const auto am_sharp = channel_argmax_max(sharp.logits);
  CHECK(am.index.data == am_sharp.index.data);  // scale preserves the argmax
}

TEST_CASE("exact-match dominance: a unique matching fiber wins the argmax") {
  Rng rng(27);
  GridTensor pf = random_tensor(3, 3, 4, rng, 0.5, 1.5);
  GridTensor kf = random_tensor(3, 3, 4, rng, -1.5, -0.5);  // far from p everywhere
  const int si = 1, sj = 2;
  for (int ch = 0; ch < 4; ++ch) kf.at(si, sj, ch) = pf.at(0, 0, ch);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  const auto am = channel_argmax_max(v.logits);
  CHECK(am.index.at(0, 0) == si * 3 + sj);
}

TEST_CASE("permutation equivariance: permuting source cells permutes channels") {
  Rng rng(28);
  const GridTensor pf = random_tensor(2, 2, 3, rng);
  GridTensor kf = random_tensor(2, 3, 3, rng);
  // Reverse the source cells.
  GridTensor krev(2, 3, 3);
  const int cells = 6;
  for (int s = 0; s < cells; ++s)
    for (int ch = 0; ch < 3; ++ch)
      krev.data[static_cast<std::size_t>(s) * 3 + ch] =
          kf.data[static_cast<std::size_t>(cells - 1 - s) * 3 + ch];
  const CorrespondenceVolume a = compute_volume({pf, 0, 1}, {kf, 1});
  const CorrespondenceVolume b = compute_volume({pf, 0, 1}, {krev, 1});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      for (int s = 0; s < cells; ++s)
        CHECK(a.logits.at(r, c, s) == b.logits.at(r, c, cells - 1 - s));
      CHECK(a.logits.at(r, c, cells) == b.logits.at(r, c, cells));  // no-match pinned
    }
}

TEST_CASE("logit bounds: everything <= 0; no-match hits 0 only for the zero fiber") {
  Rng rng(29);
  const GridTensor pf = random_tensor(4, 4, 5, rng);
  const GridTensor kf = random_tensor(4, 4, 5, rng);
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  for (double x : v.logits.data) CHECK(x <= 0.0);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      double norm = 0.0;
      for (int ch = 0; ch < 5; ++ch) norm += pf.at(r, c, ch) * pf.at(r, c, ch);
      if (norm > 1e-12) CHECK(v.logits.at(r, c, v.no_match_channel()) < 0.0);
    }
}

TEST_CASE("compute_volume_backward agrees with finite differences") {
  Rng rng(30);
  GridTensor pf = random_tensor(2, 3, 4, rng);
  GridTensor kf = random_tensor(2, 2, 4, rng);
  const GridTensor coeff = random_tensor(2, 3, 5, rng);
  auto loss_fn = [&]() {
    const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
    double l = 0.0;
    for (std::size_t i = 0; i < v.logits.size(); ++i) l += coeff.data[i] * v.logits.data[i];
    return l;
  };
  const CorrespondenceVolume v = compute_volume({pf, 0, 1}, {kf, 1});
  GridTensor dl(2, 3, 5);
  dl.data = coeff.data;
  GridTensor dp(2, 3, 4, 0.0), dk(2, 2, 4, 0.0);
  compute_volume_backward(dl, pf, kf, dp, dk);
  auto rep = fd_check_tensor(pf, dp, loss_fn);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
  rep = fd_check_tensor(kf, dk, loss_fn);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("alternate metrics: L1 and cosine still satisfy the zero-distance identity") {
  Rng rng(31);
  GridTensor pf = random_tensor(2, 2, 3, rng, 0.1, 1.0);
  GridTensor kf = pf;
  const CorrespondenceVolume l1 = compute_volume({pf, 0, 1}, {kf, 1}, DistanceMetric::kL1);
  const CorrespondenceVolume cos = compute_volume({pf, 0, 1}, {kf, 1}, DistanceMetric::kCosine);
  CHECK(l1.logits.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cos.logits.at(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  for (double x : l1.logits.data) CHECK(x <= 0.0);
}

TEST_SUITE_END();
