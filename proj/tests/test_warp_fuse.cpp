#include <doctest.h>

#include <cmath>

#include "swarmseg/errors.hpp"
#include "swarmseg/warp_fuse.hpp"
#include "test_util.hpp"

using namespace swarmseg;
using namespace testutil;

namespace {

// 2x2 feature grid over 4x4 pixels, 3 classes.
constexpr int kFeat = 2, kPix = 4, kC = 3;

GridTensor labeled_seg(int tag) {
  // Distinct fiber per pixel so copies are traceable: channel 0 encodes the
  // pixel id, the rest make it a distribution.
  GridTensor seg(kPix, kPix, kC);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      const double id = (tag * 100 + r * kPix + c) / 1000.0;
      seg.at(r, c, 0) = id;
      seg.at(r, c, 1) = 0.5;
      seg.at(r, c, 2) = 0.5 - id;
    }
  return seg;
}

WarpPlan make_plan(std::vector<int> idx, std::vector<double> conf) {
  WarpPlan plan;
  plan.match_index = IntGrid(kFeat, kFeat);
  plan.confidence = GridTensor(kFeat, kFeat, 1);
  plan.match_index.data = std::move(idx);
  plan.confidence.data = std::move(conf);
  plan.source_rows = kFeat;
  plan.source_cols = kFeat;
  return plan;
}

CorrespondenceVolume dist_volume(const GridTensor& probs) {
  CorrespondenceVolume v;
  v.logits = probs;
  v.source_rows = kFeat;
  v.source_cols = kFeat;
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("warp_fuse");

TEST_CASE("extract_warp_plan: one-hot no-match fiber selects no-match with confidence 1") {
  GridTensor probs(kFeat, kFeat, kFeat * kFeat + 1, 0.0);
  for (int i = 0; i < kFeat; ++i)
    for (int j = 0; j < kFeat; ++j) probs.at(i, j, kFeat * kFeat) = 1.0;
  const WarpPlan plan = extract_warp_plan(dist_volume(probs));
  for (int i = 0; i < kFeat; ++i)
    for (int j = 0; j < kFeat; ++j) {
      CHECK(plan.match_index.at(i, j) == kFeat * kFeat);
      CHECK(plan.confidence.at(i, j, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("extract_warp_plan: uniform fiber ties to channel 0 with confidence 1/n") {
  const int channels = kFeat * kFeat + 1;
  const GridTensor probs(kFeat, kFeat, channels, 1.0 / channels);
  const WarpPlan plan = extract_warp_plan(dist_volume(probs));
  CHECK(plan.match_index.at(0, 0) == 0);
  CHECK(plan.confidence.at(0, 0, 0) == doctest::Approx(1.0 / channels));
}

TEST_CASE("extract_warp_plan: random volume matches a linear scan") {
  Rng rng(51);
  GridTensor probs = channel_softmax(random_tensor(kFeat, kFeat, kFeat * kFeat + 1, rng));
  const WarpPlan plan = extract_warp_plan(dist_volume(probs));
  for (int i = 0; i < kFeat; ++i)
    for (int j = 0; j < kFeat; ++j) {
      int best = 0;
      for (int ch = 1; ch < probs.channels; ++ch)
        if (probs.at(i, j, ch) > probs.at(i, j, best)) best = ch;
      CHECK(plan.match_index.at(i, j) == best);
      CHECK(plan.confidence.at(i, j, 0) == probs.at(i, j, best));
    }
}

TEST_CASE("warp_distribution: identity plan reproduces the source exactly") {
  const GridTensor source = labeled_seg(1), self = labeled_seg(2);
  const WarpPlan plan = make_plan({0, 1, 2, 3}, {1, 1, 1, 1});
  const WarpResult wr = warp_distribution(plan, source, self);
  CHECK(max_abs_diff(wr.warped, source) == 0.0);
  CHECK(wr.transmitted_cells.size() == 4);
}

TEST_CASE("warp_distribution: all no-match keeps the target's own patches, nothing transmitted") {
  const GridTensor source = labeled_seg(1), self = labeled_seg(2);
  const int nm = kFeat * kFeat;
  const WarpPlan plan = make_plan({nm, nm, nm, nm}, {0.9, 0.9, 0.9, 0.9});
  const WarpResult wr = warp_distribution(plan, source, self);
  CHECK(max_abs_diff(wr.warped, self) == 0.0);
  CHECK(wr.transmitted_cells.empty());
}

TEST_CASE("warp_distribution: +1-column shift equals the coordinate oracle") {
  const GridTensor source = labeled_seg(1), self = labeled_seg(2);
  const int nm = kFeat * kFeat;
  // Cell (i,j) takes source cell (i, j+1); the last column has no match.
  const WarpPlan plan = make_plan({1, nm, 3, nm}, {1, 1, 1, 1});
  const WarpResult wr = warp_distribution(plan, source, self);
  const int pr = kPix / kFeat;
  for (int i = 0; i < kFeat; ++i)
    for (int j = 0; j < kFeat; ++j)
      for (int rr = 0; rr < pr; ++rr)
        for (int cc = 0; cc < pr; ++cc)
          for (int ch = 0; ch < kC; ++ch) {
            const double got = wr.warped.at(i * pr + rr, j * pr + cc, ch);
            const double expect = (j + 1 < kFeat)
                                      ? source.at(i * pr + rr, (j + 1) * pr + cc, ch)
                                      : self.at(i * pr + rr, j * pr + cc, ch);
            CHECK(got == expect);
          }
  CHECK(wr.transmitted_cells == std::vector<int>({0, 2}));
}

TEST_CASE("self_confidence_from_plans: counts the no-match decision rate") {
  const int nm = kFeat * kFeat;
  const WarpPlan a = make_plan({nm, 1, nm, 3}, {1, 1, 1, 1});
  const WarpPlan b = make_plan({nm, nm, 2, 3}, {1, 1, 1, 1});
  const GridTensor conf = self_confidence_from_plans({&a, &b});
  CHECK(conf.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(conf.at(0, 1, 0) == doctest::Approx(0.5));
  CHECK(conf.at(1, 0, 0) == doctest::Approx(0.5));
  CHECK(conf.at(1, 1, 0) == doctest::Approx(0.0));
}

TEST_CASE("fuse_hard: a fully-confident supporter overrides a weaker self") {
  const GridTensor self = labeled_seg(0), warped = labeled_seg(1);
  const GridTensor conf(kFeat, kFeat, 1, 1.0);
  const GridTensor self_conf(kFeat, kFeat, 1, 0.4);
  const GridTensor fused = fuse_hard(self, self_conf, {{&warped, &conf, 1}});
  CHECK(max_abs_diff(fused, warped) == 0.0);
}

TEST_CASE("fuse_hard: zero supporter confidence keeps the target's own output") {
  const GridTensor self = labeled_seg(0), warped = labeled_seg(1);
  const GridTensor conf(kFeat, kFeat, 1, 0.0);
  const GridTensor self_conf(kFeat, kFeat, 1, 0.0);  // tie -> self
  const GridTensor fused = fuse_hard(self, self_conf, {{&warped, &conf, 1}});
  CHECK(max_abs_diff(fused, self) == 0.0);
}

TEST_CASE("fuse_hard: three agents follow the per-cell argmax oracle; patches never blend") {
  Rng rng(52);
  const GridTensor self = labeled_seg(0);
  const GridTensor w1 = labeled_seg(1), w2 = labeled_seg(2), w3 = labeled_seg(3);
  for (int trial = 0; trial < 10; ++trial) {
    GridTensor c1(kFeat, kFeat, 1), c2(kFeat, kFeat, 1), c3(kFeat, kFeat, 1),
        cs(kFeat, kFeat, 1);
    for (auto* t : {&c1, &c2, &c3, &cs})
      for (auto& v : t->data) v = rng.uniform();
    const GridTensor fused = fuse_hard(self, cs, {{&w1, &c1, 1}, {&w2, &c2, 2}, {&w3, &c3, 3}});
    const int pr = kPix / kFeat;
    for (int i = 0; i < kFeat; ++i)
      for (int j = 0; j < kFeat; ++j) {
        const GridTensor* want = &self;
        double best = cs.at(i, j, 0);
        if (c1.at(i, j, 0) > best) { best = c1.at(i, j, 0); want = &w1; }
        if (c2.at(i, j, 0) > best) { best = c2.at(i, j, 0); want = &w2; }
        if (c3.at(i, j, 0) > best) { best = c3.at(i, j, 0); want = &w3; }
        for (int rr = 0; rr < pr; ++rr)
          for (int cc = 0; cc < pr; ++cc)
            for (int ch = 0; ch < kC; ++ch)
              CHECK(fused.at(i * pr + rr, j * pr + cc, ch) ==
                    want->at(i * pr + rr, j * pr + cc, ch));
      }
  }
}

TEST_CASE("fuse_hard: scaling every confidence by a positive constant keeps the selection") {
  Rng rng(53);
  const GridTensor self = labeled_seg(0), w1 = labeled_seg(1), w2 = labeled_seg(2);
  GridTensor c1(kFeat, kFeat, 1), c2(kFeat, kFeat, 1), cs(kFeat, kFeat, 1);
  for (auto* t : {&c1, &c2, &cs})
    for (auto& v : t->data) v = rng.uniform();
  const GridTensor a = fuse_hard(self, cs, {{&w1, &c1, 1}, {&w2, &c2, 2}});
  GridTensor c1s = c1, c2s = c2, css = cs;
  for (auto* t : {&c1s, &c2s, &css})
    for (auto& v : t->data) v *= 3.7;
  const GridTensor b = fuse_hard(self, css, {{&w1, &c1s, 1}, {&w2, &c2s, 2}});
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("fuse_soft: single confident agent dominates; zero weights fall back to self") {
  GridTensor self(kPix, kPix, 2);
  GridTensor other(kPix, kPix, 2);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      self.at(r, c, 0) = 1.0;
      other.at(r, c, 1) = 1.0;
    }
  const GridTensor one(kFeat, kFeat, 1, 1.0), zero(kFeat, kFeat, 1, 0.0);
  const GridTensor a = fuse_soft(self, zero, {{&other, &one, 1}});
  CHECK(max_abs_diff(a, other) < 1e-12);
  const GridTensor b = fuse_soft(self, zero, {{&other, &zero, 1}});
  CHECK(max_abs_diff(b, self) == 0.0);
}

TEST_CASE("fuse_soft: equal confidences blend (1,0) and (0,1) into (0.5,0.5)") {
  GridTensor a(kPix, kPix, 2), b(kPix, kPix, 2);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      a.at(r, c, 0) = 1.0;
      b.at(r, c, 1) = 1.0;
    }
  const GridTensor conf(kFeat, kFeat, 1, 0.7);
  const GridTensor none(kFeat, kFeat, 1, 0.0);
  const GridTensor fused = fuse_soft(a, none, {{&a, &conf, 1}, {&b, &conf, 2}});
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      CHECK(fused.at(r, c, 0) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(fused.at(r, c, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("fuse_soft: random case matches the weighted-sum oracle; fibers sum to one") {
  Rng rng(54);
  GridTensor self = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  GridTensor w1 = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  GridTensor w2 = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  GridTensor c1(kFeat, kFeat, 1), c2(kFeat, kFeat, 1), cs(kFeat, kFeat, 1);
  for (auto* t : {&c1, &c2, &cs})
    for (auto& v : t->data) v = rng.uniform();
  const GridTensor fused = fuse_soft(self, cs, {{&w1, &c1, 1}, {&w2, &c2, 2}});
  const int pr = kPix / kFeat;
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      const int i = r / pr, j = c / pr;
      double v[kC], sum = 0.0;
      for (int ch = 0; ch < kC; ++ch) {
        v[ch] = cs.at(i, j, 0) * self.at(r, c, ch) + c1.at(i, j, 0) * w1.at(r, c, ch) +
                c2.at(i, j, 0) * w2.at(r, c, ch);
        sum += v[ch];
      }
      double fsum = 0.0;
      for (int ch = 0; ch < kC; ++ch) {
        CHECK(fused.at(r, c, ch) == doctest::Approx(v[ch] / sum).epsilon(1e-12));
        fsum += fused.at(r, c, ch);
      }
      CHECK(fsum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("fuse_soft: raising one agent's confidence never lowers its weight") {
  Rng rng(55);
  GridTensor self = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  GridTensor w1(kPix, kPix, kC, 0.0);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) w1.at(r, c, 0) = 1.0;  // w1 votes class 0
  GridTensor c1(kFeat, kFeat, 1, 0.3), cs(kFeat, kFeat, 1, 0.5);
  const GridTensor low = fuse_soft(self, cs, {{&w1, &c1, 1}});
  GridTensor c1_hi(kFeat, kFeat, 1, 0.9);
  const GridTensor high = fuse_soft(self, cs, {{&w1, &c1_hi, 1}});
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) CHECK(high.at(r, c, 0) >= low.at(r, c, 0) - 1e-12);
}

TEST_CASE("fuse_stacked: N=1 with an identity-initialized kernel reproduces the target") {
  Rng rng(56);
  ParamBundle params;
  init_stacked_fusion_params(params, kC, 1, rng);
  GridTensor& w = params.at("fusion.stacked.w").value;
  w.fill(0.0);
  for (int i = 0; i < kC; ++i) w.at(0, i, i) = 1.0;
  params.at("fusion.stacked.b").value.fill(0.0);
  const GridTensor self = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const GridTensor fused = fuse_stacked(self, {}, params);
  CHECK(max_abs_diff(fused, self) < 1e-12);
}

TEST_CASE("fuse_stacked: outputs are valid distributions; wrong width raises") {
  Rng rng(57);
  ParamBundle params;
  init_stacked_fusion_params(params, kC, 3, rng);
  const GridTensor self = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const GridTensor w1 = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const GridTensor w2 = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const GridTensor fused = fuse_stacked(self, {&w1, &w2}, params);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c) {
      double sum = 0.0;
      for (int ch = 0; ch < kC; ++ch) sum += fused.at(r, c, ch);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  CHECK_THROWS_AS(fuse_stacked(self, {&w1}, params), config_error);
}

TEST_CASE("fuse_stacked: kernel gradient passes the finite-difference check") {
  Rng rng(58);
  ParamBundle params;
  init_stacked_fusion_params(params, kC, 2, rng);
  const GridTensor self = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const GridTensor w1 = channel_softmax(random_tensor(kPix, kPix, kC, rng));
  const IntGrid gt = random_mask(kPix, kPix, kC, rng);
  auto ce = [&](const GridTensor& prob) {
    double l = 0.0;
    for (int r = 0; r < kPix; ++r)
      for (int c = 0; c < kPix; ++c) l -= std::log(prob.at(r, c, gt.at(r, c)));
    return l / (kPix * kPix);
  };
  auto loss_fn = [&]() { return ce(fuse_stacked(self, {&w1}, params)); };
  const StackedFusionForward f = fuse_stacked_cached(self, {&w1}, params);
  GridTensor dlogits(kPix, kPix, kC);
  const double inv = 1.0 / (kPix * kPix);
  for (int r = 0; r < kPix; ++r)
    for (int c = 0; c < kPix; ++c)
      for (int ch = 0; ch < kC; ++ch)
        dlogits.at(r, c, ch) = (f.fused.at(r, c, ch) - (gt.at(r, c) == ch ? 1.0 : 0.0)) * inv;
  fuse_stacked_backward(f, dlogits, params);
  const auto rep = fd_check_params(params, loss_fn, {"fusion.stacked."}, 1e-5, 30);
  INFO(rep.worst);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("final_mask: one-hot picks the class, uniform ties to class 0, random scans") {
  GridTensor onehot(1, 1, 4, 0.0);
  onehot.at(0, 0, 2) = 1.0;
  CHECK(final_mask(onehot).at(0, 0) == 2);
  const GridTensor uniform(1, 1, 4, 0.25);
  CHECK(final_mask(uniform).at(0, 0) == 0);
  Rng rng(59);
  const GridTensor random = channel_softmax(random_tensor(3, 3, 5, rng));
  const IntGrid mask = final_mask(random);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      int best = 0;
      for (int ch = 1; ch < 5; ++ch)
        if (random.at(r, c, ch) > random.at(r, c, best)) best = ch;
      CHECK(mask.at(r, c) == best);
    }
}

TEST_SUITE_END();
