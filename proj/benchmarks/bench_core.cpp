#include <benchmark/benchmark.h>

#include "swarmseg/backbone.hpp"
#include "swarmseg/codec.hpp"
#include "swarmseg/conv.hpp"
#include "swarmseg/cost_volume.hpp"
#include "swarmseg/rng.hpp"
#include "swarmseg/smoother.hpp"

namespace {

using namespace swarmseg;

GridTensor random_tensor(int r, int c, int ch, Rng& rng) {
  GridTensor t(r, c, ch);
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

// The declared hot spot: O(H_T*W_T*H_S*W_S*K) pairwise distances.
void BM_ComputeVolume(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const int K = static_cast<int>(state.range(1));
  Rng rng(7);
  ComparableMap p{random_tensor(side, side, K, rng), 0, 1};
  KeyMap k{random_tensor(side, side, K, rng), 1};
  for (auto _ : state) {
    auto v = compute_volume(p, k);
    benchmark::DoNotOptimize(v.logits.data.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(side) * side * side * side *
                          K);
}
BENCHMARK(BM_ComputeVolume)->Args({8, 16})->Args({16, 16})->Args({16, 64})->Args({32, 16});

void BM_ChannelSoftmax(benchmark::State& state) {
  Rng rng(9);
  GridTensor t = random_tensor(16, 16, static_cast<int>(state.range(0)), rng);
  for (auto _ : state) {
    auto s = channel_softmax(t);
    benchmark::DoNotOptimize(s.data.data());
  }
}
BENCHMARK(BM_ChannelSoftmax)->Arg(65)->Arg(257);

void BM_Conv3x3(benchmark::State& state) {
  Rng rng(11);
  const int ch = static_cast<int>(state.range(0));
  GridTensor in = random_tensor(16, 16, ch, rng);
  GridTensor w = init_conv_kernel(rng, 3, ch, 64);
  GridTensor b = zero_bias(64);
  for (auto _ : state) {
    auto out = conv2d_forward(in, w, b, 3);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(65)->Arg(64);

void BM_SmootherForward(benchmark::State& state) {
  Rng rng(13);
  const int side = 8;
  const int channels = side * side + 1;
  ParamBundle params;
  init_smoother_params(params, channels, 64, rng);
  GridTensor vol = random_tensor(side, side, channels, rng);
  for (auto _ : state) {
    auto out = smooth(vol, params);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(BM_SmootherForward);

void BM_BackboneForward(benchmark::State& state) {
  Rng rng(17);
  ModelConfig model;
  ViewConfig view;
  ParamBundle params;
  init_backbone_params(params, model, 6, rng);
  GridTensor obs = random_tensor(view.rows, view.cols, 3, rng);
  for (auto _ : state) {
    auto out = backbone_forward(obs, params, view);
    benchmark::DoNotOptimize(out.seg.data.data());
  }
}
BENCHMARK(BM_BackboneForward);

}  // namespace

BENCHMARK_MAIN();
