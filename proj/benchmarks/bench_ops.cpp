#include <benchmark/benchmark.h>

#include <random>

#include "acfpn/attention.hpp"
#include "acfpn/cem.hpp"
#include "acfpn/deform_conv.hpp"
#include "acfpn/ops.hpp"
#include "acfpn/parallel.hpp"
#include "acfpn/pyramid.hpp"

namespace {

using namespace acfpn;

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (T& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

void BM_Conv1x1Reduce(benchmark::State& state) {
  set_num_threads(static_cast<int>(state.range(0)));
  const TensorF x = random_tensor<float>({1, 2048, 16, 16}, 1);
  const TensorF w = random_tensor<float>({512, 2048, 1, 1}, 2);
  const TensorF b = random_tensor<float>({1, 512, 1, 1}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, b, ConvSpec::make(1)));
  }
  state.SetItemsProcessed(state.iterations() * 2048LL * 512 * 256);
}
BENCHMARK(BM_Conv1x1Reduce)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);

void BM_Conv3x3Dilated(benchmark::State& state) {
  set_num_threads(0);
  const int rate = static_cast<int>(state.range(0));
  const TensorF x = random_tensor<float>({1, 512, 16, 16}, 4);
  const TensorF w = random_tensor<float>({256, 512, 3, 3}, 5);
  const TensorF b = random_tensor<float>({1, 256, 1, 1}, 6);
  const ConvSpec spec = ConvSpec::make(3, 1, rate, rate);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, b, spec));
  }
  state.SetItemsProcessed(state.iterations() * 512LL * 256 * 9 * 256);
}
BENCHMARK(BM_Conv3x3Dilated)->Arg(1)->Arg(6)->Arg(24)->Unit(benchmark::kMillisecond);

void BM_DeformConv(benchmark::State& state) {
  set_num_threads(0);
  DeformConv2d<float> layer;
  layer.weight = random_tensor<float>({256, 512, 3, 3}, 7);
  layer.bias = random_tensor<float>({1, 256, 1, 1}, 8);
  layer.offset_weight = random_tensor<float>({18, 512, 3, 3}, 9);
  layer.offset_bias = random_tensor<float>({1, 18, 1, 1}, 10);
  layer.spec = ConvSpec::make(3, 1, 6, 6);
  const TensorF x = random_tensor<float>({1, 512, 16, 16}, 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(deform_conv2d(x, layer));
  }
}
BENCHMARK(BM_DeformConv)->Unit(benchmark::kMillisecond);

void BM_Affinity(benchmark::State& state) {
  set_num_threads(0);
  const std::int64_t hw = state.range(0);
  const TensorF q = random_tensor<float>({1, 128, hw, hw}, 12);
  const TensorF k = random_tensor<float>({1, 128, hw, hw}, 13);
  for (auto _ : state) {
    benchmark::DoNotOptimize(affinity_matrix(q, k));
  }
}
BENCHMARK(BM_Affinity)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_CemForward(benchmark::State& state) {
  set_num_threads(0);
  const LayerGraph g = cem_build(CemConfig{});
  const ParamDict<float> params = init_params<float>(g, 14);
  const TensorF f5 = random_tensor<float>({1, 2048, 16, 16}, 15);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cem_forward(g, params, f5));
  }
}
BENCHMARK(BM_CemForward)->Unit(benchmark::kMillisecond);

void BM_AcfpnForward(benchmark::State& state) {
  set_num_threads(0);
  const LayerGraph net = acfpn_build(AcfpnConfig{});
  const ParamDict<float> params = init_params<float>(net, 16);
  const TensorF image = random_tensor<float>({1, 3, 128, 128}, 17);
  for (auto _ : state) {
    benchmark::DoNotOptimize(acfpn_forward(net, params, image));
  }
}
BENCHMARK(BM_AcfpnForward)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
