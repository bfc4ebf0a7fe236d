#include <benchmark/benchmark.h>

#include "mail/ops.hpp"
#include "mail/rng.hpp"

using namespace mail;

namespace {

Tensor noise(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

// Args: channels, spatial size, groups (0 means depthwise).
void BM_Conv3x3(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), hw = std::size_t(state.range(1));
  const auto g = state.range(2) == 0 ? c : std::size_t(state.range(2));
  ConvSpec s;
  s.in_channels = s.out_channels = c;
  s.kernel_h = s.kernel_w = 3;
  s.groups = g;
  const Tensor x = noise({8, c, hw, hw}, 1), w = noise(s.weight_shape(), 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, s));
  state.SetItemsProcessed(state.iterations() * std::int64_t(8 * hw * hw * 9 * (c / g) * c));
}
BENCHMARK(BM_Conv3x3)->Args({16, 32, 1})->Args({64, 16, 1})->Args({64, 16, 2})->Args({64, 16, 0});

void BM_GlobalPool(benchmark::State& state) {
  const Tensor x = noise({8, 64, std::size_t(state.range(0)), std::size_t(state.range(0))}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(global_pool(x, PoolKind::Max));
}
BENCHMARK(BM_GlobalPool)->Arg(16)->Arg(64);

void BM_Dct2d(benchmark::State& state) {
  const Tensor x = noise({8, 16, std::size_t(state.range(0)), std::size_t(state.range(0))}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dct2d(x));
}
BENCHMARK(BM_Dct2d)->Arg(8)->Arg(32);

void BM_ConvBackward(benchmark::State& state) {
  ConvSpec s;
  s.in_channels = s.out_channels = 32;
  s.kernel_h = s.kernel_w = 3;
  const Tensor x = noise({8, 32, 16, 16}, 5);
  Tensor w = noise(s.weight_shape(), 6);
  w.set_requires_grad(true);
  for (auto _ : state) {
    Tensor loss = sum(conv2d(x, w, s));
    loss.backward();
    w.zero_grad();
  }
}
BENCHMARK(BM_ConvBackward);

}  // namespace

BENCHMARK_MAIN();
