// Serial reference loops against the im2col + OpenMP GEMM kernels.

#include <benchmark/benchmark.h>

#include <vector>

#include "deoccl/kernels.hpp"
#include "deoccl/random.hpp"

using namespace deoccl;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
  return v;
}

Tensor<float> random_input(const ConvGeometry& g, int batch) {
  Tensor<float> t(g.input_shape(batch));
  const auto v = random_values(t.size(), 7);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = v[i];
  return t;
}

// Args: channels, spatial size.
ConvGeometry geometry(const benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int s = static_cast<int>(state.range(1));
  return ConvGeometry{c, s, s, c, 3, 1, 1};
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_values(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_values(static_cast<std::size_t>(n) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    else
      reference::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_input(g, 4);
  const auto w = random_values(g.weight_shape().size(), 3);
  for (auto _ : state) {
    auto y = Parallel ? kernels::conv_forward(x, w.data(), g) : reference::conv_forward(x, w.data(), g);
    benchmark::DoNotOptimize(y.values().data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = geometry(state);
  const auto x = random_input(g, 4);
  const auto w = random_values(g.weight_shape().size(), 3);
  const auto dy = kernels::conv_forward(x, w.data(), g);
  std::vector<float> dw(w.size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      auto dx = kernels::conv_backward_data(dy, w.data(), g);
      kernels::conv_backward_weight(x, dy, g, dw.data());
      benchmark::DoNotOptimize(dx.values().data());
    } else {
      auto dx = reference::conv_backward_data(dy, w.data(), g);
      reference::conv_backward_weight(x, dy, g, dw.data());
      benchmark::DoNotOptimize(dx.values().data());
    }
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Args({8, 32})->Args({16, 64})->Args({32, 32});
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Args({8, 32})->Args({16, 64})->Args({32, 32});
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Args({8, 32})->Args({16, 64});
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Args({8, 32})->Args({16, 64});

BENCHMARK_MAIN();
