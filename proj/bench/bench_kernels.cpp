// Parallel kernels against their serial reference counterparts.
#include <benchmark/benchmark.h>

#include <vector>

#include "dpnc/kernels.hpp"
#include "dpnc/kernels_reference.hpp"
#include "dpnc/rng.hpp"

namespace {

using dpnc::kernels::Trans;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  dpnc::RngStream r(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(r.normal());
  return v;
}

// Shapes of the recurrent projections: batch x 3H x H.
template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const std::size_t m = state.range(0), n = state.range(1), k = state.range(2);
  const auto a = random_vec(m * k, 1), b = random_vec(n * k, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      dpnc::kernels::gemm<float>(Trans::No, Trans::Yes, m, n, k, 1.f, a.data(), k, b.data(), k, 0.f, c.data(), n);
    else
      dpnc::kernels::reference::gemm<float>(Trans::No, Trans::Yes, m, n, k, 1.f, a.data(), k, b.data(), k, 0.f,
                                            c.data(), n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * m * n * k));
}

template <bool Parallel>
void BM_Sigmoid(benchmark::State& state) {
  const auto x = random_vec(state.range(0), 3);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      dpnc::kernels::sigmoid<float>(x, y);
    else
      dpnc::kernels::reference::sigmoid<float>(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_AddBias(benchmark::State& state) {
  const std::size_t rows = state.range(0), cols = state.range(1);
  const auto x = random_vec(rows * cols, 4), b = random_vec(cols, 5);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel)
      dpnc::kernels::add_bias_rows<float>(rows, cols, x.data(), b.data(), y.data());
    else
      dpnc::kernels::reference::add_bias_rows<float>(rows, cols, x.data(), b.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Args({64, 768, 256})->Args({256, 768, 256})->Args({64, 3072, 1024})->Name("gemm/parallel");
BENCHMARK(BM_Gemm<false>)->Args({64, 768, 256})->Args({256, 768, 256})->Args({64, 3072, 1024})->Name("gemm/reference");
BENCHMARK(BM_Sigmoid<true>)->Arg(1 << 16)->Arg(1 << 20)->Name("sigmoid/parallel");
BENCHMARK(BM_Sigmoid<false>)->Arg(1 << 16)->Arg(1 << 20)->Name("sigmoid/reference");
BENCHMARK(BM_AddBias<true>)->Args({256, 768})->Name("add_bias/parallel");
BENCHMARK(BM_AddBias<false>)->Args({256, 768})->Name("add_bias/reference");

BENCHMARK_MAIN();
