// SPDX-License-Identifier: Apache-2.0
//
// Parallel kernels against their serial reference versions.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cds/numerics/kernels.hpp"

namespace k = cds::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm<float>(a, b, c, n, n, n, false, false, false);
    } else {
      k::reference::gemm<float>(a, b, c, n, n, n, false, false, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_row_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 96;
  const auto x = random_vec(rows * cols, 3);
  std::vector<float> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::row_softmax<float>(x, y, rows, cols, 100.0f);
    } else {
      k::reference::row_softmax<float>(x, y, rows, cols, 100.0f);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows * cols));
}

template <bool Parallel>
void BM_mhsa_forward(benchmark::State& state) {
  k::AttentionDims dims{static_cast<std::size_t>(state.range(0)), 5, 32, 4};
  const auto x = random_vec(dims.batch * dims.seq * dims.dim, 4);
  const auto wq = random_vec(dims.dim * dims.dim, 5), wk = random_vec(dims.dim * dims.dim, 6);
  const auto wv = random_vec(dims.dim * dims.dim, 7), wo = random_vec(dims.dim * dims.dim, 8);
  const k::AttentionWeights<float> w{wq, wk, wv, wo};
  std::vector<float> out(x.size());
  k::AttentionCache<float> cache;
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::mhsa_forward<float>(x, w, dims, out, cache);
    } else {
      k::reference::mhsa_forward<float>(x, w, dims, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(dims.batch));
}

template <bool Parallel>
void BM_nearest_centroid(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t kc = 10, dim = 32;
  const auto p = random_vec(n * dim, 9), c = random_vec(kc * dim, 10);
  std::vector<int> assign(n);
  std::vector<float> dist(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::nearest_centroid<float>(p, c, n, kc, dim, assign, dist);
    } else {
      k::reference::nearest_centroid<float>(p, c, n, kc, dim, assign, dist);
    }
    benchmark::DoNotOptimize(assign.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_row_softmax<false>)->Name("row_softmax/reference")->Arg(1024)->Arg(16384);
BENCHMARK(BM_row_softmax<true>)->Name("row_softmax/parallel")->Arg(1024)->Arg(16384)->UseRealTime();
BENCHMARK(BM_mhsa_forward<false>)->Name("mhsa_forward/reference")->Arg(64)->Arg(1024);
BENCHMARK(BM_mhsa_forward<true>)->Name("mhsa_forward/parallel")->Arg(64)->Arg(1024)->UseRealTime();
BENCHMARK(BM_nearest_centroid<false>)->Name("nearest_centroid/reference")->Arg(1024)->Arg(65536);
BENCHMARK(BM_nearest_centroid<true>)->Name("nearest_centroid/parallel")->Arg(1024)->Arg(65536)->UseRealTime();

BENCHMARK_MAIN();
