#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mmh/kernels.hpp"

namespace {

using namespace mmh::kernels;

std::vector<double> random_vector(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Omp>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Omp) {
      omp::matmul(a.data(), b.data(), c.data(), n, n, n, false);
    } else {
      serial::matmul(a.data(), b.data(), c.data(), n, n, n, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Omp>
void BM_Attention(benchmark::State& state) {
  AttentionDims d;
  d.batch = 8;
  d.q_len = d.k_len = static_cast<size_t>(state.range(0));
  d.heads = 4;
  d.head_dim = 16;
  const size_t width = d.heads * d.head_dim;
  const auto q = random_vector(d.batch * d.q_len * width, 3);
  const auto k = random_vector(d.batch * d.k_len * width, 4);
  const auto v = random_vector(d.batch * d.k_len * width, 5);
  std::vector<uint8_t> valid(d.batch * d.k_len, 1);
  std::vector<double> probs(d.batch * d.heads * d.q_len * d.k_len), out(d.batch * d.q_len * width);
  for (auto _ : state) {
    if constexpr (Omp) {
      omp::attention_forward(q.data(), k.data(), v.data(), valid.data(), d, probs.data(), out.data());
    } else {
      serial::attention_forward(q.data(), k.data(), v.data(), valid.data(), d, probs.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Omp>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<size_t>(state.range(0));
  const size_t cols = 64;
  const auto x = random_vector(rows * cols, 6);
  const std::vector<double> gamma(cols, 1.0), beta(cols, 0.0);
  std::vector<double> xhat(rows * cols), rstd(rows), y(rows * cols);
  for (auto _ : state) {
    if constexpr (Omp) {
      omp::layer_norm_forward(x.data(), gamma.data(), beta.data(), rows, cols, 1e-5, xhat.data(), rstd.data(),
                              y.data());
    } else {
      serial::layer_norm_forward(x.data(), gamma.data(), beta.data(), rows, cols, 1e-5, xhat.data(), rstd.data(),
                                 y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_Attention<true>)->Name("attention/omp")->Arg(32)->Arg(128);
BENCHMARK(BM_LayerNorm<false>)->Name("layer_norm/serial")->Arg(1024)->Arg(16384);
BENCHMARK(BM_LayerNorm<true>)->Name("layer_norm/omp")->Arg(1024)->Arg(16384);

BENCHMARK_MAIN();
