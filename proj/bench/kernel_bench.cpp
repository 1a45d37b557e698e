// Serial vs OpenMP kernels. Threads follow OMP_NUM_THREADS.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "dmlp/kernels.hpp"

namespace {

using namespace dmlp::kernels;

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

template <auto Kernel>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    Kernel(a, b, out, n, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// The dynamic projection: batch x [1, in] x [in, out].
template <auto Kernel>
void bm_batched(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::size_t in = 256, out_dim = 64;
  const auto z = random_vector(batch * in, 3), w = random_vector(batch * in * out_dim, 4);
  std::vector<double> out(batch * out_dim);
  for (auto _ : state) {
    Kernel(z, w, out, batch, 1, in, out_dim);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * batch * in * out_dim));
}

template <auto Kernel>
void bm_layer_norm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = random_vector(rows * cols, 5);
  std::vector<double> y(rows * cols), rstd(rows);
  for (auto _ : state) {
    Kernel(x, y, rstd, rows, cols, 1e-5);
    benchmark::DoNotOptimize(y.data());
  }
}

BENCHMARK(bm_matmul<serial::matmul_acc>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<parallel::matmul_acc>)->Name("matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_batched<serial::batched_matmul_acc>)->Name("batched_matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_batched<parallel::batched_matmul_acc>)->Name("batched_matmul/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_layer_norm<serial::layer_norm_rows>)->Name("layer_norm/serial")->Arg(256)->Arg(4096);
BENCHMARK(bm_layer_norm<parallel::layer_norm_rows>)->Name("layer_norm/parallel")->Arg(256)->Arg(4096);

}  // namespace

BENCHMARK_MAIN();
