#include <gtest/gtest.h>

#include <random>

#include "dmlp/kernels.hpp"
#include "support.hpp"

namespace {

using namespace dmlp;
using fixtures::normal_values;

TEST(Kernels, MatmulMatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const std::size_t m = 5, k = 7, n = 3;
  const auto a = normal_values(m * k, rng), b = normal_values(k * n, rng);
  std::vector<double> out(m * n, 0.0);
  kernels::serial::matmul_acc(a, b, out, m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(out[i * n + j], s, 1e-12);
    }
}

TEST(Kernels, TransposedProductsMatchTripleLoop) {
  std::mt19937_64 rng(2);
  const std::size_t m = 4, k = 6, n = 5;
  const auto a = normal_values(m * k, rng), g = normal_values(m * n, rng), b = normal_values(k * n, rng);

  std::vector<double> atb(k * n, 0.0), abt(m * k, 0.0);
  kernels::serial::matmul_at_b_acc(a, g, atb, m, k, n);
  kernels::serial::matmul_a_bt_acc(g, b, abt, m, k, n);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * g[i * n + j];
      EXPECT_NEAR(atb[p * n + j], s, 1e-12);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
      EXPECT_NEAR(abt[i * k + p], s, 1e-12);
    }
}

TEST(Kernels, AccumulateAddsIntoOutput) {
  const std::vector<double> a{1, 2}, b{3, 4};  // [1,2] x [2,1]
  std::vector<double> out{10.0};
  kernels::serial::matmul_acc(a, b, out, 1, 2, 1);
  EXPECT_EQ(out[0], 21.0);
}

// The parallel kernels must agree with the serial ones bit for bit, including
// sizes above the dispatch threshold.
class SerialParallel : public ::testing::TestWithParam<std::size_t> {};

TEST_P(SerialParallel, BitIdentical) {
  const std::size_t s = GetParam();
  std::mt19937_64 rng(s);
  const std::size_t m = s, k = s + 3, n = s / 2 + 1, batch = 7;
  const auto a = normal_values(batch * m * k, rng), b = normal_values(batch * k * n, rng),
             g = normal_values(batch * m * n, rng);

  auto check = [](auto serial_fn, auto parallel_fn, std::size_t out_size) {
    std::vector<double> x(out_size, 0.5), y(out_size, 0.5);
    serial_fn(x);
    parallel_fn(y);
    EXPECT_EQ(x, y);
  };
  namespace se = kernels::serial;
  namespace pa = kernels::parallel;
  check([&](auto& o) { se::matmul_acc(a, b, o, m, k, n); }, [&](auto& o) { pa::matmul_acc(a, b, o, m, k, n); },
        m * n);
  check([&](auto& o) { se::matmul_at_b_acc(a, g, o, m, k, n); },
        [&](auto& o) { pa::matmul_at_b_acc(a, g, o, m, k, n); }, k * n);
  check([&](auto& o) { se::matmul_a_bt_acc(g, b, o, m, k, n); },
        [&](auto& o) { pa::matmul_a_bt_acc(g, b, o, m, k, n); }, m * k);
  check([&](auto& o) { se::batched_matmul_acc(a, b, o, batch, m, k, n); },
        [&](auto& o) { pa::batched_matmul_acc(a, b, o, batch, m, k, n); }, batch * m * n);
  check([&](auto& o) { se::batched_matmul_at_b_acc(a, g, o, batch, m, k, n); },
        [&](auto& o) { pa::batched_matmul_at_b_acc(a, g, o, batch, m, k, n); }, batch * k * n);
  check([&](auto& o) { se::batched_matmul_a_bt_acc(g, b, o, batch, m, k, n); },
        [&](auto& o) { pa::batched_matmul_a_bt_acc(g, b, o, batch, m, k, n); }, batch * m * k);

  std::vector<double> ln1(m * k), ln2(m * k), r1(m), r2(m);
  se::layer_norm_rows(std::span<const double>(a).first(m * k), ln1, r1, m, k, 1e-5);
  pa::layer_norm_rows(std::span<const double>(a).first(m * k), ln2, r2, m, k, 1e-5);
  EXPECT_EQ(ln1, ln2);
  EXPECT_EQ(r1, r2);
}

INSTANTIATE_TEST_SUITE_P(Sizes, SerialParallel, ::testing::Values(1, 4, 17, 64, 160));

TEST(Kernels, DispatchMatchesSerial) {
  std::mt19937_64 rng(9);
  const std::size_t m = 200, k = 200, n = 200;  // above the parallel threshold
  const auto a = normal_values(m * k, rng), b = normal_values(k * n, rng);
  std::vector<double> x(m * n, 0.0), y(m * n, 0.0);
  kernels::serial::matmul_acc(a, b, x, m, k, n);
  kernels::matmul_acc(a, b, y, m, k, n);
  EXPECT_EQ(x, y);
}

TEST(Kernels, LayerNormRowsStatistics) {
  std::mt19937_64 rng(3);
  const std::size_t rows = 6, cols = 32;
  const auto x = normal_values(rows * cols, rng, 3.0);
  std::vector<double> y(rows * cols), rstd(rows);
  kernels::serial::layer_norm_rows(x, y, rstd, rows, cols, 1e-5);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t c = 0; c < cols; ++c) xm += x[r * cols + c];
    xm /= cols;
    for (std::size_t c = 0; c < cols; ++c) xv += (x[r * cols + c] - xm) * (x[r * cols + c] - xm);
    xv /= cols;
    for (std::size_t c = 0; c < cols; ++c) mean += y[r * cols + c];
    mean /= cols;
    for (std::size_t c = 0; c < cols; ++c) var += (y[r * cols + c] - mean) * (y[r * cols + c] - mean);
    var /= cols;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, xv / (xv + 1e-5), 1e-12);
    EXPECT_NEAR(rstd[r], 1.0 / std::sqrt(xv + 1e-5), 1e-12);
  }
}

}  // namespace
