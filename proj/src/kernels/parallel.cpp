#include "dmlp/kernels.hpp"

#include <cstdint>

#include "row_bodies.hpp"

namespace dmlp::kernels {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

using Index = std::int64_t;

}  // namespace

namespace parallel {

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i)
    rows::matmul_row(pa, pb, po, static_cast<std::size_t>(i), k, n);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  const double* pa = a.data();
  const double* pg = g.data();
  double* po = out.data();
#pragma omp parallel for schedule(static)
  for (Index p = 0; p < static_cast<Index>(k); ++p)
    rows::matmul_at_b_row(pa, pg, po, static_cast<std::size_t>(p), m, k, n);
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  const double* pg = g.data();
  const double* pb = b.data();
  double* po = out.data();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(m); ++i)
    rows::matmul_a_bt_row(pg, pb, po, static_cast<std::size_t>(i), k, n);
}

void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index s = 0; s < static_cast<Index>(batch); ++s) {
    const auto u = static_cast<std::size_t>(s);
    const double* pa = a.data() + u * m * k;
    const double* pb = b.data() + u * k * n;
    double* po = out.data() + u * m * n;
    for (std::size_t i = 0; i < m; ++i) rows::matmul_row(pa, pb, po, i, k, n);
  }
}

void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index s = 0; s < static_cast<Index>(batch); ++s) {
    const auto u = static_cast<std::size_t>(s);
    const double* pa = a.data() + u * m * k;
    const double* pg = g.data() + u * m * n;
    double* po = out.data() + u * k * n;
    for (std::size_t p = 0; p < k; ++p) rows::matmul_at_b_row(pa, pg, po, p, m, k, n);
  }
}

void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (Index s = 0; s < static_cast<Index>(batch); ++s) {
    const auto u = static_cast<std::size_t>(s);
    const double* pg = g.data() + u * m * n;
    const double* pb = b.data() + u * k * n;
    double* po = out.data() + u * m * k;
    for (std::size_t i = 0; i < m; ++i) rows::matmul_a_bt_row(pg, pb, po, i, k, n);
  }
}

void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows_count, std::size_t cols, double eps) {
  const double* pi = in.data();
  double* pn = normalized.data();
  double* pr = rstd.data();
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(rows_count); ++r)
    rows::layer_norm_row(pi, pn, pr, static_cast<std::size_t>(r), cols, eps);
}

}  // namespace parallel

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n) {
  if (m > 1 && m * k * n >= kParallelWork)
    parallel::matmul_acc(a, b, out, m, k, n);
  else
    serial::matmul_acc(a, b, out, m, k, n);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  if (k > 1 && m * k * n >= kParallelWork)
    parallel::matmul_at_b_acc(a, g, out, m, k, n);
  else
    serial::matmul_at_b_acc(a, g, out, m, k, n);
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  if (m > 1 && m * k * n >= kParallelWork)
    parallel::matmul_a_bt_acc(g, b, out, m, k, n);
  else
    serial::matmul_a_bt_acc(g, b, out, m, k, n);
}

void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
  if (batch > 1 && batch * m * k * n >= kParallelWork)
    parallel::batched_matmul_acc(a, b, out, batch, m, k, n);
  else
    serial::batched_matmul_acc(a, b, out, batch, m, k, n);
}

void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
  if (batch > 1 && batch * m * k * n >= kParallelWork)
    parallel::batched_matmul_at_b_acc(a, g, out, batch, m, k, n);
  else
    serial::batched_matmul_at_b_acc(a, g, out, batch, m, k, n);
}

void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
  if (batch > 1 && batch * m * k * n >= kParallelWork)
    parallel::batched_matmul_a_bt_acc(g, b, out, batch, m, k, n);
  else
    serial::batched_matmul_a_bt_acc(g, b, out, batch, m, k, n);
}

void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows_count, std::size_t cols, double eps) {
  if (rows_count > 1 && rows_count * cols >= kParallelWork)
    parallel::layer_norm_rows(in, normalized, rstd, rows_count, cols, eps);
  else
    serial::layer_norm_rows(in, normalized, rstd, rows_count, cols, eps);
}

}  // namespace dmlp::kernels
