#pragma once

// Per-row loop bodies shared by the serial and parallel kernels. Keeping a
// single body per kernel is what makes the two paths agree bit-for-bit: the
// parallel versions only change which thread runs which row.

#include <cmath>
#include <cstddef>

namespace dmlp::kernels::rows {

// out row i of A*B
inline void matmul_row(const double* a, const double* b, double* out, std::size_t i,
                       std::size_t k, std::size_t n) {
  const double* a_row = a + i * k;
  double* out_row = out + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double a_ip = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) out_row[j] += a_ip * b_row[j];
  }
}

// out row p of A^T*G
inline void matmul_at_b_row(const double* a, const double* g, double* out, std::size_t p,
                            std::size_t m, std::size_t k, std::size_t n) {
  double* out_row = out + p * n;
  for (std::size_t i = 0; i < m; ++i) {
    const double a_ip = a[i * k + p];
    const double* g_row = g + i * n;
    for (std::size_t j = 0; j < n; ++j) out_row[j] += a_ip * g_row[j];
  }
}

// out row i of G*B^T
inline void matmul_a_bt_row(const double* g, const double* b, double* out, std::size_t i,
                            std::size_t k, std::size_t n) {
  const double* g_row = g + i * n;
  double* out_row = out + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double* b_row = b + p * n;
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += g_row[j] * b_row[j];
    out_row[p] += s;
  }
}

inline void layer_norm_row(const double* in, double* normalized, double* rstd, std::size_t r,
                           std::size_t cols, double eps) {
  const double* x = in + r * cols;
  double* y = normalized + r * cols;
  double mean = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double c = x[j] - mean;
    var += c * c;
  }
  var /= static_cast<double>(cols);
  const double inv = 1.0 / std::sqrt(var + eps);
  rstd[r] = inv;
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * inv;
}

}  // namespace dmlp::kernels::rows
