#include "dmlp/kernels.hpp"

#include "row_bodies.hpp"

namespace dmlp::kernels::serial {

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) rows::matmul_row(a.data(), b.data(), out.data(), i, k, n);
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    rows::matmul_at_b_row(a.data(), g.data(), out.data(), p, m, k, n);
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) rows::matmul_a_bt_row(g.data(), b.data(), out.data(), i, k, n);
}

void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t s = 0; s < batch; ++s)
    matmul_acc(a.subspan(s * m * k, m * k), b.subspan(s * k * n, k * n),
               out.subspan(s * m * n, m * n), m, k, n);
}

void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
  for (std::size_t s = 0; s < batch; ++s)
    matmul_at_b_acc(a.subspan(s * m * k, m * k), g.subspan(s * m * n, m * n),
                    out.subspan(s * k * n, k * n), m, k, n);
}

void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n) {
  for (std::size_t s = 0; s < batch; ++s)
    matmul_a_bt_acc(g.subspan(s * m * n, m * n), b.subspan(s * k * n, k * n),
                    out.subspan(s * m * k, m * k), m, k, n);
}

void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows_count, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows_count; ++r)
    rows::layer_norm_row(in.data(), normalized.data(), rstd.data(), r, cols, eps);
}

}  // namespace dmlp::kernels::serial
