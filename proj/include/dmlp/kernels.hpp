#pragma once

// Dense row-major kernels behind the autodiff ops.
//
// Every kernel exists twice: `serial` is the reference, `parallel` splits the
// outermost output loop across OpenMP threads. Both accumulate each output
// element in the same order, so their results are bit-identical; tests in
// tests/unit/kernels_test.cpp hold them to exact equality.

#include <cstddef>
#include <span>

namespace dmlp::kernels {

// All matrices are row-major. "accumulate" kernels add into `out`.

namespace serial {

// out[m,n] += a[m,k] * b[k,n]
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n);
// out[k,n] += a[m,k]^T * g[m,n]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);
// out[m,k] += g[m,n] * b[k,n]^T
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);

// Batched variants: `batch` independent products laid out back to back.
void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);
void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);

// Normalizes each of `rows` rows of length `cols` to zero mean / unit variance.
// Writes the normalized values and the per-row reciprocal standard deviation.
void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps);

}  // namespace serial

namespace parallel {

void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);
void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);
void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);
void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps);

}  // namespace parallel

// True when the library was built with OpenMP.
bool openmp_enabled();

// Dispatching entry points used by the ops: parallel above a work threshold,
// serial otherwise. Results do not depend on the choice.
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b, std::span<double> out,
                     std::size_t m, std::size_t k, std::size_t n);
void batched_matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                        std::size_t batch, std::size_t m, std::size_t k, std::size_t n);
void batched_matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);
void batched_matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                             std::span<double> out, std::size_t batch, std::size_t m,
                             std::size_t k, std::size_t n);
void layer_norm_rows(std::span<const double> in, std::span<double> normalized,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps);

}  // namespace dmlp::kernels
