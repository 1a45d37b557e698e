#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "dmlp/autodiff/tape.hpp"
#include "dmlp/autodiff/tensor.hpp"

namespace dmlp::ad {

inline constexpr double kLayerNormEps = 1e-5;

enum class OpKind {
  matmul,
  add,
  sub,
  elementwise_mul,
  relu,
  softmax,
  log_softmax,
  log,
  exp,
  layer_norm,
  concat_lastdim,
  reshape,
  mean,
  sum,
  scale,
};

std::string_view op_name(OpKind kind);
std::span<const OpKind> all_op_kinds();

struct OpAttrs {
  double factor = 1.0;          // scale
  double eps = kLayerNormEps;   // layer_norm
  Shape shape;                  // reshape target
};

// Generic entry point. Every op records itself on `tape` when any input
// requires grad. Shape problems throw ShapeError naming the op and shapes.
//
// Input conventions:
//   layer_norm: {x} or {x, gain, bias}; normalizes over the last axis.
//   concat_lastdim: two or more operands agreeing on all but the last axis.
Tensor forward_op(Tape& tape, OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

// [m,k]x[k,n] -> [m,n]; [b,m,k]x[b,k,n] -> [b,m,n] (one product per leading index).
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// Same shapes, or `b` matching the trailing axes of `a` (bias broadcast over rows).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor relu(Tape& tape, const Tensor& x);
Tensor softmax(Tape& tape, const Tensor& x);
Tensor log_softmax(Tape& tape, const Tensor& x);
// Throws NumericalError on non-positive input.
Tensor log(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
// `gain` and `bias` may be undefined tensors (no affine); otherwise both have
// the extent of the last axis.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain = {}, const Tensor& bias = {},
                  double eps = kLayerNormEps);
Tensor concat_lastdim(Tape& tape, std::span<const Tensor> parts);
Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor mean(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double factor);

namespace debug {

// Fault injection for the gradient-check negative control: when set, the
// ReLU backward rule passes 1.5x the true gradient.
void set_corrupt_relu_backward(bool on);
bool corrupt_relu_backward();

}  // namespace debug

}  // namespace dmlp::ad
