#include "dmlp/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmlp/errors.hpp"

namespace dmlp::nn {

Linear::Linear(ParameterStore& store, const std::string& path, std::size_t in, std::size_t out)
    : in_(in), out_(out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = store.add_uniform(path + ".weight", {in, out}, bound);
  bias_ = store.add_constant(path + ".bias", {out}, 0.0);
}

ad::Tensor Linear::forward(ad::Tape& tape, const ad::Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw ShapeError("linear: expected input [batch, " + std::to_string(in_) + "], got " +
                     ad::shape_string(x.shape()));
  return ad::add(tape, ad::matmul(tape, x, weight_), bias_);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& path, std::size_t dim) {
  gain_ = store.add_constant(path + ".gain", {dim}, 1.0);
  bias_ = store.add_constant(path + ".bias", {dim}, 0.0);
}

ad::Tensor LayerNorm::forward(ad::Tape& tape, const ad::Tensor& x) const {
  return ad::layer_norm(tape, x, gain_, bias_);
}

ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, double rate, const ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0) return x;
  if (ctx.rng == nullptr) throw std::logic_error("dropout in training mode needs an rng");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(*ctx.rng) ? 1.0 / (1.0 - rate) : 0.0;
  return ad::mul(tape, x, ad::Tensor::from_values(x.shape(), std::move(mask)));
}

void assign(ad::Tensor tensor, std::span<const double> values) {
  if (values.size() != tensor.numel())
    throw ShapeError("assign: " + std::to_string(values.size()) + " values for shape " +
                     ad::shape_string(tensor.shape()));
  std::copy(values.begin(), values.end(), tensor.mutable_values().begin());
}

void fill(ad::Tensor tensor, double value) {
  auto v = tensor.mutable_values();
  std::fill(v.begin(), v.end(), value);
}

void set_identity(ad::Tensor tensor) {
  if (tensor.rank() != 2) throw ShapeError("set_identity needs a matrix");
  fill(tensor, 0.0);
  const std::size_t rows = tensor.dim(0), cols = tensor.dim(1);
  auto v = tensor.mutable_values();
  for (std::size_t i = 0; i < std::min(rows, cols); ++i) v[i * cols + i] = 1.0;
}

}  // namespace dmlp::nn
