#pragma once

#include <cstddef>
#include <string>

#include "dmlp/autodiff/ops.hpp"
#include "dmlp/nn/parameters.hpp"
#include "dmlp/rng.hpp"

namespace dmlp::nn {

// Per-call forward state shared by all layers.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required only when training with dropout
};

// y = x W + b with W stored [in, out]. W starts uniform in +-1/sqrt(in), b at zero.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& path, std::size_t in, std::size_t out);

  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  const ad::Tensor& weight() const { return weight_; }
  const ad::Tensor& bias() const { return bias_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  ad::Tensor weight_;
  ad::Tensor bias_;
};

// Layer normalization over the last axis with learnable gain (init 1) and
// bias (init 0).
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& path, std::size_t dim);

  ad::Tensor forward(ad::Tape& tape, const ad::Tensor& x) const;

  const ad::Tensor& gain() const { return gain_; }
  const ad::Tensor& bias() const { return bias_; }

 private:
  ad::Tensor gain_;
  ad::Tensor bias_;
};

// Inverted dropout; identity outside training or when rate == 0.
ad::Tensor dropout(ad::Tape& tape, const ad::Tensor& x, double rate, const ForwardContext& ctx);

// Overwrites a parameter tensor's values (tests and fixtures).
void assign(ad::Tensor tensor, std::span<const double> values);
void fill(ad::Tensor tensor, double value);
// Square identity (or rectangular with ones on the main diagonal).
void set_identity(ad::Tensor tensor);

}  // namespace dmlp::nn
