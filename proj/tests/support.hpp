#pragma once

#include <random>
#include <vector>

#include "dmlp/autodiff/tensor.hpp"
#include "dmlp/fusion.hpp"

namespace dmlp::fixtures {

inline std::vector<double> normal_values(std::size_t n, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool requires_grad = false, double sd = 1.0) {
  const std::size_t n = ad::shape_numel(shape);
  return ad::Tensor::from_values(std::move(shape), normal_values(n, rng, sd), requires_grad);
}

// Widths used across the fusion and acceptance tests: d=8, h=4, N=2, d_e=8, C=5.
inline fusion::ModelConfig tiny_config(fusion::Strategy strategy, fusion::Variant variant = fusion::Variant::C) {
  fusion::ModelConfig cfg;
  cfg.encoder.input_dim = cfg.encoder.output_dim = 8;
  cfg.metadata.embed_dim = 8;
  cfg.metadata.residual_blocks = 2;
  cfg.fusion.strategy = strategy;
  cfg.fusion.variant = variant;
  cfg.fusion.d = 8;
  cfg.fusion.h = 4;
  cfg.fusion.num_blocks = 2;
  cfg.fusion.num_classes = 5;
  cfg.fusion.ip_concat = cfg.fusion.mp_concat = variant == fusion::Variant::C;
  return cfg;
}

}  // namespace dmlp::fixtures
