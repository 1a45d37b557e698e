#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/autodiff/gradcheck.hpp"
#include "dmlp/autodiff/tensor.hpp"

namespace dmlp::nn {

// Ordered collection of learnable tensors keyed by dotted path, e.g.
// "fusion.blocks.0.generator.weight". Initial values are drawn from a stream
// keyed by (seed, path), so adding a parameter never perturbs the others.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform in [-bound, bound].
  ad::Tensor add_uniform(const std::string& path, ad::Shape shape, double bound);
  ad::Tensor add_constant(const std::string& path, ad::Shape shape, double value);

  bool contains(const std::string& path) const;
  // Throws std::out_of_range for unknown paths.
  ad::Tensor get(const std::string& path) const;

  const std::vector<ad::NamedTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  // Total number of scalar parameters.
  std::size_t scalar_count() const;

  void zero_grad();

  // {path: {"shape": [...], "values": [...]}}
  nlohmann::json to_json() const;
  // Overwrites values in place. Every stored path must be present with a
  // matching shape and no extra paths are allowed; throws ValidationError.
  void load_json(const nlohmann::json& doc);

 private:
  ad::Tensor add(const std::string& path, ad::Tensor tensor);

  std::uint64_t seed_;
  std::vector<ad::NamedTensor> entries_;
};

}  // namespace dmlp::nn
