#include "dmlp/nn/parameters.hpp"

#include <algorithm>
#include <stdexcept>

#include "dmlp/errors.hpp"
#include "dmlp/rng.hpp"

namespace dmlp::nn {

ad::Tensor ParameterStore::add(const std::string& path, ad::Tensor tensor) {
  if (contains(path)) throw std::logic_error("duplicate parameter path " + path);
  tensor.set_requires_grad(true);
  entries_.push_back({path, tensor});
  return tensor;
}

ad::Tensor ParameterStore::add_uniform(const std::string& path, ad::Shape shape, double bound) {
  auto rng = stream(seed_, path);
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(ad::shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return add(path, ad::Tensor::from_values(std::move(shape), std::move(values)));
}

ad::Tensor ParameterStore::add_constant(const std::string& path, ad::Shape shape, double value) {
  return add(path, ad::Tensor::full(std::move(shape), value));
}

bool ParameterStore::contains(const std::string& path) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == path; });
}

ad::Tensor ParameterStore::get(const std::string& path) const {
  for (const auto& e : entries_)
    if (e.name == path) return e.tensor;
  throw std::out_of_range("unknown parameter " + path);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) {
    ad::Tensor t = e.tensor;
    t.zero_grad();
  }
}

nlohmann::json ParameterStore::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& e : entries_) doc[e.name] = e.tensor.to_json();
  return doc;
}

void ParameterStore::load_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("parameter document must be an object");
  for (const auto& [path, _] : doc.items())
    if (!contains(path)) throw ValidationError("unexpected parameter " + path);
  for (auto& e : entries_) {
    if (!doc.contains(e.name)) throw ValidationError("missing parameter " + e.name);
    const ad::Tensor loaded = ad::Tensor::from_json(doc.at(e.name));
    if (loaded.shape() != e.tensor.shape())
      throw ValidationError("parameter " + e.name + ": expected shape " + ad::shape_string(e.tensor.shape()) +
                            ", found " + ad::shape_string(loaded.shape()));
    ad::Tensor t = e.tensor;
    std::copy(loaded.values().begin(), loaded.values().end(), t.mutable_values().begin());
  }
}

}  // namespace dmlp::nn
