#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dmlp::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major 64-bit tensor. A Tensor is a shared handle: copies alias the
// same storage, which is how parameters are shared between a model and the
// tape that differentiates it. Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  // Throws ShapeError when values.size() != product(shape).
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values() const;
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;
  void drop_grad() const;

  // Independent deep copy of shape and values; no gradient, not requiring grad.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // {"shape": [...], "values": [...]}
  nlohmann::json to_json() const;
  static Tensor from_json(const nlohmann::json& doc, bool requires_grad = false);

 private:
  struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  Node& node() const;

  std::shared_ptr<Node> node_;
};

}  // namespace dmlp::ad
