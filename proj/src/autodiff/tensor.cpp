#include "dmlp/autodiff/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>

#include "dmlp/errors.hpp"

namespace dmlp::ad {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) return;  // rank-0 scalar
  for (auto extent : shape)
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto node = std::make_shared<Node>();
  node->values.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != values.size())
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({}, {value}, requires_grad);
}

Tensor::Node& Tensor::node() const {
  if (!node_) throw std::logic_error("use of undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node().values.size(); }

std::span<const double> Tensor::values() const { return node().values; }
std::span<double> Tensor::mutable_values() const { return node().values; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node().values[0];
}

bool Tensor::requires_grad() const { return node().requires_grad; }
void Tensor::set_requires_grad(bool on) { node().requires_grad = on; }

bool Tensor::has_grad() const { return !node().grad.empty(); }
std::span<const double> Tensor::grad() const { return node().grad; }

std::span<double> Tensor::mutable_grad() const {
  auto& n = node();
  if (n.grad.empty()) n.grad.assign(n.values.size(), 0.0);
  return n.grad;
}

void Tensor::zero_grad() const {
  auto& n = node();
  n.grad.assign(n.values.size(), 0.0);
}

void Tensor::drop_grad() const {
  auto& n = node();
  n.grad.clear();
  n.grad.shrink_to_fit();
}

Tensor Tensor::clone() const { return from_values(shape(), node().values, false); }

nlohmann::json Tensor::to_json() const {
  return nlohmann::json{{"shape", shape()}, {"values", node().values}};
}

Tensor Tensor::from_json(const nlohmann::json& doc, bool requires_grad) {
  if (!doc.is_object() || !doc.contains("shape") || !doc.contains("values"))
    throw ValidationError("tensor document needs \"shape\" and \"values\"");
  return from_values(doc.at("shape").get<Shape>(), doc.at("values").get<std::vector<double>>(),
                     requires_grad);
}

}  // namespace dmlp::ad
