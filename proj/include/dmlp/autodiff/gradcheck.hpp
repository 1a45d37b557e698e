#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmlp/autodiff/tape.hpp"
#include "dmlp/autodiff/tensor.hpp"

namespace dmlp::ad {

using ScalarFunction = std::function<Tensor(Tape&, const Tensor&)>;

// max over coordinates of |analytic - central| / max(1, |central|), where the
// analytic gradient comes from the tape and the central difference uses
// (f(x + step) - f(x - step)) / (2 step). Throws NumericalError naming the
// coordinate on a non-finite evaluation and std::invalid_argument for step <= 0.
double finite_difference_check(const ScalarFunction& f, const Tensor& point, double step);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Same measure over every coordinate of every tensor in `params`. `loss`
// must rebuild the computation from the current parameter values each call.
// Parameters are restored to their original values before returning.
GradCheckReport finite_difference_check(const std::function<Tensor(Tape&)>& loss,
                                        std::span<const NamedTensor> params, double step);

}  // namespace dmlp::ad
