#include "dmlp/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmlp/errors.hpp"

namespace dmlp::ad {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

double evaluate(const std::function<Tensor(Tape&)>& loss) {
  Tape tape = Tape::inference();
  return loss(tape).item();
}

}  // namespace

double finite_difference_check(const ScalarFunction& f, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  Tensor x = point.clone();
  x.set_requires_grad(true);

  std::vector<NamedTensor> params{{"x", x}};
  auto loss = [&f, &x](Tape& tape) { return f(tape, x); };
  return finite_difference_check(loss, params, step).max_relative_error;
}

GradCheckReport finite_difference_check(const std::function<Tensor(Tape&)>& loss,
                                        std::span<const NamedTensor> params, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");

  std::vector<Tensor> handles;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
    handles.push_back(t);
  }

  Tape tape;
  Tensor value = loss(tape);
  if (!std::isfinite(value.item())) throw NumericalError("finite_difference_check: loss is not finite");
  // A loss that does not depend on any parameter has an all-zero gradient.
  if (value.requires_grad()) tape.backward(value);

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = handles[p];
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = evaluate(loss);
      values[i] = original - step;
      const double minus = evaluate(loss);
      values[i] = original;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw NumericalError("finite_difference_check: non-finite value at " + params[p].name + "[" +
                             std::to_string(i) + "]");
      const double numeric = (plus - minus) / (2.0 * step);
      const double err = relative_error(analytic[i], numeric);
      if (!std::isfinite(analytic[i]))
        throw NumericalError("finite_difference_check: non-finite gradient at " + params[p].name + "[" +
                             std::to_string(i) + "]");
      ++report.coordinates_checked;
      if (err >= report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = params[p].name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace dmlp::ad
