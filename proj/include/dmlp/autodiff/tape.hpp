#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dmlp/autodiff/tensor.hpp"

namespace dmlp::ad {

// Records differentiable operations in execution order so that backward() can
// replay their gradient rules in reverse. One tape per training step; a tape
// and the tensors it touches belong to a single thread while recording.
class Tape {
 public:
  enum class Mode { record, inference };

  Tape() = default;
  explicit Tape(Mode mode) : mode_(mode) {}

  // Non-recording tape: ops still compute values but nothing is kept and
  // outputs never require grad.
  static Tape inference() { return Tape(Mode::inference); }

  bool recording() const { return mode_ == Mode::record; }

  // Called by the ops. `backward_rule` reads output.grad() and accumulates
  // into the inputs' gradients.
  void record(Tensor output, std::function<void()> backward_rule);

  // Fills gradients of every requires_grad leaf reachable from `loss`.
  // Leaf gradients accumulate across calls; intermediate gradients are reset.
  // Throws std::logic_error for an empty tape, ShapeError for a non-scalar
  // loss and std::invalid_argument when `loss` was not produced on this tape.
  void backward(const Tensor& loss);

  void clear();
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor output;
    std::function<void()> backward_rule;
  };

  Mode mode_ = Mode::record;
  std::vector<Entry> entries_;
};

}  // namespace dmlp::ad
