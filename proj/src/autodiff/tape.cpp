#include "dmlp/autodiff/tape.hpp"

#include <stdexcept>

#include "dmlp/errors.hpp"

namespace dmlp::ad {

void Tape::record(Tensor output, std::function<void()> backward_rule) {
  if (!recording()) return;
  entries_.push_back(Entry{std::move(output), std::move(backward_rule)});
}

void Tape::backward(const Tensor& loss) {
  if (entries_.empty()) throw std::logic_error("backward() on an empty tape");
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));

  std::size_t loss_index = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.same_storage(loss)) {
      loss_index = i;
      break;
    }
  }
  if (loss_index == entries_.size())
    throw std::invalid_argument("backward(): loss was not produced by an op recorded on this tape");

  for (auto& entry : entries_) entry.output.zero_grad();
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.0;

  for (std::size_t i = loss_index + 1; i-- > 0;) entries_[i].backward_rule();
}

void Tape::clear() { entries_.clear(); }

}  // namespace dmlp::ad
