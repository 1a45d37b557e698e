#include "dmlp/autodiff/ops.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <string>

#include "dmlp/errors.hpp"
#include "dmlp/kernels.hpp"

namespace dmlp::ad {

namespace {

std::atomic<bool> g_corrupt_relu{false};

[[noreturn]] void shape_fail(OpKind kind, const std::string& what) {
  throw ShapeError(std::string(op_name(kind)) + ": " + what);
}

std::string shapes_of(std::span<const Tensor> ts) {
  std::string s;
  for (std::size_t i = 0; i < ts.size(); ++i) s += (i ? " and " : "") + shape_string(ts[i].shape());
  return s;
}

bool any_requires_grad(std::span<const Tensor> inputs) {
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

// Marks `out` differentiable and records `rule` when any input needs a gradient.
template <typename Rule>
void maybe_record(Tape& tape, Tensor& out, std::initializer_list<Tensor> inputs, Rule&& rule) {
  if (!tape.recording()) return;
  if (!any_requires_grad(std::span<const Tensor>(inputs.begin(), inputs.size()))) return;
  out.set_requires_grad(true);
  tape.record(out, std::forward<Rule>(rule));
}

std::size_t last_extent(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::elementwise_mul: return "elementwise_mul";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::concat_lastdim: return "concat_lastdim";
    case OpKind::reshape: return "reshape";
    case OpKind::mean: return "mean";
    case OpKind::sum: return "sum";
    case OpKind::scale: return "scale";
  }
  return "unknown";
}

std::span<const OpKind> all_op_kinds() {
  static constexpr std::array kinds{
      OpKind::matmul, OpKind::add,        OpKind::sub,        OpKind::elementwise_mul,
      OpKind::relu,   OpKind::softmax,    OpKind::log_softmax, OpKind::log,
      OpKind::exp,    OpKind::layer_norm, OpKind::concat_lastdim, OpKind::reshape,
      OpKind::mean,   OpKind::sum,        OpKind::scale};
  return kinds;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() == 2 && sb.size() == 2) {
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) shape_fail(OpKind::matmul, "inner dims disagree for " + shape_string(sa) + " x " + shape_string(sb));
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul_acc(a.values(), b.values(), out.mutable_values(), m, k, n);
    maybe_record(tape, out, {a, b}, [a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) kernels::matmul_a_bt_acc(g, b.values(), a.mutable_grad(), m, k, n);
      if (b.requires_grad()) kernels::matmul_at_b_acc(a.values(), g, b.mutable_grad(), m, k, n);
    });
    return out;
  }
  if (sa.size() == 3 && sb.size() == 3) {
    const std::size_t batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
    if (sb[0] != batch || sb[1] != k)
      shape_fail(OpKind::matmul, "batched operands disagree: " + shape_string(sa) + " x " + shape_string(sb));
    Tensor out = Tensor::zeros({batch, m, n});
    kernels::batched_matmul_acc(a.values(), b.values(), out.mutable_values(), batch, m, k, n);
    maybe_record(tape, out, {a, b}, [a, b, out, batch, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad())
        kernels::batched_matmul_a_bt_acc(g, b.values(), a.mutable_grad(), batch, m, k, n);
      if (b.requires_grad())
        kernels::batched_matmul_at_b_acc(a.values(), g, b.mutable_grad(), batch, m, k, n);
    });
    return out;
  }
  shape_fail(OpKind::matmul, "needs two rank-2 or two rank-3 operands, got " + shape_string(sa) +
                                 " x " + shape_string(sb));
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) {
    Tensor out = Tensor::zeros(sa);
    auto o = out.mutable_values();
    auto va = a.values();
    auto vb = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] + vb[i];
    maybe_record(tape, out, {a, b}, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
    return out;
  }
  // Row broadcast: b's shape equals the trailing axes of a.
  const bool trailing = sb.size() < sa.size() && !sb.empty() &&
                        std::equal(sb.begin(), sb.end(), sa.end() - static_cast<std::ptrdiff_t>(sb.size()));
  if (!trailing) shape_fail(OpKind::add, "cannot add " + shape_string(sa) + " and " + shape_string(sb));
  const std::size_t cols = b.numel();
  const std::size_t rows = a.numel() / cols;
  Tensor out = Tensor::zeros(sa);
  auto o = out.mutable_values();
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = va[r * cols + c] + vb[c];
  maybe_record(tape, out, {a, b}, [a, b, out, rows, cols]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_fail(OpKind::sub, "shapes differ: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] - vb[i];
  maybe_record(tape, out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    shape_fail(OpKind::elementwise_mul,
               "shapes differ: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_values();
  auto va = a.values();
  auto vb = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = va[i] * vb[i];
  maybe_record(tape, out, {a, b}, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      auto vb = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      auto va = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;
  maybe_record(tape, out, {x}, [x, out]() mutable {
    const double factor = g_corrupt_relu.load() ? 1.5 : 1.0;
    auto g = out.grad();
    auto v = x.values();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (v[i] > 0.0) gx[i] += factor * g[i];
  });
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
  const std::size_t cols = last_extent(x);
  const std::size_t rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    double* y = o.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  maybe_record(tape, out, {x}, [x, out, rows, cols]() mutable {
    auto g = out.grad();
    auto y = out.values();
    auto gx = x.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
    }
  });
  return out;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  const std::size_t cols = last_extent(x);
  const std::size_t rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = v.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = row[c] - lse;
  }
  maybe_record(tape, out, {x}, [x, out, rows, cols]() mutable {
    auto g = out.grad();
    auto y = out.values();
    auto gx = x.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * total;
    }
  });
  return out;
}

Tensor log(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (!(v[i] > 0.0))
      throw NumericalError("log: non-positive input " + std::to_string(v[i]) + " at index " + std::to_string(i));
    o[i] = std::log(v[i]);
  }
  maybe_record(tape, out, {x}, [x, out]() mutable {
    auto g = out.grad();
    auto v = x.values();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / v[i];
  });
  return out;
}

Tensor exp(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(v[i]);
  maybe_record(tape, out, {x}, [x, out]() mutable {
    auto g = out.grad();
    auto y = out.values();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) shape_fail(OpKind::layer_norm, "epsilon must be positive");
  if (x.rank() == 0) shape_fail(OpKind::layer_norm, "needs at least one axis");
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  const bool affine = gain.defined() || bias.defined();
  if (affine) {
    if (!gain.defined() || !bias.defined())
      shape_fail(OpKind::layer_norm, "gain and bias must be given together");
    if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols})
      shape_fail(OpKind::layer_norm, "affine parameters " + shape_string(gain.shape()) + ", " +
                                         shape_string(bias.shape()) + " do not match input " +
                                         shape_string(x.shape()));
  }

  std::vector<double> normalized(x.numel());
  std::vector<double> rstd(rows);
  kernels::layer_norm_rows(x.values(), normalized, rstd, rows, cols, eps);

  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  if (affine) {
    auto gv = gain.values();
    auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        o[r * cols + c] = normalized[r * cols + c] * gv[c] + bv[c];
  } else {
    std::copy(normalized.begin(), normalized.end(), o.begin());
  }

  auto rule = [x, gain, bias, out, affine, rows, cols, xhat = std::move(normalized),
               rstd = std::move(rstd)]() mutable {
    auto g = out.grad();
    std::vector<double> dxhat(g.begin(), g.end());
    if (affine) {
      auto gv = gain.values();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dxhat[r * cols + c] *= gv[c];
      if (gain.requires_grad()) {
        auto gg = gain.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * xhat[r * cols + c];
      }
      if (bias.requires_grad()) {
        auto gb = bias.mutable_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    }
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* d = dxhat.data() + r * cols;
      const double* h = xhat.data() + r * cols;
      double mean_d = 0.0, mean_dh = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        mean_d += d[c];
        mean_dh += d[c] * h[c];
      }
      mean_d *= inv_n;
      mean_dh *= inv_n;
      for (std::size_t c = 0; c < cols; ++c)
        gx[r * cols + c] += rstd[r] * (d[c] - mean_d - h[c] * mean_dh);
    }
  };

  if (affine)
    maybe_record(tape, out, {x, gain, bias}, std::move(rule));
  else
    maybe_record(tape, out, {x}, std::move(rule));
  return out;
}

Tensor concat_lastdim(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) shape_fail(OpKind::concat_lastdim, "no operands");
  const Shape& first = parts[0].shape();
  if (first.empty()) shape_fail(OpKind::concat_lastdim, "operands need at least one axis");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin()))
      shape_fail(OpKind::concat_lastdim, "operands disagree on leading axes: " + shapes_of(parts));
    widths.push_back(s.back());
    total += s.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  const std::size_t rows = parts[0].numel() / widths[0];
  Tensor out = Tensor::zeros(out_shape);
  auto o = out.mutable_values();
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[p]), widths[p],
                  o.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += widths[p];
  }

  if (tape.recording() && any_requires_grad(parts)) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    tape.record(out, [inputs, out, widths, rows, total]() mutable {
      auto g = out.grad();
      std::size_t off = 0;
      for (std::size_t p = 0; p < inputs.size(); ++p) {
        if (inputs[p].requires_grad()) {
          auto gp = inputs[p].mutable_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < widths[p]; ++c) gp[r * widths[p] + c] += g[r * total + off + c];
        }
        off += widths[p];
      }
    });
  }
  return out;
}

Tensor concat_lastdim(Tape& tape, const Tensor& a, const Tensor& b) {
  const std::array<Tensor, 2> parts{a, b};
  return concat_lastdim(tape, parts);
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    shape_fail(OpKind::reshape, "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  Tensor out = Tensor::from_values(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  maybe_record(tape, out, {x}, [x, out]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  maybe_record(tape, out, {x}, [x, out]() mutable {
    const double g = out.grad()[0];
    for (double& gx : x.mutable_grad()) gx += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.numel());
  Tensor out = Tensor::scalar(total / n);
  maybe_record(tape, out, {x}, [x, out, n]() mutable {
    const double g = out.grad()[0] / n;
    for (double& gx : x.mutable_grad()) gx += g;
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.mutable_values();
  auto v = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * v[i];
  maybe_record(tape, out, {x}, [x, out, factor]() mutable {
    auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
  return out;
}

Tensor forward_op(Tape& tape, OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() != n)
      shape_fail(kind, "expects " + std::to_string(n) + " operand(s), got " + std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::matmul: need(2); return matmul(tape, inputs[0], inputs[1]);
    case OpKind::add: need(2); return add(tape, inputs[0], inputs[1]);
    case OpKind::sub: need(2); return sub(tape, inputs[0], inputs[1]);
    case OpKind::elementwise_mul: need(2); return mul(tape, inputs[0], inputs[1]);
    case OpKind::relu: need(1); return relu(tape, inputs[0]);
    case OpKind::softmax: need(1); return softmax(tape, inputs[0]);
    case OpKind::log_softmax: need(1); return log_softmax(tape, inputs[0]);
    case OpKind::log: need(1); return log(tape, inputs[0]);
    case OpKind::exp: need(1); return exp(tape, inputs[0]);
    case OpKind::layer_norm:
      if (inputs.size() == 1) return layer_norm(tape, inputs[0], {}, {}, attrs.eps);
      need(3);
      return layer_norm(tape, inputs[0], inputs[1], inputs[2], attrs.eps);
    case OpKind::concat_lastdim: return concat_lastdim(tape, inputs);
    case OpKind::reshape: need(1); return reshape(tape, inputs[0], attrs.shape);
    case OpKind::mean: need(1); return mean(tape, inputs[0]);
    case OpKind::sum: need(1); return sum(tape, inputs[0]);
    case OpKind::scale: need(1); return scale(tape, inputs[0], attrs.factor);
  }
  shape_fail(kind, "unknown op kind");
}

namespace debug {

void set_corrupt_relu_backward(bool on) { g_corrupt_relu.store(on); }
bool corrupt_relu_backward() { return g_corrupt_relu.load(); }

}  // namespace debug

}  // namespace dmlp::ad
