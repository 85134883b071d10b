#include "tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "error.hpp"

namespace hyperrna {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

bool needs_tape(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Records `rule` for `out` when any input participates in differentiation.
template <typename Rule>
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, Rule&& rule) {
  if (!needs_tape(inputs)) return;
  out.set_requires_grad(true);
  g_active_tape->record(out.impl(), std::forward<Rule>(rule));
}

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::kShapeMismatch, op + ": " + shape_str(a) + " vs " + shape_str(b));
}

// outer x len x inner decomposition around `axis`.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                    shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Flat-index maps from an output element to its two broadcast operands.
struct BroadcastPlan {
  Shape out_shape;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

std::shared_ptr<const BroadcastPlan> plan_broadcast(const Shape& a, const Shape& b,
                                                    const char* op) {
  auto plan = std::make_shared<BroadcastPlan>();
  if (a == b) {
    plan->same = true;
    plan->out_shape = a;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      out[i] = pa[i];
    } else if (pa[i] == 1) {
      out[i] = pb[i];
    } else {
      shape_error(op, a, b);
    }
  }
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const std::size_t n = shape_numel(out);
  plan->out_shape = out;
  plan->a_index.resize(n);
  plan->b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    plan->a_index[flat] = ia;
    plan->b_index[flat] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
  return plan;
}

// Elementwise unary map with derivative expressed through input x and output y.
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor result = make_tensor(a.shape(), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, df](const TensorImpl& o) {
    if (!ai->requires_grad) return;
    ai->ensure_grad();
    for (std::size_t i = 0; i < o.value.size(); ++i) {
      ai->grad[i] += o.grad[i] * df(ai->value[i], o.value[i]);
    }
  });
  return result;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorCode::kShapeMismatch, "tensor of shape " + shape_str(shape) + " given " +
                                               std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_tensor(std::move(shape), std::vector<double>(n, fill), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_tensor(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return make_tensor({}, {value}); }

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::kNotScalar, "item() on tensor of shape " + shape_str(shape()));
  }
  return impl_->value[0];
}

Tensor Tensor::detach() const { return make_tensor(impl_->shape, impl_->value); }

// ---- tape --------------------------------------------------------------------

void Tape::record(std::shared_ptr<TensorImpl> output,
                  std::function<void(const TensorImpl&)> backward) {
  entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::kNotScalar,
                "backward() needs a scalar loss, got " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it->output);
  }
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  if (g_active_tape == nullptr) {
    throw Error(ErrorCode::kInvalidArgument, "backward() called with no active tape");
  }
  g_active_tape->backward(loss);
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t m = a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = ConstMapMat(a.values().data(), m, k) *
                                       ConstMapMat(b.values().data(), k, n);
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl(), bi = b.impl();
  record(result, {&a, &b}, [ai, bi, m, k, n](const TensorImpl& o) {
    ConstMapMat go(o.grad.data(), m, n);
    if (ai->requires_grad) {
      ai->ensure_grad();
      MapMat(ai->grad.data(), m, k).noalias() += go * ConstMapMat(bi->value.data(), k, n).transpose();
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      MapMat(bi->grad.data(), k, n).noalias() += ConstMapMat(ai->value.data(), m, k).transpose() * go;
    }
  });
  return result;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() < 2) shape_error("transpose", a.shape(), {});
  const std::size_t rows = a.dim(a.rank() - 2);
  const std::size_t cols = a.dim(a.rank() - 1);
  const std::size_t batch = a.numel() / (rows * cols);
  Shape out_shape = a.shape();
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t bidx = 0; bidx < batch; ++bidx) {
    const std::size_t base = bidx * rows * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[base + c * rows + r] = in[base + r * cols + c];
    }
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, batch, rows, cols](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t bidx = 0; bidx < batch; ++bidx) {
      const std::size_t base = bidx * rows * cols;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          ai->grad[base + r * cols + c] += o.grad[base + c * rows + r];
        }
      }
    }
  });
  return result;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  Tensor result = make_tensor(std::move(shape), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) ai->grad[i] += o.grad[i];
  });
  return result;
}

// ---- elementwise binary --------------------------------------------------------

namespace {

enum class BinaryKind { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, const char* op) {
  auto plan = plan_broadcast(a.shape(), b.shape(), op);
  const std::size_t n = shape_numel(plan->out_shape);
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[plan->same ? i : plan->a_index[i]];
    const double y = bv[plan->same ? i : plan->b_index[i]];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = x + y; break;
      case BinaryKind::kSub: out[i] = x - y; break;
      case BinaryKind::kMul: out[i] = x * y; break;
    }
  }
  Tensor result = make_tensor(plan->out_shape, std::move(out));
  ImplPtr ai = a.impl(), bi = b.impl();
  record(result, {&a, &b}, [ai, bi, plan, kind](const TensorImpl& o) {
    const std::size_t count = o.grad.size();
    if (ai->requires_grad) {
      ai->ensure_grad();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t ia = plan->same ? i : plan->a_index[i];
        const double g = kind == BinaryKind::kMul
                             ? o.grad[i] * bi->value[plan->same ? i : plan->b_index[i]]
                             : o.grad[i];
        ai->grad[ia] += g;
      }
    }
    if (bi->requires_grad) {
      bi->ensure_grad();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t ib = plan->same ? i : plan->b_index[i];
        double g = o.grad[i];
        if (kind == BinaryKind::kSub) g = -g;
        if (kind == BinaryKind::kMul) g *= ai->value[plan->same ? i : plan->a_index[i]];
        bi->grad[ib] += g;
      }
    }
  });
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor multiply(const Tensor& a, const Tensor& b) {
  return binary(a, b, BinaryKind::kMul, "multiply");
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

// ---- structural ------------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::kShapeMismatch, "concat of zero tensors");
  const Shape& ref = parts[0].shape();
  Shape out_shape = ref;
  out_shape.at(axis) = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != ref.size()) shape_error("concat", ref, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != ref[d]) shape_error("concat", ref, s);
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit outer = split_axis(out_shape, axis, "concat");
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    const auto v = p.values();
    for (std::size_t o = 0; o < outer.outer; ++o) {
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(o * len * outer.inner), len * outer.inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * outer.len + offset) * outer.inner));
    }
    offset += len;
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  if (g_active_tape != nullptr) {
    bool any = false;
    for (const Tensor& p : parts) any = any || p.requires_grad();
    if (any) {
      std::vector<ImplPtr> impls;
      for (const Tensor& p : parts) impls.push_back(p.impl());
      result.set_requires_grad(true);
      g_active_tape->record(result.impl(), [impls, offsets, outer, axis](const TensorImpl& o) {
        for (std::size_t pi = 0; pi < impls.size(); ++pi) {
          auto& in = *impls[pi];
          if (!in.requires_grad) continue;
          in.ensure_grad();
          const std::size_t len = in.shape[axis];
          for (std::size_t oo = 0; oo < outer.outer; ++oo) {
            const double* src = o.grad.data() + (oo * outer.len + offsets[pi]) * outer.inner;
            double* dst = in.grad.data() + oo * len * outer.inner;
            for (std::size_t i = 0; i < len * outer.inner; ++i) dst[i] += src[i];
          }
        }
      });
    }
  }
  return result;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(a.shape(), axis, "slice");
  if (begin > end || end > s.len) {
    throw Error(ErrorCode::kShapeMismatch, "slice [" + std::to_string(begin) + "," +
                                               std::to_string(end) + ") of axis " +
                                               std::to_string(axis) + " in " + shape_str(a.shape()));
  }
  const std::size_t len = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner),
                len * s.inner, out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, s, begin, len](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      const double* src = o.grad.data() + oo * len * s.inner;
      double* dst = ai->grad.data() + (oo * s.len + begin) * s.inner;
      for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
    }
  });
  return result;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() < 1) shape_error("gather_rows", a.shape(), {});
  const std::size_t n = a.dim(0);
  const std::size_t width = n == 0 ? 0 : a.numel() / n;
  Shape out_shape = a.shape();
  out_shape[0] = rows.size();
  std::vector<double> out(rows.size() * width);
  const auto v = a.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw Error(ErrorCode::kShapeMismatch, "gather_rows index " + std::to_string(rows[r]) +
                                                 " out of range for " + shape_str(a.shape()));
    }
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(rows[r] * width), width,
                out.begin() + static_cast<std::ptrdiff_t>(r * width));
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  record(result, {&a}, [ai, idx = std::move(idx), width](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double* src = o.grad.data() + r * width;
      double* dst = ai->grad.data() + idx[r] * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
  return result;
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> rows, std::size_t num_rows) {
  if (a.rank() < 1 || a.dim(0) != rows.size()) {
    throw Error(ErrorCode::kShapeMismatch, "scatter_add_rows: " + shape_str(a.shape()) + " with " +
                                               std::to_string(rows.size()) + " indices");
  }
  const std::size_t width = rows.empty() ? shape_numel(Shape(a.shape().begin() + 1, a.shape().end()))
                                         : a.numel() / rows.size();
  Shape out_shape = a.shape();
  out_shape[0] = num_rows;
  std::vector<double> out(num_rows * width, 0.0);
  const auto v = a.values();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= num_rows) {
      throw Error(ErrorCode::kShapeMismatch, "scatter_add_rows index " + std::to_string(rows[r]) +
                                                 " >= " + std::to_string(num_rows));
    }
    for (std::size_t i = 0; i < width; ++i) out[rows[r] * width + i] += v[r * width + i];
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  record(result, {&a}, [ai, idx = std::move(idx), width](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t i = 0; i < width; ++i) ai->grad[r * width + i] += o.grad[idx[r] * width + i];
    }
  });
  return result;
}

// ---- elementwise unary -------------------------------------------------------------

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x < 0.0 ? 0.0 : x; },  // NaN passes through
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "softmax");
  std::vector<double> out(a.numel());
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, v[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(v[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  Tensor result = make_tensor(a.shape(), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, s](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = oo * s.len * s.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          dot += o.grad[base + l * s.inner] * o.value[base + l * s.inner];
        }
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          ai->grad[i] += o.value[i] * (o.grad[i] - dot);
        }
      }
    }
  });
  return result;
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "log_softmax");
  std::vector<double> out(a.numel());
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, v[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(v[base + l * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] = v[base + l * s.inner] - lse;
    }
  }
  Tensor result = make_tensor(a.shape(), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, s](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = oo * s.len * s.inner + in;
        double gsum = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) gsum += o.grad[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          ai->grad[i] += o.grad[i] - std::exp(o.value[i]) * gsum;
        }
      }
    }
  });
  return result;
}

Tensor layer_norm(const Tensor& a, std::size_t axis, double eps) {
  const AxisSplit s = split_axis(a.shape(), axis, "layer_norm");
  std::vector<double> out(a.numel());
  std::vector<double> inv_std(s.outer * s.inner);
  const auto v = a.values();
  const double len = static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mu = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) mu += v[base + l * s.inner];
      mu /= len;
      double var = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double d = v[base + l * s.inner] - mu;
        var += d * d;
      }
      var /= len;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[o * s.inner + in] = is;
      for (std::size_t l = 0; l < s.len; ++l) {
        out[base + l * s.inner] = (v[base + l * s.inner] - mu) * is;
      }
    }
  }
  Tensor result = make_tensor(a.shape(), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, s, inv_std = std::move(inv_std), len](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = oo * s.len * s.inner + in;
        double gmean = 0.0, gy = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          gmean += o.grad[i];
          gy += o.grad[i] * o.value[i];
        }
        gmean /= len;
        gy /= len;
        const double is = inv_std[oo * s.inner + in];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          ai->grad[i] += is * (o.grad[i] - gmean - o.value[i] * gy);
        }
      }
    }
  });
  return result;
}

Tensor dropout(const Tensor& a, double rate, bool train, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "dropout rate must lie in [0, 1)");
  }
  if (!train || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> out(a.numel());
  const auto v = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  Tensor result = make_tensor(a.shape(), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, mask = std::move(mask)](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) ai->grad[i] += o.grad[i] * mask[i];
  });
  return result;
}

// ---- reductions ----------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.values()) total += x;
  Tensor result = make_tensor({}, {total});
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai](const TensorImpl& o) {
    ai->ensure_grad();
    for (double& g : ai->grad) g += o.grad[0];
  });
  return result;
}

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) {
  const AxisSplit s = split_axis(a.shape(), axis, "sum");
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto v = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.len; ++l) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        out[o * s.inner + in] += v[(o * s.len + l) * s.inner + in];
      }
    }
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, s](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t l = 0; l < s.len; ++l) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          ai->grad[(oo * s.len + l) * s.inner + in] += o.grad[oo * s.inner + in];
        }
      }
    }
  });
  return result;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const double len = static_cast<double>(a.shape().at(axis));
  return scale(sum(a, axis, keepdim), 1.0 / len);
}

Tensor l2_norm_rows(const Tensor& a) {
  if (a.rank() < 1) shape_error("l2_norm_rows", a.shape(), {});
  const std::size_t width = a.shape().back();
  const std::size_t rows = width == 0 ? 0 : a.numel() / width;
  Shape out_shape = a.shape();
  out_shape.back() = 1;
  std::vector<double> out(rows);
  const auto v = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t i = 0; i < width; ++i) sq += v[r * width + i] * v[r * width + i];
    out[r] = std::sqrt(sq);
  }
  Tensor result = make_tensor(std::move(out_shape), std::move(out));
  ImplPtr ai = a.impl();
  record(result, {&a}, [ai, width, rows](const TensorImpl& o) {
    ai->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      if (o.value[r] == 0.0) continue;
      const double f = o.grad[r] / o.value[r];
      for (std::size_t i = 0; i < width; ++i) ai->grad[r * width + i] += f * ai->value[r * width + i];
    }
  });
  return result;
}

// ---- Adam ----------------------------------------------------------------------------

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state) {
  if (grads.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: " + std::to_string(params.size()) +
                                               " parameters but " + std::to_string(grads.size()) +
                                               " gradients");
  }
  if (state.m.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorCode::kShapeMismatch, "adam_step: optimizer state tracks " +
                                               std::to_string(state.m.size()) + " parameters, got " +
                                               std::to_string(params.size()));
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (state.m[p].size() != params[p].numel() ||
        (!grads[p].empty() && grads[p].size() != params[p].numel())) {
      throw Error(ErrorCode::kShapeMismatch,
                  "adam_step: parameter " + std::to_string(p) + " of shape " +
                      shape_str(params[p].shape()) + " vs state/gradient size " +
                      std::to_string(state.m[p].size()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const Tensor& p : params) grads.emplace_back(p.grad().begin(), p.grad().end());
  adam_step(params, grads, state);
}

}  // namespace hyperrna
