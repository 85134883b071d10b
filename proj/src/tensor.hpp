#pragma once

// Dense float64 tensors with a reverse-mode tape.
//
// Operations record a backward rule on the thread's active tape (see
// TapeScope) whenever at least one input requires a gradient. Without an
// active tape every operation is a plain forward computation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace hyperrna {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<const double> values() const { return impl_->value; }
  std::span<double> mutable_values() { return impl_->value; }
  double item() const;
  double at(std::size_t flat_index) const { return impl_->value.at(flat_index); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  // Copy of the values with no tape history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad);

  std::shared_ptr<TensorImpl> impl_;
};

Tensor make_tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

class Tape {
 public:
  struct Entry {
    std::shared_ptr<TensorImpl> output;
    std::function<void(const TensorImpl& output)> backward;
  };

  void record(std::shared_ptr<TensorImpl> output, std::function<void(const TensorImpl&)> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
  void backward(const Tensor& loss);

  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Entry> entries_;
};

Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Runs backward on the active tape.
void backward(const Tensor& loss);

// ---- primitives -----------------------------------------------------------

// a: [..., m, k], b: [k, n] -> [..., m, n]
Tensor matmul(const Tensor& a, const Tensor& b);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor scatter_add_rows(const Tensor& a, std::span<const std::size_t> rows, std::size_t num_rows);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
// Zero mean, unit variance along `axis`; no affine terms.
Tensor layer_norm(const Tensor& a, std::size_t axis, double eps = 1e-5);
// Inverted dropout: kept entries are divided by (1 - rate) in training.
Tensor dropout(const Tensor& a, double rate, bool train, Rng& rng);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);
// Euclidean norm over the last axis, kept as a size-1 axis. The gradient at
// an exactly-zero row is taken to be zero.
Tensor l2_norm_rows(const Tensor& a);

// ---- optimizer -------------------------------------------------------------

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of every parameter, in place. A parameter
// with no gradient buffer is treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);
// Explicit-gradient form used by the checkpoint tests and the C API.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state);

}  // namespace hyperrna
