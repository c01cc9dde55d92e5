#pragma once

// Dense n-dimensional tensors (64-bit float, row-major) plus a minimal
// reverse-mode autodiff tape.
//
// A Tensor is a cheap shared handle; copies alias the same storage. Ops
// that participate in differentiation record themselves on the active
// GradTape (see TapeScope). GradTape::backward replays the recorded ops in
// reverse and accumulates gradients into per-tensor buffers. Gradients of
// leaf tensors accumulate across backward calls; every op output has its
// gradient cleared at the start of each backward pass.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "spikeflow/errors.hpp"

namespace spikeflow {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

// When enabled, ops raise NumericError as soon as they produce a non-finite
// value. Off by default; training turns it on so divergence fails loudly.
inline bool& strict_numerics() {
  static bool enabled = false;
  return enabled;
}

inline void set_strict_numerics(bool enabled) { strict_numerics() = enabled; }

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    impl_->values.assign(shape_numel(impl_->shape), fill);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (values.size() != shape_numel(shape)) {
      throw DimensionError("Tensor: " + std::to_string(values.size()) +
                           " values do not fill shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    return Tensor(std::move(shape), value, requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor(Shape{1}, value, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return impl().shape.size(); }
  std::size_t numel() const { return impl().values.size(); }

  std::size_t dim(std::size_t axis) const {
    const Shape& s = impl().shape;
    if (axis >= s.size()) {
      throw DimensionError("Tensor::dim: axis " + std::to_string(axis) +
                           " out of range for shape " + shape_str(s));
    }
    return s[axis];
  }

  std::span<const double> values() const { return impl().values; }

  // Direct mutation is only safe before the tensor is used by a recorded op.
  std::span<double> mutable_values() { return impl().values; }

  template <class... Ix>
  std::size_t offset(Ix... ix) const {
    const Shape& s = impl().shape;
    if (sizeof...(ix) != s.size()) {
      throw DimensionError("Tensor: " + std::to_string(sizeof...(ix)) +
                           " indices for shape " + shape_str(s));
    }
    std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t flat = 0;
    for (std::size_t axis = 0; axis < s.size(); ++axis) {
      if (idx[axis] >= s[axis]) {
        throw DimensionError("Tensor: index " + std::to_string(idx[axis]) +
                             " out of range on axis " + std::to_string(axis) +
                             " for shape " + shape_str(s));
      }
      flat = flat * s[axis] + idx[axis];
    }
    return flat;
  }

  template <class... Ix>
  double operator()(Ix... ix) const {
    return impl().values[offset(ix...)];
  }

  template <class... Ix>
  double& at(Ix... ix) {
    return impl().values[offset(ix...)];
  }

  bool requires_grad() const { return impl().requires_grad; }
  void set_requires_grad(bool requires_grad) { impl().requires_grad = requires_grad; }

  // Gradient buffer, allocated zero-filled on first access.
  std::span<double> grad_buffer() const {
    Impl& im = impl();
    if (im.grad.size() != im.values.size()) im.grad.assign(im.values.size(), 0.0);
    return im.grad;
  }

  std::span<const double> grad() const { return grad_buffer(); }

  void zero_grad() {
    Impl& im = impl();
    im.grad.assign(im.values.size(), 0.0);
  }

  // Stable identity of the underlying storage, for aliasing checks.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    mutable std::vector<double> grad;
    bool requires_grad = false;
  };

  Impl& impl() const {
    if (!impl_) throw ContractError("Tensor: using a default-constructed tensor");
    return *impl_;
  }

  std::shared_ptr<Impl> impl_;
};

class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  struct Op {
    const char* name;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  static GradTape*& active() {
    thread_local GradTape* tape = nullptr;
    return tape;
  }

  void record(const char* name, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward) {
    ops_.push_back(Op{name, std::move(inputs), std::move(output), std::move(backward)});
  }

  std::size_t num_ops() const { return ops_.size(); }
  bool empty() const { return ops_.empty(); }

  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients of
  // recorded op outputs are reset first, so intermediate grads never leak
  // between calls; leaf gradients are left alone and accumulate.
  void backward(const Tensor& loss) {
    if (ops_.empty()) {
      throw ContractError("GradTape::backward: tape is empty");
    }
    if (loss.numel() != 1) {
      throw ContractError("GradTape::backward: loss has " +
                          std::to_string(loss.numel()) +
                          " elements, expected a scalar");
    }
    for (Op& op : ops_) {
      std::span<double> g = op.output.grad_buffer();
      std::fill(g.begin(), g.end(), 0.0);
    }
    loss.grad_buffer()[0] = 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->backward) it->backward();
    }
  }

 private:
  std::vector<Op> ops_;
};

// Installs a tape as the active recording target for the current scope.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape) : prev_(GradTape::active()) {
    GradTape::active() = &tape;
  }
  ~TapeScope() { GradTape::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* prev_;
};

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " does not match " + shape_str(b.shape()));
  }
}

inline void check_rank(const char* op, const char* arg, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " has shape " +
                         shape_str(t.shape()) + ", expected rank " +
                         std::to_string(rank));
  }
}

inline void check_finite(const char* op, const Tensor& t) {
  if (!strict_numerics()) return;
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

// Records output = op(inputs...) on the active tape when any input requires
// gradients. Marks the output as requiring gradients so downstream ops keep
// recording.
inline void record_op(const char* name, std::initializer_list<Tensor> inputs,
                      Tensor& output, std::function<void()> backward) {
  check_finite(name, output);
  GradTape* tape = GradTape::active();
  if (!tape) return;
  bool needs_grad = false;
  for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
  if (!needs_grad) return;
  output.set_requires_grad(true);
  tape->record(name, std::vector<Tensor>(inputs), output, std::move(backward));
}

}  // namespace detail

}  // namespace spikeflow
