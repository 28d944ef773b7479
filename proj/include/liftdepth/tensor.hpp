#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>

#include "liftdepth/common.hpp"

namespace liftdepth {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense n-dimensional array of doubles with an optional gradient buffer.
// Handle semantics: copies share the underlying storage, which is what the
// tape needs to route gradients back to the tensors the caller still holds.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->data.assign(std::size_t(numel(shape)), value);
    t.impl_->shape = std::move(shape);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (int(data.size()) != numel(shape))
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const { return impl_->shape[std::size_t(i)]; }
  int rank() const { return int(impl_->shape.size()); }
  int size() const { return int(impl_->data.size()); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double operator[](int i) const { return impl_->data[std::size_t(i)]; }
  double& operator[](int i) { return impl_->data[std::size_t(i)]; }

  double item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  const std::vector<double>& grad() const {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  void accumulate_grad(const std::vector<double>& g) {
    impl_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
  }

  bool all_finite() const {
    for (double v : impl_->data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Deep copy of values (no grad, no history).
  Tensor clone() const {
    Tensor t = Tensor::from(shape(), impl_->data, impl_->requires_grad);
    return t;
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Dynamic tape of executed primitives. Ops append their backward closure in
// execution order; backward() replays the closures in reverse, visiting each
// node exactly once. One Graph (and its backward pass) is confined to a
// single thread; the active graph is tracked per thread.
class Graph {
 public:
  Graph() : parent_(active_ref()) { active_ref() = this; }
  ~Graph() { active_ref() = parent_; }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  static Graph* active() { return active_ref(); }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse execution
  // order, accumulating into the grad buffer of every tensor that
  // requires_grad. Parameters not touched by the loss keep zero grads.
  void backward(Tensor& loss) {
    if (loss.size() != 1)
      throw ShapeError("backward() requires a scalar loss, got " + shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw ValueError("backward() on a tensor that does not require grad");
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  static Graph*& active_ref() {
    thread_local Graph* active = nullptr;
    return active;
  }

  std::vector<std::function<void()>> nodes_;
  Graph* parent_;
};

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
}

inline void check_rank(const Tensor& t, int r, const char* op) {
  if (t.rank() != r)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) +
                     ", got " + shape_str(t.shape()));
}

// True when the op's output should carry history: some input requires grad
// and a tape is currently recording.
inline bool tracing(std::initializer_list<const Tensor*> inputs) {
  if (Graph::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace detail

}  // namespace liftdepth
