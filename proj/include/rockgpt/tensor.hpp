// tensor.hpp: dense nd-array plus a reverse-mode tape.
// ops execute eagerly and append one backward record each; running the tape
// in reverse program order is a valid reverse topological order because a
// tensor is always created before it is consumed.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rockgpt/common.hpp"
#include "rockgpt/rng.hpp"

namespace rockgpt {

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty means zero / never touched
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  Tensor() : d_(std::make_shared<TensorData<T>>()) {}

  static Tensor zeros(Shape s) {
    Tensor t;
    t.d_->shape = std::move(s);
    t.d_->values.assign(rockgpt::numel(t.d_->shape), T(0));
    return t;
  }
  static Tensor full(Shape s, T v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.d_->values) x = v;
    return t;
  }
  static Tensor from(Shape s, std::vector<T> v) {
    if (static_cast<int64_t>(v.size()) != rockgpt::numel(s))
      throw ShapeError("tensor data size does not match shape " + shape_str(s));
    Tensor t;
    t.d_->shape = std::move(s);
    t.d_->values = std::move(v);
    return t;
  }
  static Tensor scalar(T v) { return from({1}, {v}); }
  // uniform in [-bound, bound], the init used for all weights
  static Tensor uniform(Shape s, T bound, Rng& rng) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.d_->values) x = static_cast<T>(rng.uniform(-double(bound), double(bound)));
    return t;
  }

  const Shape& shape() const { return d_->shape; }
  int64_t size(int axis) const { return d_->shape[axis]; }
  int64_t numel() const { return static_cast<int64_t>(d_->values.size()); }
  int rank() const { return static_cast<int>(d_->shape.size()); }

  std::vector<T>& values() { return d_->values; }
  const std::vector<T>& values() const { return d_->values; }
  T* data() { return d_->values.data(); }
  const T* data() const { return d_->values.data(); }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(d_->shape));
    return d_->values[0];
  }

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    d_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !d_->grad.empty(); }
  // allocated on first touch, zero-filled
  std::vector<T>& grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->values.size(), T(0));
    return d_->grad;
  }
  const std::vector<T>& grad_view() const {
    static const std::vector<T> empty;
    return d_->grad.empty() ? empty : d_->grad;
  }
  void zero_grad() { d_->grad.clear(); }

  std::shared_ptr<TensorData<T>> handle() const { return d_; }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

template <typename T>
class Tape {
 public:
  struct Record {
    const char* op;
    std::function<void()> backward;
  };

  void record(const char* op, std::function<void()> fn) {
    records_.push_back({op, std::move(fn)});
  }

  // seeds d(loss)/d(loss)=1 and replays records newest to oldest, each once
  void backward(Tensor<T>& loss) {
    if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss");
    loss.grad()[0] = T(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      it->backward();
      ++executed_;
    }
  }

  void clear() {
    records_.clear();
    executed_ = 0;
  }
  size_t record_count() const { return records_.size(); }
  size_t executed_count() const { return executed_; }

 private:
  std::vector<Record> records_;
  size_t executed_ = 0;
};

// passed through every op and module forward. tape == nullptr runs inference
// with no recording; training toggles batch-norm statistics and dropout.
template <typename T>
struct Context {
  Tape<T>* tape = nullptr;
  bool training = false;
  Rng* rng = nullptr;  // dropout noise

  bool grad() const { return tape != nullptr; }
};

template <typename T>
inline std::vector<T>& ensure_grad(const std::shared_ptr<TensorData<T>>& d) {
  if (d->grad.empty()) d->grad.assign(d->values.size(), T(0));
  return d->grad;
}

}  // namespace rockgpt
