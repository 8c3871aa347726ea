// ops.hpp: differentiable primitives over Tensor<T>.
// every op validates shapes, computes its output eagerly, and (when a tape is
// active and an input requires grad) appends one backward record. outputs own
// fresh storage; nothing aliases, so records can capture handles by value.
// reductions run in a fixed serial order, which keeps runs bit-reproducible.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "rockgpt/tensor.hpp"

namespace rockgpt {
namespace ops {

namespace detail {

// C[M,N] (+)= op(A) * op(B), all row-major
template <typename T>
void gemm(int64_t M, int64_t N, int64_t K, const T* A, bool tA, const T* B, bool tB, T* C,
          bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> a(A, tA ? K : M, tA ? M : K);
  Eigen::Map<const Mat> b(B, tB ? N : K, tB ? K : N);
  Eigen::Map<Mat> c(C, M, N);
  if (!tA && !tB) {
    if (accumulate) c.noalias() += a * b; else c.noalias() = a * b;
  } else if (tA && !tB) {
    if (accumulate) c.noalias() += a.transpose() * b; else c.noalias() = a.transpose() * b;
  } else if (!tA && tB) {
    if (accumulate) c.noalias() += a * b.transpose(); else c.noalias() = a * b.transpose();
  } else {
    if (accumulate) c.noalias() += a.transpose() * b.transpose();
    else c.noalias() = a.transpose() * b.transpose();
  }
}

template <typename T>
bool track(const Context<T>& ctx, std::initializer_list<const Tensor<T>*> ins) {
  if (!ctx.tape) return false;
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline Shape drop_axis(const Shape& s, int axis) {
  Shape r;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) r.push_back(s[i]);
  return r;
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < y.numel(); ++i) py[i] = pa[i] + pb[i];
  if (detail::track(ctx, {&a, &b})) {
    y.set_requires_grad(true);
    auto ha = a.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("add", [ha, hb, hy] {
      if (hy->grad.empty()) return;
      if (ha->requires_grad) {
        auto& g = ensure_grad(ha);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i];
      }
      if (hb->requires_grad) {
        auto& g = ensure_grad(hb);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] - b.data()[i];
  if (detail::track(ctx, {&a, &b})) {
    y.set_requires_grad(true);
    auto ha = a.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("sub", [ha, hb, hy] {
      if (hy->grad.empty()) return;
      if (ha->requires_grad) {
        auto& g = ensure_grad(ha);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i];
      }
      if (hb->requires_grad) {
        auto& g = ensure_grad(hb);
        for (size_t i = 0; i < g.size(); ++i) g[i] -= hy->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  if (detail::track(ctx, {&a, &b})) {
    y.set_requires_grad(true);
    auto ha = a.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("mul", [ha, hb, hy] {
      if (hy->grad.empty()) return;
      if (ha->requires_grad) {
        auto& g = ensure_grad(ha);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i] * hb->values[i];
      }
      if (hb->requires_grad) {
        auto& g = ensure_grad(hb);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i] * ha->values[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(Context<T>& ctx, const Tensor<T>& a, T c) {
  Tensor<T> y = Tensor<T>::zeros(a.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = a.data()[i] * c;
  if (detail::track(ctx, {&a})) {
    y.set_requires_grad(true);
    auto ha = a.handle(), hy = y.handle();
    ctx.tape->record("scale", [ha, hy, c] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(ha);
      for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i] * c;
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(Context<T>& ctx, const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("relu", [hx, hy] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (size_t i = 0; i < g.size(); ++i)
        if (hx->values[i] > T(0)) g[i] += hy->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> sigmoid(Context<T>& ctx, const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("sigmoid", [hx, hy] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (size_t i = 0; i < g.size(); ++i) {
        T s = hy->values[i];
        g[i] += hy->grad[i] * s * (T(1) - s);
      }
    });
  }
  return y;
}

// forward copy, no backward path: gradients stop here
template <typename T>
Tensor<T> stop_gradient(Context<T>&, const Tensor<T>& x) {
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  std::memcpy(y.data(), x.data(), sizeof(T) * x.numel());
  return y;
}

// ---- structural ----

template <typename T>
Tensor<T> reshape(Context<T>& ctx, const Tensor<T>& x, Shape s) {
  check(numel(s) == x.numel(), "reshape: element count changes " + shape_str(x.shape()) + " -> " + shape_str(s));
  Tensor<T> y = Tensor<T>::zeros(std::move(s));
  std::memcpy(y.data(), x.data(), sizeof(T) * x.numel());
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("reshape", [hx, hy] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i];
    });
  }
  return y;
}

namespace detail {
inline std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// flat index map out -> in for a permutation of axes
inline std::vector<int64_t> permute_map(const Shape& in_shape, const std::vector<int>& perm) {
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  auto in_st = strides_of(in_shape);
  auto out_st = strides_of(out_shape);
  int64_t n = numel(in_shape);
  std::vector<int64_t> map(n);
  int rank = static_cast<int>(perm.size());
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int a = 0; a < rank; ++a) {
      int64_t c = rem / out_st[a];
      rem -= c * out_st[a];
      src += c * in_st[perm[a]];
    }
    map[o] = src;
  }
  return map;
}
}  // namespace detail

template <typename T>
Tensor<T> permute(Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& perm) {
  check(static_cast<int>(perm.size()) == x.rank(), "permute: rank mismatch");
  Shape s(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) s[i] = x.shape()[perm[i]];
  auto map = detail::permute_map(x.shape(), perm);
  Tensor<T> y = Tensor<T>::zeros(std::move(s));
  for (int64_t o = 0; o < y.numel(); ++o) y.data()[o] = x.data()[map[o]];
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    auto m = std::make_shared<std::vector<int64_t>>(std::move(map));
    ctx.tape->record("permute", [hx, hy, m] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (size_t o = 0; o < m->size(); ++o) g[(*m)[o]] += hy->grad[o];
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat(Context<T>& ctx, const std::vector<Tensor<T>>& xs, int axis) {
  check(!xs.empty(), "concat: no inputs");
  Shape s = xs[0].shape();
  check(axis >= 0 && axis < static_cast<int>(s.size()), "concat: bad axis");
  int64_t total = 0;
  for (auto& t : xs) {
    Shape o = t.shape();
    o[axis] = s[axis];
    check(o == s, "concat: incompatible shapes");
    total += t.shape()[axis];
  }
  Shape out = s;
  out[axis] = total;
  Tensor<T> y = Tensor<T>::zeros(out);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[i];
  int64_t row = total * inner;
  int64_t off = 0;
  bool any_grad = false;
  for (auto& t : xs) {
    int64_t blk = t.shape()[axis] * inner;
    for (int64_t n = 0; n < outer; ++n)
      std::memcpy(y.data() + n * row + off, t.data() + n * blk, sizeof(T) * blk);
    off += blk;
    any_grad = any_grad || t.requires_grad();
  }
  if (ctx.tape && any_grad) {
    y.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorData<T>>> hs;
    for (auto& t : xs) hs.push_back(t.handle());
    auto hy = y.handle();
    ctx.tape->record("concat", [hs, hy, outer, inner, row] {
      if (hy->grad.empty()) return;
      int64_t off2 = 0;
      for (auto& h : hs) {
        int64_t blk = static_cast<int64_t>(h->values.size()) / outer;
        if (h->requires_grad) {
          auto& g = ensure_grad(h);
          for (int64_t n = 0; n < outer; ++n)
            for (int64_t i = 0; i < blk; ++i) g[n * blk + i] += hy->grad[n * row + off2 + i];
        }
        off2 += blk;
      }
      (void)inner;
    });
  }
  return y;
}

// contiguous window along one axis
template <typename T>
Tensor<T> slice(Context<T>& ctx, const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const Shape& s = x.shape();
  check(axis >= 0 && axis < x.rank(), "slice: bad axis");
  check(start >= 0 && len >= 0 && start + len <= s[axis], "slice: window out of range");
  Shape out = s;
  out[axis] = len;
  Tensor<T> y = Tensor<T>::zeros(out);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  int64_t in_row = s[axis] * inner, out_row = len * inner;
  for (int64_t n = 0; n < outer; ++n)
    std::memcpy(y.data() + n * out_row, x.data() + n * in_row + start * inner, sizeof(T) * out_row);
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("slice", [hx, hy, outer, inner, in_row, out_row, start] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (int64_t n = 0; n < outer; ++n)
        for (int64_t i = 0; i < out_row; ++i) g[n * in_row + start * inner + i] += hy->grad[n * out_row + i];
    });
  }
  return y;
}

// [1, rest...] -> [n, rest...], used to broadcast the start token over a batch
template <typename T>
Tensor<T> repeat0(Context<T>& ctx, const Tensor<T>& x, int64_t n) {
  check(x.rank() >= 1 && x.shape()[0] == 1, "repeat0: leading extent must be 1");
  Shape out = x.shape();
  out[0] = n;
  Tensor<T> y = Tensor<T>::zeros(out);
  int64_t blk = x.numel();
  for (int64_t i = 0; i < n; ++i) std::memcpy(y.data() + i * blk, x.data(), sizeof(T) * blk);
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("repeat0", [hx, hy, n, blk] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < blk; ++j) g[j] += hy->grad[i * blk + j];
    });
  }
  return y;
}

// x[n, rest...] + t[rest...] broadcast over the leading axis
template <typename T>
Tensor<T> add_leading(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& t) {
  check(x.rank() == t.rank() + 1, "add_leading: rank mismatch");
  for (int i = 0; i < t.rank(); ++i)
    check(x.shape()[i + 1] == t.shape()[i], "add_leading: trailing shape mismatch");
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  int64_t n = x.shape()[0], blk = t.numel();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < blk; ++j) y.data()[i * blk + j] = x.data()[i * blk + j] + t.data()[j];
  if (detail::track(ctx, {&x, &t})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), ht = t.handle(), hy = y.handle();
    ctx.tape->record("add_leading", [hx, ht, hy, n, blk] {
      if (hy->grad.empty()) return;
      if (hx->requires_grad) {
        auto& g = ensure_grad(hx);
        for (size_t i = 0; i < g.size(); ++i) g[i] += hy->grad[i];
      }
      if (ht->requires_grad) {
        auto& g = ensure_grad(ht);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < blk; ++j) g[j] += hy->grad[i * blk + j];
      }
    });
  }
  return y;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(Context<T>& ctx, const Tensor<T>& x) {
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.data()[i]);
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc));
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("sum_all", [hx, hy] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      T d = hy->grad[0];
      for (size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
  }
  return y;
}

template <typename T>
Tensor<T> mean_all(Context<T>& ctx, const Tensor<T>& x) {
  check(x.numel() > 0, "mean_all: empty tensor");
  double acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x.data()[i]);
  T inv = static_cast<T>(1.0 / static_cast<double>(x.numel()));
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(x.numel())));
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("mean_all", [hx, hy, inv] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      T d = hy->grad[0] * inv;
      for (size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum_axis(Context<T>& ctx, const Tensor<T>& x, int axis) {
  check(axis >= 0 && axis < x.rank(), "sum_axis: bad axis");
  const Shape& s = x.shape();
  int64_t outer = 1, inner = 1, ax = s[axis];
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
  Tensor<T> y = Tensor<T>::zeros(detail::drop_axis(s, axis));
  for (int64_t n = 0; n < outer; ++n)
    for (int64_t i = 0; i < inner; ++i) {
      double acc = 0;
      for (int64_t a = 0; a < ax; ++a) acc += static_cast<double>(x.data()[(n * ax + a) * inner + i]);
      y.data()[n * inner + i] = static_cast<T>(acc);
    }
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("sum_axis", [hx, hy, outer, inner, ax] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (int64_t n = 0; n < outer; ++n)
        for (int64_t a = 0; a < ax; ++a)
          for (int64_t i = 0; i < inner; ++i) g[(n * ax + a) * inner + i] += hy->grad[n * inner + i];
    });
  }
  return y;
}

// ---- linear algebra ----

template <typename T>
Tensor<T> matmul(Context<T>& ctx, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
        "matmul: needs [M,K]x[K,N], got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  int64_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  Tensor<T> y = Tensor<T>::zeros({M, N});
  detail::gemm(M, N, K, a.data(), false, b.data(), false, y.data(), false);
  if (detail::track(ctx, {&a, &b})) {
    y.set_requires_grad(true);
    auto ha = a.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("matmul", [ha, hb, hy, M, N, K] {
      if (hy->grad.empty()) return;
      if (ha->requires_grad)
        detail::gemm(M, K, N, hy->grad.data(), false, hb->values.data(), true, ensure_grad(ha).data(), true);
      if (hb->requires_grad)
        detail::gemm(K, N, M, ha->values.data(), true, hy->grad.data(), false, ensure_grad(hb).data(), true);
    });
  }
  return y;
}

// x[..., IN] * w[IN, OUT] + b[OUT]; bias optional (empty tensor)
template <typename T>
Tensor<T> linear(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(w.rank() == 2, "linear: weight must be [in,out]");
  int64_t in = w.shape()[0], out = w.shape()[1];
  check(x.rank() >= 1 && x.shape()[x.rank() - 1] == in,
        "linear: input width " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  bool has_bias = b.numel() > 0;
  if (has_bias) check(b.rank() == 1 && b.shape()[0] == out, "linear: bias must be [out]");
  Shape os = x.shape();
  os[os.size() - 1] = out;
  int64_t rows = x.numel() / in;
  Tensor<T> y = Tensor<T>::zeros(os);
  detail::gemm(rows, out, in, x.data(), false, w.data(), false, y.data(), false);
  if (has_bias)
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < out; ++c) y.data()[r * out + c] += b.data()[c];
  if (detail::track(ctx, {&x, &w, &b})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hw = w.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("linear", [hx, hw, hb, hy, rows, in, out, has_bias] {
      if (hy->grad.empty()) return;
      if (hx->requires_grad)
        detail::gemm(rows, in, out, hy->grad.data(), false, hw->values.data(), true, ensure_grad(hx).data(), true);
      if (hw->requires_grad)
        detail::gemm(in, out, rows, hx->values.data(), true, hy->grad.data(), false, ensure_grad(hw).data(), true);
      if (has_bias && hb->requires_grad) {
        auto& g = ensure_grad(hb);
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < out; ++c) g[c] += hy->grad[r * out + c];
      }
    });
  }
  return y;
}

// ---- softmax / losses ----

template <typename T>
Tensor<T> softmax(Context<T>& ctx, const Tensor<T>& x) {
  check(x.rank() >= 1, "softmax: needs rank >= 1");
  int64_t cols = x.shape()[x.rank() - 1];
  int64_t rows = x.numel() / cols;
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * cols;
    T* yr = y.data() + r * cols;
    T m = xr[0];
    for (int64_t c = 1; c < cols; ++c) m = std::max(m, xr[c]);
    double z = 0;
    for (int64_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - m);
      z += static_cast<double>(yr[c]);
    }
    T inv = static_cast<T>(1.0 / z);
    for (int64_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("softmax", [hx, hy, rows, cols] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (int64_t r = 0; r < rows; ++r) {
        const T* yr = hy->values.data() + r * cols;
        const T* dy = hy->grad.data() + r * cols;
        double dot = 0;
        for (int64_t c = 0; c < cols; ++c) dot += static_cast<double>(yr[c]) * dy[c];
        for (int64_t c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (dy[c] - static_cast<T>(dot));
      }
    });
  }
  return y;
}

// mean negative log-likelihood of integer targets under softmax(logits).
// fused for stability: log-sum-exp with max subtraction.
template <typename T>
Tensor<T> cross_entropy(Context<T>& ctx, const Tensor<T>& logits, const std::vector<int32_t>& targets) {
  check(logits.rank() == 2, "cross_entropy: logits must be [rows, vocab]");
  int64_t rows = logits.shape()[0], vocab = logits.shape()[1];
  check(static_cast<int64_t>(targets.size()) == rows, "cross_entropy: target count mismatch");
  auto probs = std::make_shared<std::vector<T>>(rows * vocab);
  double total = 0;
  for (int64_t r = 0; r < rows; ++r) {
    check(targets[r] >= 0 && targets[r] < vocab, "cross_entropy: target id out of vocabulary");
    const T* lr = logits.data() + r * vocab;
    T m = lr[0];
    for (int64_t c = 1; c < vocab; ++c) m = std::max(m, lr[c]);
    double z = 0;
    for (int64_t c = 0; c < vocab; ++c) z += std::exp(static_cast<double>(lr[c] - m));
    double lse = std::log(z) + static_cast<double>(m);
    total += lse - static_cast<double>(lr[targets[r]]);
    for (int64_t c = 0; c < vocab; ++c)
      (*probs)[r * vocab + c] = static_cast<T>(std::exp(static_cast<double>(lr[c]) - lse));
  }
  Tensor<T> y = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));
  if (detail::track(ctx, {&logits})) {
    y.set_requires_grad(true);
    auto hl = logits.handle(), hy = y.handle();
    auto tg = std::make_shared<std::vector<int32_t>>(targets);
    ctx.tape->record("cross_entropy", [hl, hy, probs, tg, rows, vocab] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hl);
      T d = hy->grad[0] / static_cast<T>(rows);
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < vocab; ++c) g[r * vocab + c] += d * (*probs)[r * vocab + c];
        g[r * vocab + (*tg)[r]] -= d;
      }
    });
  }
  return y;
}

// ---- normalization ----

// normalizes over the given axes (any subset), elementwise affine over those
// axes. gain/bias length = product of normalized extents.
template <typename T>
Tensor<T> layer_norm(Context<T>& ctx, const Tensor<T>& x, const std::vector<int>& axes,
                     const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  check(!axes.empty(), "layer_norm: no axes");
  std::vector<char> is_norm(x.rank(), 0);
  for (int a : axes) {
    check(a >= 0 && a < x.rank(), "layer_norm: bad axis");
    check(!is_norm[a], "layer_norm: duplicate axis");
    is_norm[a] = 1;
  }
  auto st = detail::strides_of(x.shape());
  int64_t n_inner = 1, n_outer = 1;
  for (int i = 0; i < x.rank(); ++i) (is_norm[i] ? n_inner : n_outer) *= x.shape()[i];
  check(gain.numel() == n_inner && bias.numel() == n_inner, "layer_norm: affine size mismatch");

  // flat offsets of the normalized block and of each outer group's origin
  auto inner_off = std::make_shared<std::vector<int64_t>>();
  auto outer_off = std::make_shared<std::vector<int64_t>>();
  inner_off->reserve(n_inner);
  outer_off->reserve(n_outer);
  {
    std::vector<int64_t> idx(x.rank(), 0);
    for (int64_t k = 0; k < n_inner; ++k) {
      int64_t off = 0;
      for (int i = 0; i < x.rank(); ++i)
        if (is_norm[i]) off += idx[i] * st[i];
      inner_off->push_back(off);
      for (int i = x.rank() - 1; i >= 0; --i) {
        if (!is_norm[i]) continue;
        if (++idx[i] < x.shape()[i]) break;
        idx[i] = 0;
      }
    }
    std::fill(idx.begin(), idx.end(), 0);
    for (int64_t k = 0; k < n_outer; ++k) {
      int64_t off = 0;
      for (int i = 0; i < x.rank(); ++i)
        if (!is_norm[i]) off += idx[i] * st[i];
      outer_off->push_back(off);
      for (int i = x.rank() - 1; i >= 0; --i) {
        if (is_norm[i]) continue;
        if (++idx[i] < x.shape()[i]) break;
        idx[i] = 0;
      }
    }
  }

  Tensor<T> y = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(n_outer);
  auto invstd = std::make_shared<std::vector<T>>(n_outer);
  const T* px = x.data();
  T* py = y.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  for (int64_t o = 0; o < n_outer; ++o) {
    int64_t base = (*outer_off)[o];
    double mu = 0;
    for (int64_t k = 0; k < n_inner; ++k) mu += static_cast<double>(px[base + (*inner_off)[k]]);
    mu /= static_cast<double>(n_inner);
    double var = 0;
    for (int64_t k = 0; k < n_inner; ++k) {
      double d = static_cast<double>(px[base + (*inner_off)[k]]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n_inner);
    T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*mean)[o] = static_cast<T>(mu);
    (*invstd)[o] = is;
    for (int64_t k = 0; k < n_inner; ++k) {
      int64_t at = base + (*inner_off)[k];
      py[at] = (px[at] - static_cast<T>(mu)) * is * pg[k] + pb[k];
    }
  }
  if (detail::track(ctx, {&x, &gain, &bias})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hg = gain.handle(), hb = bias.handle(), hy = y.handle();
    ctx.tape->record("layer_norm", [hx, hg, hb, hy, inner_off, outer_off, mean, invstd, n_inner] {
      if (hy->grad.empty()) return;
      int64_t n_outer2 = static_cast<int64_t>(outer_off->size());
      std::vector<T>* gx = hx->requires_grad ? &ensure_grad(hx) : nullptr;
      std::vector<T>* gg = hg->requires_grad ? &ensure_grad(hg) : nullptr;
      std::vector<T>* gb = hb->requires_grad ? &ensure_grad(hb) : nullptr;
      for (int64_t o = 0; o < n_outer2; ++o) {
        int64_t base = (*outer_off)[o];
        T mu = (*mean)[o], is = (*invstd)[o];
        double sum_dxh = 0, sum_dxh_xh = 0;
        for (int64_t k = 0; k < n_inner; ++k) {
          int64_t at = base + (*inner_off)[k];
          T xh = (hx->values[at] - mu) * is;
          T dxh = hy->grad[at] * hg->values[k];
          sum_dxh += static_cast<double>(dxh);
          sum_dxh_xh += static_cast<double>(dxh) * xh;
          if (gg) (*gg)[k] += hy->grad[at] * xh;
          if (gb) (*gb)[k] += hy->grad[at];
        }
        if (gx) {
          T inv_n = static_cast<T>(1.0 / static_cast<double>(n_inner));
          for (int64_t k = 0; k < n_inner; ++k) {
            int64_t at = base + (*inner_off)[k];
            T xh = (hx->values[at] - mu) * is;
            T dxh = hy->grad[at] * hg->values[k];
            (*gx)[at] += is * (dxh - static_cast<T>(sum_dxh) * inv_n -
                               xh * static_cast<T>(sum_dxh_xh) * inv_n);
          }
        }
      }
    });
  }
  return y;
}

// batch norm over [n, C, ...]: per-channel statistics across batch and space.
// training uses batch stats and updates running buffers (biased variance);
// eval normalizes with the running buffers.
template <typename T>
Tensor<T> batch_norm(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps) {
  check(x.rank() >= 2, "batch_norm: needs [n, C, ...]");
  int64_t n = x.shape()[0], C = x.shape()[1];
  int64_t sp = x.numel() / (n * C);
  check(gain.numel() == C && bias.numel() == C, "batch_norm: affine size mismatch");
  check(running_mean.numel() == C && running_var.numel() == C, "batch_norm: running buffer size mismatch");
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  auto mean = std::make_shared<std::vector<T>>(C);
  auto invstd = std::make_shared<std::vector<T>>(C);
  const T* px = x.data();
  T* py = y.data();
  int64_t cnt = n * sp;
  for (int64_t c = 0; c < C; ++c) {
    double mu, var;
    if (ctx.training) {
      mu = 0;
      for (int64_t b = 0; b < n; ++b)
        for (int64_t s = 0; s < sp; ++s) mu += static_cast<double>(px[(b * C + c) * sp + s]);
      mu /= static_cast<double>(cnt);
      var = 0;
      for (int64_t b = 0; b < n; ++b)
        for (int64_t s = 0; s < sp; ++s) {
          double d = static_cast<double>(px[(b * C + c) * sp + s]) - mu;
          var += d * d;
        }
      var /= static_cast<double>(cnt);
      running_mean.data()[c] = (T(1) - momentum) * running_mean.data()[c] + momentum * static_cast<T>(mu);
      running_var.data()[c] = (T(1) - momentum) * running_var.data()[c] + momentum * static_cast<T>(var);
    } else {
      mu = static_cast<double>(running_mean.data()[c]);
      var = static_cast<double>(running_var.data()[c]);
    }
    T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*mean)[c] = static_cast<T>(mu);
    (*invstd)[c] = is;
    T g = gain.data()[c], bo = bias.data()[c];
    for (int64_t b = 0; b < n; ++b)
      for (int64_t s = 0; s < sp; ++s) {
        int64_t at = (b * C + c) * sp + s;
        py[at] = (px[at] - static_cast<T>(mu)) * is * g + bo;
      }
  }
  if (detail::track(ctx, {&x, &gain, &bias})) {
    y.set_requires_grad(true);
    bool batch_stats = ctx.training;
    auto hx = x.handle(), hg = gain.handle(), hb = bias.handle(), hy = y.handle();
    ctx.tape->record("batch_norm", [hx, hg, hb, hy, mean, invstd, n, C, sp, batch_stats] {
      if (hy->grad.empty()) return;
      std::vector<T>* gx = hx->requires_grad ? &ensure_grad(hx) : nullptr;
      std::vector<T>* gg = hg->requires_grad ? &ensure_grad(hg) : nullptr;
      std::vector<T>* gb = hb->requires_grad ? &ensure_grad(hb) : nullptr;
      int64_t cnt2 = n * sp;
      for (int64_t c = 0; c < C; ++c) {
        T mu = (*mean)[c], is = (*invstd)[c], g = hg->values[c];
        double sum_dy = 0, sum_dy_xh = 0;
        for (int64_t b = 0; b < n; ++b)
          for (int64_t s = 0; s < sp; ++s) {
            int64_t at = (b * C + c) * sp + s;
            T xh = (hx->values[at] - mu) * is;
            sum_dy += static_cast<double>(hy->grad[at]);
            sum_dy_xh += static_cast<double>(hy->grad[at]) * xh;
          }
        if (gg) (*gg)[c] += static_cast<T>(sum_dy_xh);
        if (gb) (*gb)[c] += static_cast<T>(sum_dy);
        if (gx) {
          if (batch_stats) {
            T inv_n = static_cast<T>(1.0 / static_cast<double>(cnt2));
            for (int64_t b = 0; b < n; ++b)
              for (int64_t s = 0; s < sp; ++s) {
                int64_t at = (b * C + c) * sp + s;
                T xh = (hx->values[at] - mu) * is;
                (*gx)[at] += g * is *
                             (hy->grad[at] - static_cast<T>(sum_dy) * inv_n -
                              xh * static_cast<T>(sum_dy_xh) * inv_n);
              }
          } else {
            for (int64_t b = 0; b < n; ++b)
              for (int64_t s = 0; s < sp; ++s) {
                int64_t at = (b * C + c) * sp + s;
                (*gx)[at] += g * is * hy->grad[at];
              }
          }
        }
      }
    });
  }
  return y;
}

// per-row modulation: y[i,t,:] = x[i,t,:] * g[i,:] + b[i,:]
// (the conditional layer-norm tail; g and b come from the condition vectors)
template <typename T>
Tensor<T> modulate(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b) {
  check(x.rank() == 3, "modulate: x must be [n,T,d]");
  int64_t n = x.shape()[0], tt = x.shape()[1], d = x.shape()[2];
  check(g.rank() == 2 && g.shape()[0] == n && g.shape()[1] == d, "modulate: g must be [n,d]");
  check(b.rank() == 2 && b.shape()[0] == n && b.shape()[1] == d, "modulate: b must be [n,d]");
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t t = 0; t < tt; ++t)
      for (int64_t k = 0; k < d; ++k) {
        int64_t at = (i * tt + t) * d + k;
        y.data()[at] = x.data()[at] * g.data()[i * d + k] + b.data()[i * d + k];
      }
  if (detail::track(ctx, {&x, &g, &b})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hg = g.handle(), hb = b.handle(), hy = y.handle();
    ctx.tape->record("modulate", [hx, hg, hb, hy, n, tt, d] {
      if (hy->grad.empty()) return;
      std::vector<T>* gx = hx->requires_grad ? &ensure_grad(hx) : nullptr;
      std::vector<T>* gg = hg->requires_grad ? &ensure_grad(hg) : nullptr;
      std::vector<T>* gb = hb->requires_grad ? &ensure_grad(hb) : nullptr;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t t = 0; t < tt; ++t)
          for (int64_t k = 0; k < d; ++k) {
            int64_t at = (i * tt + t) * d + k;
            if (gx) (*gx)[at] += hy->grad[at] * hg->values[i * d + k];
            if (gg) (*gg)[i * d + k] += hy->grad[at] * hx->values[at];
            if (gb) (*gb)[i * d + k] += hy->grad[at];
          }
    });
  }
  return y;
}

// ---- attention ----

// scaled dot-product attention with an optional boolean mask broadcast over
// leading (group) axes. q,k,v: [..., T, dh]; mask: Tq x Tkv bytes, 1 = attend.
// blocked logits are -inf before the softmax so their weight is exactly zero.
// fused: the -inf never escapes onto the tape and backward uses the saved
// weights directly.
template <typename T>
Tensor<T> masked_attention(Context<T>& ctx, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const std::vector<uint8_t>* mask) {
  check(q.rank() >= 2 && k.rank() == q.rank() && v.rank() == q.rank(), "masked_attention: rank mismatch");
  int rk = q.rank();
  int64_t dh = q.shape()[rk - 1];
  int64_t tq = q.shape()[rk - 2];
  int64_t tkv = k.shape()[rk - 2];
  check(k.shape()[rk - 1] == dh && v.shape()[rk - 1] == dh, "masked_attention: head width mismatch");
  check(v.shape()[rk - 2] == tkv, "masked_attention: k/v length mismatch");
  int64_t groups = 1;
  for (int i = 0; i < rk - 2; ++i) {
    check(k.shape()[i] == q.shape()[i] && v.shape()[i] == q.shape()[i], "masked_attention: group mismatch");
    groups *= q.shape()[i];
  }
  if (mask) {
    check(static_cast<int64_t>(mask->size()) == tq * tkv, "masked_attention: mask must be Tq x Tkv");
    for (int64_t i = 0; i < tq; ++i) {
      bool any = false;
      for (int64_t j = 0; j < tkv; ++j) any = any || (*mask)[i * tkv + j];
      check(any, "masked_attention: fully masked query row " + std::to_string(i));
    }
  }
  T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor<T> y = Tensor<T>::zeros(q.shape());
  auto weights = std::make_shared<std::vector<T>>(groups * tq * tkv);
  auto mask_copy = std::make_shared<std::vector<uint8_t>>(mask ? *mask : std::vector<uint8_t>());

  const T* pq = q.data();
  const T* pk = k.data();
  const T* pv = v.data();
  T* py = y.data();
  parallel_for(groups, [&](int64_t g0, int64_t g1) {
    std::vector<T> s(tq * tkv);
    for (int64_t g = g0; g < g1; ++g) {
      const T* qg = pq + g * tq * dh;
      const T* kg = pk + g * tkv * dh;
      const T* vg = pv + g * tkv * dh;
      detail::gemm(tq, tkv, dh, qg, false, kg, true, s.data(), false);
      T* wg = weights->data() + g * tq * tkv;
      for (int64_t i = 0; i < tq; ++i) {
        T m = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < tkv; ++j) {
          bool ok = mask_copy->empty() || (*mask_copy)[i * tkv + j];
          if (ok) m = std::max(m, s[i * tkv + j] * sc);
        }
        double z = 0;
        for (int64_t j = 0; j < tkv; ++j) {
          bool ok = mask_copy->empty() || (*mask_copy)[i * tkv + j];
          T e = ok ? std::exp(s[i * tkv + j] * sc - m) : T(0);
          wg[i * tkv + j] = e;
          z += static_cast<double>(e);
        }
        T inv = static_cast<T>(1.0 / z);
        for (int64_t j = 0; j < tkv; ++j) wg[i * tkv + j] *= inv;
      }
      detail::gemm(tq, dh, tkv, wg, false, vg, false, py + g * tq * dh, false);
    }
  });

  if (detail::track(ctx, {&q, &k, &v})) {
    y.set_requires_grad(true);
    auto hq = q.handle(), hk = k.handle(), hv = v.handle(), hy = y.handle();
    ctx.tape->record("masked_attention", [hq, hk, hv, hy, weights, groups, tq, tkv, dh, sc] {
      if (hy->grad.empty()) return;
      std::vector<T>* gq = hq->requires_grad ? &ensure_grad(hq) : nullptr;
      std::vector<T>* gk = hk->requires_grad ? &ensure_grad(hk) : nullptr;
      std::vector<T>* gv = hv->requires_grad ? &ensure_grad(hv) : nullptr;
      parallel_for(groups, [&](int64_t g0, int64_t g1) {
        std::vector<T> dw(tq * tkv), ds(tq * tkv);
        for (int64_t g = g0; g < g1; ++g) {
          const T* wg = weights->data() + g * tq * tkv;
          const T* dyg = hy->grad.data() + g * tq * dh;
          const T* qg = hq->values.data() + g * tq * dh;
          const T* kg = hk->values.data() + g * tkv * dh;
          const T* vg = hv->values.data() + g * tkv * dh;
          if (gv)
            detail::gemm(tkv, dh, tq, wg, true, dyg, false, gv->data() + g * tkv * dh, true);
          detail::gemm(tq, tkv, dh, dyg, false, vg, true, dw.data(), false);
          for (int64_t i = 0; i < tq; ++i) {
            double dot = 0;
            for (int64_t j = 0; j < tkv; ++j)
              dot += static_cast<double>(wg[i * tkv + j]) * dw[i * tkv + j];
            for (int64_t j = 0; j < tkv; ++j)
              ds[i * tkv + j] = wg[i * tkv + j] * (dw[i * tkv + j] - static_cast<T>(dot)) * sc;
          }
          if (gq) detail::gemm(tq, dh, tkv, ds.data(), false, kg, false, gq->data() + g * tq * dh, true);
          if (gk) detail::gemm(tkv, dh, tq, ds.data(), true, qg, false, gk->data() + g * tkv * dh, true);
        }
      });
    });
  }
  return y;
}

inline std::vector<uint8_t> causal_mask(int64_t t) {
  std::vector<uint8_t> m(t * t, 0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = 0; j <= i; ++j) m[i * t + j] = 1;
  return m;
}

// ---- lookups ----

// rows of table[K,D] by integer id -> [len, D]
template <typename T>
Tensor<T> embedding(Context<T>& ctx, const Tensor<T>& table, const std::vector<int32_t>& ids) {
  check(table.rank() == 2, "embedding: table must be [K,D]");
  int64_t K = table.shape()[0], D = table.shape()[1];
  int64_t len = static_cast<int64_t>(ids.size());
  Tensor<T> y = Tensor<T>::zeros({len, D});
  for (int64_t i = 0; i < len; ++i) {
    check(ids[i] >= 0 && ids[i] < K, "embedding: id out of vocabulary");
    std::memcpy(y.data() + i * D, table.data() + ids[i] * D, sizeof(T) * D);
  }
  if (detail::track(ctx, {&table})) {
    y.set_requires_grad(true);
    auto ht = table.handle(), hy = y.handle();
    auto idc = std::make_shared<std::vector<int32_t>>(ids);
    ctx.tape->record("embedding", [ht, hy, idc, D] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(ht);
      for (size_t i = 0; i < idc->size(); ++i)
        for (int64_t d = 0; d < D; ++d) g[(*idc)[i] * D + d] += hy->grad[i * D + d];
    });
  }
  return y;
}

// codebook rows gathered per latent site, channel-first layout:
// ids laid out as [n, t, h, w] -> output [n, D, t, h, w]
template <typename T>
Tensor<T> codebook_lookup(Context<T>& ctx, const Tensor<T>& table, const std::vector<int32_t>& ids,
                          int64_t n, int64_t t, int64_t h, int64_t w) {
  check(table.rank() == 2, "codebook_lookup: table must be [K,D]");
  int64_t K = table.shape()[0], D = table.shape()[1];
  int64_t sites = t * h * w;
  check(static_cast<int64_t>(ids.size()) == n * sites, "codebook_lookup: id count mismatch");
  Tensor<T> y = Tensor<T>::zeros({n, D, t, h, w});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t s = 0; s < sites; ++s) {
      int32_t id = ids[b * sites + s];
      check(id >= 0 && id < K, "codebook_lookup: id out of vocabulary");
      for (int64_t d = 0; d < D; ++d) y.data()[(b * D + d) * sites + s] = table.data()[id * D + d];
    }
  if (detail::track(ctx, {&table})) {
    y.set_requires_grad(true);
    auto ht = table.handle(), hy = y.handle();
    auto idc = std::make_shared<std::vector<int32_t>>(ids);
    ctx.tape->record("codebook_lookup", [ht, hy, idc, n, sites, D] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(ht);
      for (int64_t b = 0; b < n; ++b)
        for (int64_t s = 0; s < sites; ++s) {
          int32_t id = (*idc)[b * sites + s];
          for (int64_t d = 0; d < D; ++d) g[id * D + d] += hy->grad[(b * D + d) * sites + s];
        }
    });
  }
  return y;
}

// ---- dropout ----

// inverted dropout; identity (same tensor) outside training
template <typename T>
Tensor<T> dropout(Context<T>& ctx, const Tensor<T>& x, T p) {
  if (!ctx.training || p <= T(0)) return x;
  check(p < T(1), "dropout: rate must be < 1");
  if (!ctx.rng) throw ConfigError("dropout: training context has no rng");
  Tensor<T> y = Tensor<T>::zeros(x.shape());
  auto keep = std::make_shared<std::vector<uint8_t>>(x.numel());
  T sc = T(1) / (T(1) - p);
  for (int64_t i = 0; i < x.numel(); ++i) {
    bool k = ctx.rng->uniform() >= static_cast<double>(p);
    (*keep)[i] = k;
    y.data()[i] = k ? x.data()[i] * sc : T(0);
  }
  if (detail::track(ctx, {&x})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hy = y.handle();
    ctx.tape->record("dropout", [hx, hy, keep, sc] {
      if (hy->grad.empty()) return;
      auto& g = ensure_grad(hx);
      for (size_t i = 0; i < g.size(); ++i)
        if ((*keep)[i]) g[i] += hy->grad[i] * sc;
    });
  }
  return y;
}

}  // namespace ops
}  // namespace rockgpt
