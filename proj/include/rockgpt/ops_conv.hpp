// ops_conv.hpp: 3d convolution and its transpose.
// both ride on one im2col/col2im pair plus a gemm, so conv_transpose3d is the
// exact linear adjoint of conv3d with the same kernel tensor (the adjoint
// inner-product identity is a unit test). cross-correlation convention, zero
// padding, no dilation.
#pragma once

#include <array>

#include "rockgpt/ops.hpp"

namespace rockgpt {

using Triple = std::array<int64_t, 3>;

namespace ops {

namespace detail {

// geometry of a conv mapping an x-grid (spatial id/ih/iw, cx channels) to an
// o-grid (od/oh/ow) with x = o*s - p + k per axis
struct ConvGeom {
  int64_t cx;
  int64_t id, ih, iw;
  int64_t od, oh, ow;
  int64_t kd, kh, kw;
  int64_t sd, sh, sw;
  int64_t pd, ph, pw;
  int64_t rows() const { return cx * kd * kh * kw; }
  int64_t cols() const { return od * oh * ow; }
};

// cols[(c,kz,ky,kx), (od,oh,ow)] = x[c, od*sd-pd+kz, ...] or 0 outside
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  int64_t os = g.cols();
  int64_t r = 0;
  for (int64_t c = 0; c < g.cx; ++c)
    for (int64_t kz = 0; kz < g.kd; ++kz)
      for (int64_t ky = 0; ky < g.kh; ++ky)
        for (int64_t kx = 0; kx < g.kw; ++kx, ++r) {
          T* out = cols + r * os;
          const T* xc = x + c * g.id * g.ih * g.iw;
          for (int64_t od = 0; od < g.od; ++od) {
            int64_t zd = od * g.sd - g.pd + kz;
            bool dok = zd >= 0 && zd < g.id;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              int64_t zh = oh * g.sh - g.ph + ky;
              bool hok = dok && zh >= 0 && zh < g.ih;
              T* orow = out + (od * g.oh + oh) * g.ow;
              if (!hok) {
                for (int64_t ow = 0; ow < g.ow; ++ow) orow[ow] = T(0);
                continue;
              }
              const T* xrow = xc + (zd * g.ih + zh) * g.iw;
              for (int64_t ow = 0; ow < g.ow; ++ow) {
                int64_t zw = ow * g.sw - g.pw + kx;
                orow[ow] = (zw >= 0 && zw < g.iw) ? xrow[zw] : T(0);
              }
            }
          }
        }
}

// adjoint scatter: x[c, ...] += cols, fixed serial order
template <typename T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
  int64_t os = g.cols();
  int64_t r = 0;
  for (int64_t c = 0; c < g.cx; ++c)
    for (int64_t kz = 0; kz < g.kd; ++kz)
      for (int64_t ky = 0; ky < g.kh; ++ky)
        for (int64_t kx = 0; kx < g.kw; ++kx, ++r) {
          const T* in = cols + r * os;
          T* xc = x + c * g.id * g.ih * g.iw;
          for (int64_t od = 0; od < g.od; ++od) {
            int64_t zd = od * g.sd - g.pd + kz;
            if (zd < 0 || zd >= g.id) continue;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
              int64_t zh = oh * g.sh - g.ph + ky;
              if (zh < 0 || zh >= g.ih) continue;
              const T* irow = in + (od * g.oh + oh) * g.ow;
              T* xrow = xc + (zd * g.ih + zh) * g.iw;
              for (int64_t ow = 0; ow < g.ow; ++ow) {
                int64_t zw = ow * g.sw - g.pw + kx;
                if (zw >= 0 && zw < g.iw) xrow[zw] += irow[ow];
              }
            }
          }
        }
}

inline int64_t conv_out(int64_t in, int64_t k, int64_t s, int64_t p, const char* what) {
  if (in + 2 * p < k)
    throw ShapeError(std::string(what) + ": extent " + std::to_string(in) + " too small for kernel " +
                     std::to_string(k) + " with pad " + std::to_string(p));
  return (in + 2 * p - k) / s + 1;
}

}  // namespace detail

// x[n,ci,D,H,W] * w[co,ci,kd,kh,kw] (+ bias[co]) -> [n,co,...]
template <typename T>
Tensor<T> conv3d(Context<T>& ctx, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 Triple stride, Triple pad) {
  check(x.rank() == 5, "conv3d: input must be [n,c,d,h,w], got " + shape_str(x.shape()));
  check(w.rank() == 5, "conv3d: kernel must be [co,ci,kd,kh,kw]");
  check(w.shape()[1] == x.shape()[1],
        "conv3d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  for (int i = 0; i < 3; ++i) check(stride[i] >= 1 && pad[i] >= 0, "conv3d: bad stride/pad");
  int64_t n = x.shape()[0], ci = x.shape()[1], co = w.shape()[0];
  detail::ConvGeom g{ci,
                     x.shape()[2], x.shape()[3], x.shape()[4],
                     detail::conv_out(x.shape()[2], w.shape()[2], stride[0], pad[0], "conv3d d"),
                     detail::conv_out(x.shape()[3], w.shape()[3], stride[1], pad[1], "conv3d h"),
                     detail::conv_out(x.shape()[4], w.shape()[4], stride[2], pad[2], "conv3d w"),
                     w.shape()[2], w.shape()[3], w.shape()[4],
                     stride[0], stride[1], stride[2],
                     pad[0], pad[1], pad[2]};
  bool has_bias = bias.numel() > 0;
  if (has_bias) check(bias.numel() == co, "conv3d: bias size mismatch");
  Tensor<T> y = Tensor<T>::zeros({n, co, g.od, g.oh, g.ow});
  int64_t ck = g.rows(), os = g.cols();
  int64_t in_sp = g.id * g.ih * g.iw;

  parallel_for(n, [&](int64_t b0, int64_t b1) {
    std::vector<T> cols(ck * os);
    for (int64_t b = b0; b < b1; ++b) {
      detail::im2col(x.data() + b * ci * in_sp, g, cols.data());
      T* yb = y.data() + b * co * os;
      detail::gemm(co, os, ck, w.data(), false, cols.data(), false, yb, false);
      if (has_bias)
        for (int64_t c = 0; c < co; ++c)
          for (int64_t s = 0; s < os; ++s) yb[c * os + s] += bias.data()[c];
    }
  });

  if (detail::track(ctx, {&x, &w, &bias})) {
    y.set_requires_grad(true);
    auto hx = x.handle(), hw = w.handle(), hb = bias.handle(), hy = y.handle();
    ctx.tape->record("conv3d", [hx, hw, hb, hy, g, n, ci, co, ck, os, in_sp, has_bias] {
      if (hy->grad.empty()) return;
      std::vector<T>* gx = hx->requires_grad ? &ensure_grad(hx) : nullptr;
      std::vector<T>* gw = hw->requires_grad ? &ensure_grad(hw) : nullptr;
      std::vector<T>* gb = (has_bias && hb->requires_grad) ? &ensure_grad(hb) : nullptr;
      std::vector<T> cols(ck * os), dcols(ck * os);
      for (int64_t b = 0; b < n; ++b) {
        const T* dyb = hy->grad.data() + b * co * os;
        if (gw) {
          detail::im2col(hx->values.data() + b * ci * in_sp, g, cols.data());
          detail::gemm(co, ck, os, dyb, false, cols.data(), true, gw->data(), true);
        }
        if (gx) {
          detail::gemm(ck, os, co, hw->values.data(), true, dyb, false, dcols.data(), false);
          detail::col2im_add(dcols.data(), g, gx->data() + b * ci * in_sp);
        }
        if (gb)
          for (int64_t c = 0; c < co; ++c) {
            double acc = 0;
            for (int64_t s = 0; s < os; ++s) acc += static_cast<double>(dyb[c * os + s]);
            (*gb)[c] += static_cast<T>(acc);
          }
      }
    });
  }
  return y;
}

// y[n,A,D,H,W] * w[A,B,kd,kh,kw] (+ bias[B]) -> [n,B,(D-1)s-2p+k,...]
// adjoint of conv3d: with the same kernel, <conv3d(x;w), y> == <x, conv_transpose3d(y;w)>
template <typename T>
Tensor<T> conv_transpose3d(Context<T>& ctx, const Tensor<T>& y_in, const Tensor<T>& w,
                           const Tensor<T>& bias, Triple stride, Triple pad) {
  check(y_in.rank() == 5, "conv_transpose3d: input must be [n,c,d,h,w]");
  check(w.rank() == 5, "conv_transpose3d: kernel must be [cin,cout,kd,kh,kw]");
  check(w.shape()[0] == y_in.shape()[1], "conv_transpose3d: channel mismatch " + shape_str(y_in.shape()) +
                                             " vs " + shape_str(w.shape()));
  for (int i = 0; i < 3; ++i) check(stride[i] >= 1 && pad[i] >= 0, "conv_transpose3d: bad stride/pad");
  int64_t n = y_in.shape()[0], A = w.shape()[0], B = w.shape()[1];
  int64_t xd = (y_in.shape()[2] - 1) * stride[0] - 2 * pad[0] + w.shape()[2];
  int64_t xh = (y_in.shape()[3] - 1) * stride[1] - 2 * pad[1] + w.shape()[3];
  int64_t xw = (y_in.shape()[4] - 1) * stride[2] - 2 * pad[2] + w.shape()[4];
  check(xd >= 1 && xh >= 1 && xw >= 1, "conv_transpose3d: output extent collapses");
  detail::ConvGeom g{B,
                     xd, xh, xw,
                     y_in.shape()[2], y_in.shape()[3], y_in.shape()[4],
                     w.shape()[2], w.shape()[3], w.shape()[4],
                     stride[0], stride[1], stride[2],
                     pad[0], pad[1], pad[2]};
  bool has_bias = bias.numel() > 0;
  if (has_bias) check(bias.numel() == B, "conv_transpose3d: bias size mismatch");
  Tensor<T> x = Tensor<T>::zeros({n, B, xd, xh, xw});
  int64_t bk = g.rows();           // B * kd*kh*kw
  int64_t sy = g.cols();           // input (o-grid) spatial size
  int64_t sx = xd * xh * xw;

  parallel_for(n, [&](int64_t b0, int64_t b1) {
    std::vector<T> cols(bk * sy);
    for (int64_t b = b0; b < b1; ++b) {
      const T* yb = y_in.data() + b * A * sy;
      detail::gemm(bk, sy, A, w.data(), true, yb, false, cols.data(), false);
      T* xb = x.data() + b * B * sx;
      detail::col2im_add(cols.data(), g, xb);
      if (has_bias)
        for (int64_t c = 0; c < B; ++c)
          for (int64_t s = 0; s < sx; ++s) xb[c * sx + s] += bias.data()[c];
    }
  });

  if (detail::track(ctx, {&y_in, &w, &bias})) {
    x.set_requires_grad(true);
    auto hy = y_in.handle(), hw = w.handle(), hb = bias.handle(), hx = x.handle();
    ctx.tape->record("conv_transpose3d", [hy, hw, hb, hx, g, n, A, B, bk, sy, sx, has_bias] {
      if (hx->grad.empty()) return;
      std::vector<T>* gy = hy->requires_grad ? &ensure_grad(hy) : nullptr;
      std::vector<T>* gw = hw->requires_grad ? &ensure_grad(hw) : nullptr;
      std::vector<T>* gb = (has_bias && hb->requires_grad) ? &ensure_grad(hb) : nullptr;
      std::vector<T> cols(bk * sy);
      for (int64_t b = 0; b < n; ++b) {
        const T* dxb = hx->grad.data() + b * B * sx;
        detail::im2col(dxb, g, cols.data());
        if (gy) detail::gemm(A, sy, bk, hw->values.data(), false, cols.data(), false, gy->data() + b * A * sy, true);
        if (gw) detail::gemm(A, bk, sy, hy->values.data() + b * A * sy, false, cols.data(), true, gw->data(), true);
        if (gb)
          for (int64_t c = 0; c < B; ++c) {
            double acc = 0;
            for (int64_t s = 0; s < sx; ++s) acc += static_cast<double>(dxb[c * sx + s]);
            (*gb)[c] += static_cast<T>(acc);
          }
      }
    });
  }
  return x;
}

}  // namespace ops
}  // namespace rockgpt
