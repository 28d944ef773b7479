#pragma once

#include <algorithm>
#include <cmath>

#include "liftdepth/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and,
// when a Graph is recording and some input requires grad, appends a backward
// closure to the active tape. Closures accumulate into input grad buffers.

namespace liftdepth {

namespace detail {

// C(M,N) += or = A(M,K) * B(K,N)
inline void mm_nn(const double* a, const double* b, double* c, int m, int k, int n,
                  bool accumulate = false) {
  if (!accumulate) std::fill(c, c + std::size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int l = 0; l < k; ++l) {
      double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b + std::size_t(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(M,N) += or = A(M,K) * B(N,K)^T
inline void mm_nt(const double* a, const double* b, double* c, int m, int k, int n,
                  bool accumulate = false) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + std::size_t(i) * k;
    double* crow = c + std::size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + std::size_t(j) * k;
      double acc = 0.0;
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// C(M,N) += or = A(K,M)^T * B(K,N)
inline void mm_tn(const double* a, const double* b, double* c, int m, int k, int n,
                  bool accumulate = false) {
  if (!accumulate) std::fill(c, c + std::size_t(m) * n, 0.0);
  for (int l = 0; l < k; ++l) {
    const double* arow = a + std::size_t(l) * m;
    const double* brow = b + std::size_t(l) * n;
    for (int i = 0; i < m; ++i) {
      double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co]() mutable {
      const auto& g = co.grad();
      if (ca.requires_grad()) ca.accumulate_grad(g);
      if (cb.requires_grad()) cb.accumulate_grad(g);
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co]() mutable {
      const auto& g = co.grad();
      if (ca.requires_grad()) ca.accumulate_grad(g);
      if (cb.requires_grad()) {
        auto& gb = cb.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co]() mutable {
      const auto& g = co.grad();
      if (ca.requires_grad()) {
        auto& ga = ca.grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * cb[int(i)];
      }
      if (cb.requires_grad()) {
        auto& gb = cb.grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ca[int(i)];
      }
    });
  }
  return out;
}

// y = scale * x + shift, elementwise with scalar constants
inline Tensor affine_const(const Tensor& x, double scale, double shift) {
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.size(); ++i) out[i] = scale * x[i] + shift;
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, scale]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += scale * g[i];
    });
  }
  return out;
}

inline Tensor scale(const Tensor& x, double s) { return affine_const(x, s, 0.0); }

inline Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (cx[int(i)] > 0.0) gx[i] += g[i];
    });
  }
  return out;
}

// Elementwise max of two same-shape tensors; ties route the gradient to a.
inline Tensor max_elem(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "max_elem");
  Tensor out = Tensor::zeros(a.shape());
  for (int i = 0; i < a.size(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co]() mutable {
      const auto& g = co.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (ca[int(i)] >= cb[int(i)]) {
          if (ca.requires_grad()) ca.grad()[i] += g[i];
        } else if (cb.requires_grad()) {
          cb.grad()[i] += g[i];
        }
      }
    });
  }
  return out;
}

inline Tensor log_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < x.size(); ++i) {
    if (x[i] <= 0.0) throw ValueError("log: nonpositive input " + std::to_string(x[i]));
    out[i] = std::log(x[i]);
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / cx[int(i)];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (int i = 0; i < x.size(); ++i) acc += x[i];
  Tensor out = Tensor::scalar(acc);
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co]() mutable {
      double g = co.grad()[0];
      auto& gx = cx.grad();
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / x.size()); }

inline Tensor inner_product(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 1, "inner_product");
  detail::check_rank(b, 1, "inner_product");
  if (a.size() != b.size())
    throw ShapeError("inner_product: length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  Tensor out = Tensor::scalar(acc);
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co]() mutable {
      double g = co.grad()[0];
      if (ca.requires_grad()) {
        auto& ga = ca.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * cb[int(i)];
      }
      if (cb.requires_grad()) {
        auto& gb = cb.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * ca[int(i)];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_rank(a, 2, "matmul");
  detail::check_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  detail::mm_nn(a.data(), b.data(), out.data(), m, k, n);
  if (detail::tracing({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ca = a, cb = b, co = out;
    Graph::active()->record([ca, cb, co, m, k, n]() mutable {
      const double* g = co.grad().data();
      if (ca.requires_grad())
        detail::mm_nt(g, cb.data(), ca.grad().data(), m, n, k, true);
      if (cb.requires_grad())
        detail::mm_tn(ca.data(), g, cb.grad().data(), k, m, n, true);
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::check_rank(a, 2, "transpose");
  int r = a.dim(0), c = a.dim(1);
  Tensor out = Tensor::zeros({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  if (detail::tracing({&a})) {
    out.set_requires_grad(true);
    Tensor ca = a, co = out;
    Graph::active()->record([ca, co, r, c]() mutable {
      const auto& g = co.grad();
      auto& ga = ca.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) ga[std::size_t(i) * c + j] += g[std::size_t(j) * r + i];
    });
  }
  return out;
}

// X (R,C) + v (C) broadcast over rows
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  detail::check_rank(x, 2, "add_rowvec");
  detail::check_rank(v, 1, "add_rowvec");
  if (x.dim(1) != v.dim(0))
    throw ShapeError("add_rowvec: row width " + std::to_string(x.dim(1)) +
                     " vs vector length " + std::to_string(v.dim(0)));
  int r = x.dim(0), c = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + v[j];
  if (detail::tracing({&x, &v})) {
    out.set_requires_grad(true);
    Tensor cx = x, cv = v, co = out;
    Graph::active()->record([cx, cv, co, r, c]() mutable {
      const auto& g = co.grad();
      if (cx.requires_grad()) cx.accumulate_grad(g);
      if (cv.requires_grad()) {
        auto& gv = cv.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gv[std::size_t(j)] += g[std::size_t(i) * c + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  Tensor out = Tensor::from(std::move(shape), x.values());
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co]() mutable { cx.accumulate_grad(co.grad()); });
  }
  return out;
}

// Concatenation along the leading axis (channels for CHW maps).
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  int total = 0;
  for (const Tensor& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (t != tail) throw ShapeError("concat_channels: trailing shape mismatch");
    total += p.dim(0);
  }
  Shape out_shape = parts[0].shape();
  out_shape[0] = total;
  Tensor out = Tensor::zeros(out_shape);
  int offset = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.size(), out.data() + offset);
    offset += p.size();
  }
  bool trace = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) trace = true;
  if (trace && Graph::active()) {
    out.set_requires_grad(true);
    std::vector<Tensor> cp = parts;
    Tensor co = out;
    Graph::active()->record([cp, co]() mutable {
      const auto& g = co.grad();
      std::size_t offset = 0;
      for (Tensor& p : cp) {
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
        }
        offset += std::size_t(p.size());
      }
    });
  }
  return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  return concat_channels(std::vector<Tensor>{a, b});
}

// Slice [from, to) along the leading axis; works on vectors and CHW maps.
inline Tensor slice_front(const Tensor& x, int from, int to) {
  if (from < 0 || to > x.dim(0) || from >= to)
    throw ShapeError("slice_front: bad range [" + std::to_string(from) + "," +
                     std::to_string(to) + ") for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[0] = to - from;
  int inner = x.size() / x.dim(0);
  Tensor out = Tensor::zeros(out_shape);
  std::copy(x.data() + from * inner, x.data() + to * inner, out.data());
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, from, inner]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[std::size_t(from) * inner + i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// spatial ops (CHW layout)
// ---------------------------------------------------------------------------

namespace detail {

inline void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride,
                   int pad, int oh, int ow, double* col) {
  int spatial = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = x + std::size_t(ch) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* dst = col + std::size_t((ch * kh + ky) * kw + kx) * spatial;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + std::size_t(oy) * ow, dst + std::size_t(oy + 1) * ow, 0.0);
            continue;
          }
          const double* src = plane + std::size_t(iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            dst[std::size_t(oy) * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, int c, int h, int w, int kh, int kw,
                       int stride, int pad, int oh, int ow, double* gx) {
  int spatial = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    double* plane = gx + std::size_t(ch) * h * w;
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* src = col + std::size_t((ch * kh + ky) * kw + kx) * spatial;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) plane[std::size_t(iy) * w + ix] += src[std::size_t(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// Cross-correlation of x (C,H,W) with kernel (M,C,kh,kw) plus optional bias
// (M). Kernel spatial extents must be odd.
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                     int stride = 1, int pad = 0) {
  detail::check_rank(x, 3, "conv2d");
  detail::check_rank(kernel, 4, "conv2d");
  if (kernel.dim(1) != x.dim(0))
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(0)) +
                     " channels, kernel expects " + std::to_string(kernel.dim(1)));
  int kh = kernel.dim(2), kw = kernel.dim(3);
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (stride < 1) throw ShapeError("conv2d: stride must be positive");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2), m = kernel.dim(0);
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (w + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output for input " + shape_str(x.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != m))
    throw ShapeError("conv2d: bias shape mismatch");

  int spatial = oh * ow;
  int ckk = c * kh * kw;
  bool direct = (kh == 1 && kw == 1 && stride == 1 && pad == 0);

  Tensor out = Tensor::zeros({m, oh, ow});
  if (direct) {
    detail::mm_nn(kernel.data(), x.data(), out.data(), m, c, spatial);
  } else {
    std::vector<double> col(std::size_t(ckk) * spatial);
    detail::im2col(x.data(), c, h, w, kh, kw, stride, pad, oh, ow, col.data());
    detail::mm_nn(kernel.data(), col.data(), out.data(), m, ckk, spatial);
  }
  if (bias.defined()) {
    for (int o = 0; o < m; ++o) {
      double b = bias[o];
      double* row = out.data() + std::size_t(o) * spatial;
      for (int i = 0; i < spatial; ++i) row[i] += b;
    }
  }

  bool trace = bias.defined() ? detail::tracing({&x, &kernel, &bias})
                              : detail::tracing({&x, &kernel});
  if (trace) {
    out.set_requires_grad(true);
    Tensor cx = x, ck = kernel, cb = bias, co = out;
    Graph::active()->record([cx, ck, cb, co, c, h, w, kh, kw, stride, pad, oh, ow, m,
                             ckk, spatial, direct]() mutable {
      const double* g = co.grad().data();
      if (cb.defined() && cb.requires_grad()) {
        auto& gb = cb.grad();
        for (int o = 0; o < m; ++o) {
          double acc = 0.0;
          const double* row = g + std::size_t(o) * spatial;
          for (int i = 0; i < spatial; ++i) acc += row[i];
          gb[std::size_t(o)] += acc;
        }
      }
      if (direct) {
        if (ck.requires_grad())
          detail::mm_nt(g, cx.data(), ck.grad().data(), m, spatial, c, true);
        if (cx.requires_grad())
          detail::mm_tn(ck.data(), g, cx.grad().data(), c, m, spatial, true);
        return;
      }
      std::vector<double> col(std::size_t(ckk) * spatial);
      if (ck.requires_grad()) {
        detail::im2col(cx.data(), c, h, w, kh, kw, stride, pad, oh, ow, col.data());
        detail::mm_nt(g, col.data(), ck.grad().data(), m, spatial, ckk, true);
      }
      if (cx.requires_grad()) {
        std::vector<double> gcol(std::size_t(ckk) * spatial);
        detail::mm_tn(ck.data(), g, gcol.data(), ckk, m, spatial);
        detail::col2im_add(gcol.data(), c, h, w, kh, kw, stride, pad, oh, ow,
                           cx.grad().data());
      }
    });
  }
  return out;
}

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride = 1, int pad = 0) {
  return conv2d(x, kernel, Tensor(), stride, pad);
}

// Per-group zero-mean unit-variance normalization over (group_size, H, W)
// blocks with variance floor eps. The learned affine lives in channel_affine.
inline Tensor group_norm_raw(const Tensor& x, int group_size, double eps = 1e-5) {
  detail::check_rank(x, 3, "group_norm_raw");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (group_size <= 0 || c % group_size != 0)
    throw ConfigError("group_norm_raw: group size " + std::to_string(group_size) +
                      " does not divide " + std::to_string(c) + " channels");
  int groups = c / group_size;
  int block = group_size * h * w;
  Tensor out = Tensor::zeros(x.shape());
  for (int g = 0; g < groups; ++g) {
    const double* src = x.data() + std::size_t(g) * block;
    double* dst = out.data() + std::size_t(g) * block;
    double mu = 0.0;
    for (int i = 0; i < block; ++i) mu += src[i];
    mu /= block;
    double var = 0.0;
    for (int i = 0; i < block; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= block;
    double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < block; ++i) dst[i] = (src[i] - mu) * inv;
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, groups, block, eps]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int gi = 0; gi < groups; ++gi) {
        const double* xhat = co.data() + std::size_t(gi) * block;
        const double* gb = g.data() + std::size_t(gi) * block;
        const double* src = cx.data() + std::size_t(gi) * block;
        double mu = 0.0;
        for (int i = 0; i < block; ++i) mu += src[i];
        mu /= block;
        double var = 0.0;
        for (int i = 0; i < block; ++i) var += (src[i] - mu) * (src[i] - mu);
        var /= block;
        double inv = 1.0 / std::sqrt(var + eps);
        double mean_g = 0.0, mean_gx = 0.0;
        for (int i = 0; i < block; ++i) {
          mean_g += gb[i];
          mean_gx += gb[i] * xhat[i];
        }
        mean_g /= block;
        mean_gx /= block;
        double* dst = gx.data() + std::size_t(gi) * block;
        for (int i = 0; i < block; ++i)
          dst[i] += inv * (gb[i] - mean_g - xhat[i] * mean_gx);
      }
    });
  }
  return out;
}

// y[c,h,w] = a[c] * x[c,h,w] + b[c]
inline Tensor channel_affine(const Tensor& x, const Tensor& a, const Tensor& b) {
  detail::check_rank(x, 3, "channel_affine");
  detail::check_rank(a, 1, "channel_affine");
  detail::check_rank(b, 1, "channel_affine");
  int c = x.dim(0);
  if (a.dim(0) != c || b.dim(0) != c)
    throw ShapeError("channel_affine: coefficient length mismatch for " +
                     shape_str(x.shape()));
  int plane = x.dim(1) * x.dim(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + std::size_t(ch) * plane;
    double* dst = out.data() + std::size_t(ch) * plane;
    double av = a[ch], bv = b[ch];
    for (int i = 0; i < plane; ++i) dst[i] = av * src[i] + bv;
  }
  if (detail::tracing({&x, &a, &b})) {
    out.set_requires_grad(true);
    Tensor cx = x, ca = a, cb = b, co = out;
    Graph::active()->record([cx, ca, cb, co, c, plane]() mutable {
      const auto& g = co.grad();
      for (int ch = 0; ch < c; ++ch) {
        const double* gp = g.data() + std::size_t(ch) * plane;
        if (cx.requires_grad()) {
          double av = ca[ch];
          double* gx = cx.grad().data() + std::size_t(ch) * plane;
          for (int i = 0; i < plane; ++i) gx[i] += av * gp[i];
        }
        if (ca.requires_grad()) {
          const double* src = cx.data() + std::size_t(ch) * plane;
          double acc = 0.0;
          for (int i = 0; i < plane; ++i) acc += gp[i] * src[i];
          ca.grad()[std::size_t(ch)] += acc;
        }
        if (cb.requires_grad()) {
          double acc = 0.0;
          for (int i = 0; i < plane; ++i) acc += gp[i];
          cb.grad()[std::size_t(ch)] += acc;
        }
      }
    });
  }
  return out;
}

inline Tensor global_avg_pool(const Tensor& x) {
  detail::check_rank(x, 3, "global_avg_pool");
  int c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out = Tensor::zeros({c});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + std::size_t(ch) * plane;
    double acc = 0.0;
    for (int i = 0; i < plane; ++i) acc += src[i];
    out[ch] = acc / plane;
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, plane]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int ch = 0; ch < c; ++ch) {
        double gv = g[std::size_t(ch)] / plane;
        double* dst = gx.data() + std::size_t(ch) * plane;
        for (int i = 0; i < plane; ++i) dst[i] += gv;
      }
    });
  }
  return out;
}

// Average pooling onto a (gh, gw) grid; bin i covers [floor(i*H/gh),
// ceil((i+1)*H/gh)). Grids larger than the input are clamped by the caller.
inline Tensor adaptive_avg_pool(const Tensor& x, int gh, int gw) {
  detail::check_rank(x, 3, "adaptive_avg_pool");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (gh <= 0 || gw <= 0 || gh > h || gw > w)
    throw ShapeError("adaptive_avg_pool: grid " + std::to_string(gh) + "x" +
                     std::to_string(gw) + " for input " + shape_str(x.shape()));
  auto ystart = [h, gh](int i) { return (i * h) / gh; };
  auto yend = [h, gh](int i) { return ((i + 1) * h + gh - 1) / gh; };
  auto xstart = [w, gw](int i) { return (i * w) / gw; };
  auto xend = [w, gw](int i) { return ((i + 1) * w + gw - 1) / gw; };
  Tensor out = Tensor::zeros({c, gh, gw});
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = x.data() + std::size_t(ch) * h * w;
    for (int oy = 0; oy < gh; ++oy) {
      for (int ox = 0; ox < gw; ++ox) {
        double acc = 0.0;
        int y0 = ystart(oy), y1 = yend(oy), x0 = xstart(ox), x1 = xend(ox);
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) acc += plane[std::size_t(y) * w + xx];
        out[(ch * gh + oy) * gw + ox] = acc / ((y1 - y0) * (x1 - x0));
      }
    }
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, h, w, gh, gw, ystart, yend, xstart, xend]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int ch = 0; ch < c; ++ch) {
        double* plane = gx.data() + std::size_t(ch) * h * w;
        for (int oy = 0; oy < gh; ++oy) {
          for (int ox = 0; ox < gw; ++ox) {
            int y0 = ystart(oy), y1 = yend(oy), x0 = xstart(ox), x1 = xend(ox);
            double gv = g[std::size_t((ch * gh + oy) * gw + ox)] / ((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int xx = x0; xx < x1; ++xx) plane[std::size_t(y) * w + xx] += gv;
          }
        }
      }
    });
  }
  return out;
}

// 2x2 average-pool downsample (even extents required).
inline Tensor avg_pool2(const Tensor& x) {
  detail::check_rank(x, 3, "avg_pool2");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 || w % 2) throw ShapeError("avg_pool2: odd extents in " + shape_str(x.shape()));
  int oh = h / 2, ow = w / 2;
  Tensor out = Tensor::zeros({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = x.data() + std::size_t(ch) * h * w;
    double* dst = out.data() + std::size_t(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const double* p = plane + std::size_t(2 * oy) * w + 2 * ox;
        dst[std::size_t(oy) * ow + ox] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, h, w, oh, ow]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int ch = 0; ch < c; ++ch) {
        double* plane = gx.data() + std::size_t(ch) * h * w;
        const double* gp = g.data() + std::size_t(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            double gv = 0.25 * gp[std::size_t(oy) * ow + ox];
            double* p = plane + std::size_t(2 * oy) * w + 2 * ox;
            p[0] += gv;
            p[1] += gv;
            p[w] += gv;
            p[w + 1] += gv;
          }
      }
    });
  }
  return out;
}

// Bilinear resampling with half-pixel centers and edge clamping.
inline Tensor bilinear_resize(const Tensor& x, int oh, int ow) {
  detail::check_rank(x, 3, "bilinear_resize");
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (oh <= 0 || ow <= 0) throw ShapeError("bilinear_resize: bad target size");
  double sy = double(h) / oh, sx = double(w) / ow;
  struct Tap {
    int i0, i1;
    double w0, w1;
  };
  std::vector<Tap> ty(static_cast<std::size_t>(oh));
  std::vector<Tap> tx(static_cast<std::size_t>(ow));
  auto make_tap = [](int o, double s, int extent) {
    double src = (o + 0.5) * s - 0.5;
    double fl = std::floor(src);
    int i0 = int(fl);
    double f = src - fl;
    int i1 = i0 + 1;
    i0 = std::clamp(i0, 0, extent - 1);
    i1 = std::clamp(i1, 0, extent - 1);
    return Tap{i0, i1, 1.0 - f, f};
  };
  for (int oy = 0; oy < oh; ++oy) ty[std::size_t(oy)] = make_tap(oy, sy, h);
  for (int ox = 0; ox < ow; ++ox) tx[std::size_t(ox)] = make_tap(ox, sx, w);
  Tensor out = Tensor::zeros({c, oh, ow});
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = x.data() + std::size_t(ch) * h * w;
    double* dst = out.data() + std::size_t(ch) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const Tap& a = ty[std::size_t(oy)];
      for (int ox = 0; ox < ow; ++ox) {
        const Tap& b = tx[std::size_t(ox)];
        dst[std::size_t(oy) * ow + ox] =
            a.w0 * (b.w0 * plane[std::size_t(a.i0) * w + b.i0] +
                    b.w1 * plane[std::size_t(a.i0) * w + b.i1]) +
            a.w1 * (b.w0 * plane[std::size_t(a.i1) * w + b.i0] +
                    b.w1 * plane[std::size_t(a.i1) * w + b.i1]);
      }
    }
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, h, w, oh, ow, ty, tx]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int ch = 0; ch < c; ++ch) {
        double* plane = gx.data() + std::size_t(ch) * h * w;
        const double* gp = g.data() + std::size_t(ch) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const Tap& a = ty[std::size_t(oy)];
          for (int ox = 0; ox < ow; ++ox) {
            const Tap& b = tx[std::size_t(ox)];
            double gv = gp[std::size_t(oy) * ow + ox];
            plane[std::size_t(a.i0) * w + b.i0] += gv * a.w0 * b.w0;
            plane[std::size_t(a.i0) * w + b.i1] += gv * a.w0 * b.w1;
            plane[std::size_t(a.i1) * w + b.i0] += gv * a.w1 * b.w0;
            plane[std::size_t(a.i1) * w + b.i1] += gv * a.w1 * b.w1;
          }
        }
      }
    });
  }
  return out;
}

inline Tensor upsample2x(const Tensor& x) {
  return bilinear_resize(x, x.dim(1) * 2, x.dim(2) * 2);
}

// Sum over channels: (C,H,W) -> (1,H,W)
inline Tensor sum_channels(const Tensor& x) {
  detail::check_rank(x, 3, "sum_channels");
  int c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out = Tensor::zeros({1, x.dim(1), x.dim(2)});
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + std::size_t(ch) * plane;
    for (int i = 0; i < plane; ++i) out[i] += src[i];
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, plane]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int ch = 0; ch < c; ++ch) {
        double* dst = gx.data() + std::size_t(ch) * plane;
        for (int i = 0; i < plane; ++i) dst[i] += g[std::size_t(i)];
      }
    });
  }
  return out;
}

// out[c,h,w] = p[h,w] * v[c]; p is (1,H,W) or (H,W)
inline Tensor plane_times_vec(const Tensor& p, const Tensor& v) {
  if (!((p.rank() == 3 && p.dim(0) == 1) || p.rank() == 2))
    throw ShapeError("plane_times_vec: plane must be (1,H,W) or (H,W), got " +
                     shape_str(p.shape()));
  detail::check_rank(v, 1, "plane_times_vec");
  int h = p.rank() == 3 ? p.dim(1) : p.dim(0);
  int w = p.rank() == 3 ? p.dim(2) : p.dim(1);
  int c = v.dim(0);
  int plane = h * w;
  Tensor out = Tensor::zeros({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    double vv = v[ch];
    double* dst = out.data() + std::size_t(ch) * plane;
    for (int i = 0; i < plane; ++i) dst[i] = p[i] * vv;
  }
  if (detail::tracing({&p, &v})) {
    out.set_requires_grad(true);
    Tensor cp = p, cv = v, co = out;
    Graph::active()->record([cp, cv, co, c, plane]() mutable {
      const auto& g = co.grad();
      for (int ch = 0; ch < c; ++ch) {
        const double* gp = g.data() + std::size_t(ch) * plane;
        if (cp.requires_grad()) {
          double vv = cv[ch];
          auto& gpl = cp.grad();
          for (int i = 0; i < plane; ++i) gpl[std::size_t(i)] += gp[i] * vv;
        }
        if (cv.requires_grad()) {
          double acc = 0.0;
          for (int i = 0; i < plane; ++i) acc += gp[i] * cp[i];
          cv.grad()[std::size_t(ch)] += acc;
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x) {
  detail::check_rank(x, 1, "softmax");
  int n = x.dim(0);
  Tensor out = Tensor::zeros(x.shape());
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, n]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += g[std::size_t(i)] * co[i];
      for (int i = 0; i < n; ++i) gx[std::size_t(i)] += co[i] * (g[std::size_t(i)] - dot);
    });
  }
  return out;
}

// Per-pixel softmax along the channel axis of a (C,H,W) map.
inline Tensor softmax_channels(const Tensor& x) {
  detail::check_rank(x, 3, "softmax_channels");
  int c = x.dim(0), plane = x.dim(1) * x.dim(2);
  Tensor out = Tensor::zeros(x.shape());
  for (int i = 0; i < plane; ++i) {
    double mx = x[i];
    for (int ch = 1; ch < c; ++ch) mx = std::max(mx, x[ch * plane + i]);
    double z = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      double e = std::exp(x[ch * plane + i] - mx);
      out[ch * plane + i] = e;
      z += e;
    }
    for (int ch = 0; ch < c; ++ch) out[ch * plane + i] /= z;
  }
  if (detail::tracing({&x})) {
    out.set_requires_grad(true);
    Tensor cx = x, co = out;
    Graph::active()->record([cx, co, c, plane]() mutable {
      const auto& g = co.grad();
      auto& gx = cx.grad();
      for (int i = 0; i < plane; ++i) {
        double dot = 0.0;
        for (int ch = 0; ch < c; ++ch)
          dot += g[std::size_t(ch) * plane + i] * co[ch * plane + i];
        for (int ch = 0; ch < c; ++ch)
          gx[std::size_t(ch) * plane + i] +=
              co[ch * plane + i] * (g[std::size_t(ch) * plane + i] - dot);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// depth-head primitives
// ---------------------------------------------------------------------------

// Centre of bin k for widths b on [d_min, d_max]:
//   centre_k = d_min + (d_max-d_min) * (b_k/2 + sum_{j<k} b_j)
inline Tensor bin_centres(const Tensor& widths, double d_min, double d_max) {
  detail::check_rank(widths, 1, "bin_centres");
  if (d_max <= d_min) throw ConfigError("bin_centres: d_max must exceed d_min");
  int n = widths.dim(0);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (widths[i] < 0.0) throw ValueError("bin_centres: negative width at bin " + std::to_string(i));
    total += widths[i];
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw ValueError("bin_centres: widths sum to " + std::to_string(total) + ", expected 1");
  double delta = d_max - d_min;
  Tensor out = Tensor::zeros(widths.shape());
  double prefix = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = d_min + delta * (widths[i] / 2.0 + prefix);
    prefix += widths[i];
  }
  if (detail::tracing({&widths})) {
    out.set_requires_grad(true);
    Tensor cw = widths, co = out;
    Graph::active()->record([cw, co, n, delta]() mutable {
      const auto& g = co.grad();
      auto& gw = cw.grad();
      double suffix = 0.0;
      for (int i = n - 1; i >= 0; --i) {
        gw[std::size_t(i)] += delta * (g[std::size_t(i)] / 2.0 + suffix);
        suffix += g[std::size_t(i)];
      }
    });
  }
  return out;
}

// Scale-invariant log loss:
//   L = alpha * sqrt( mean(D^2) - lambda * mean(D)^2 ),  D_i = log d_i - log d*_i
// over pixels where mask is nonzero. Differentiable w.r.t. pred only.
inline Tensor silog_loss(const Tensor& pred, const Tensor& gt, const Tensor& mask,
                         double alpha = 10.0, double lambda = 0.85) {
  detail::check_same_shape(pred, gt, "silog_loss");
  detail::check_same_shape(pred, mask, "silog_loss");
  if (alpha <= 0.0) throw ConfigError("silog_loss: alpha must be positive");
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("silog_loss: lambda must be in [0,1]");
  int n = pred.size();
  std::int64_t m = 0;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    if (pred[i] <= 0.0 || gt[i] <= 0.0)
      throw ValueError("silog_loss: nonpositive depth under mask at pixel " + std::to_string(i));
    double d = std::log(pred[i]) - std::log(gt[i]);
    s1 += d;
    s2 += d * d;
    ++m;
  }
  if (m == 0) throw ValueError("silog_loss: empty mask");
  double dm = double(m);
  // two-pass form of s2/M - lambda (s1/M)^2; avoids catastrophic cancellation
  // when the residuals are nearly equal
  double mean_d = s1 / dm;
  double central = 0.0;
  for (int i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    double d = std::log(pred[i]) - std::log(gt[i]) - mean_d;
    central += d * d;
  }
  double v = central / dm + (1.0 - lambda) * mean_d * mean_d;
  if (v < 0.0) v = 0.0;
  Tensor out = Tensor::scalar(alpha * std::sqrt(v));
  if (detail::tracing({&pred})) {
    out.set_requires_grad(true);
    Tensor cp = pred, cg = gt, cm = mask, co = out;
    Graph::active()->record([cp, cg, cm, co, n, dm, s1, v, alpha, lambda]() mutable {
      if (v <= 0.0) return;  // flat minimum; subgradient zero
      double gl = co.grad()[0];
      double coef = alpha / (2.0 * std::sqrt(v));
      auto& gp = cp.grad();
      for (int i = 0; i < n; ++i) {
        if (cm[i] == 0.0) continue;
        double d = std::log(cp[i]) - std::log(cg[i]);
        double dv = 2.0 * d / dm - 2.0 * lambda * s1 / (dm * dm);
        gp[std::size_t(i)] += gl * coef * dv / cp[i];
      }
    });
  }
  return out;
}

}  // namespace liftdepth
