// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "zipenh/tensor.hpp"

namespace zipenh {

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting, trailing-dim size-1 stretch).
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op<Real>(
      "add", a, b, [](Real x, Real y) { return x + y; },
      [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op<Real>(
      "sub", a, b, [](Real x, Real y) { return x - y; },
      [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(-1); });
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op<Real>(
      "mul", a, b, [](Real x, Real y) { return x * y; },
      [](Real, Real y, Real) { return y; },
      [](Real x, Real, Real) { return x; });
}

template <typename Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary_op<Real>(
      "div", a, b, [](Real x, Real y) { return x / y; },
      [](Real, Real y, Real) { return Real(1) / y; },
      [](Real, Real y, Real o) { return -o / y; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real s) {
  return unary_op<Real>(
      "add_scalar", x, [s](Real v) { return v + s; },
      [](Real, Real) { return Real(1); });
}

template <typename Real>
Tensor<Real> mul_scalar(const Tensor<Real>& x, Real s) {
  return unary_op<Real>(
      "mul_scalar", x, [s](Real v) { return v * s; },
      [s](Real, Real) { return s; });
}

template <typename Real>
Tensor<Real> neg(const Tensor<Real>& x) {
  return mul_scalar(x, Real(-1));
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> tanh_op(const Tensor<Real>& x) {
  return unary_op<Real>(
      "tanh", x, [](Real v) { return std::tanh(v); },
      [](Real, Real o) { return Real(1) - o * o; });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return unary_op<Real>(
      "sigmoid", x,
      [](Real v) { return Real(1) / (Real(1) + std::exp(-v)); },
      [](Real, Real o) { return o * (Real(1) - o); });
}

// x * sigmoid(x), fused.
template <typename Real>
Tensor<Real> silu(const Tensor<Real>& x) {
  return unary_op<Real>(
      "silu", x,
      [](Real v) { return v / (Real(1) + std::exp(-v)); },
      [](Real v, Real o) {
        // sigma(v) recovered from the stored output; exact at v = 0.
        const Real s = v != Real(0) ? o / v : Real(0.5);
        return s * (Real(1) + v * (Real(1) - s));
      });
}

template <typename Real>
Tensor<Real> sin_op(const Tensor<Real>& x) {
  return unary_op<Real>(
      "sin", x, [](Real v) { return std::sin(v); },
      [](Real v, Real) { return std::cos(v); });
}

template <typename Real>
Tensor<Real> cos_op(const Tensor<Real>& x) {
  return unary_op<Real>(
      "cos", x, [](Real v) { return std::cos(v); },
      [](Real v, Real) { return -std::sin(v); });
}

template <typename Real>
Tensor<Real> exp_op(const Tensor<Real>& x) {
  return unary_op<Real>(
      "exp", x, [](Real v) { return std::exp(v); },
      [](Real, Real o) { return o; });
}

// x^e for constant exponent. Subgradient at x == 0 with e < 1 is taken as 0.
template <typename Real>
Tensor<Real> pow_scalar(const Tensor<Real>& x, double e) {
  return unary_op<Real>(
      "pow", x, [e](Real v) { return Real(std::pow(double(v), e)); },
      [e](Real v, Real) {
        if (v == Real(0) && e < 1.0) return Real(0);
        return Real(e * std::pow(double(v), e - 1.0));
      });
}

// Gradient passes wherever x lies inside [lo, hi], boundary inclusive, so a
// parameter initialized exactly at a clamp edge still receives updates.
template <typename Real>
Tensor<Real> clamp_op(const Tensor<Real>& x, double lo, double hi) {
  check(lo <= hi, "clamp: lo must not exceed hi");
  return unary_op<Real>(
      "clamp", x,
      [lo, hi](Real v) { return std::min(std::max(v, Real(lo)), Real(hi)); },
      [lo, hi](Real v, Real) { return (v >= Real(lo) && v <= Real(hi)) ? Real(1) : Real(0); });
}

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  return unary_op<Real>(
      "relu", x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

// |x|, subgradient 0 at the origin.
template <typename Real>
Tensor<Real> abs_op(const Tensor<Real>& x) {
  return unary_op<Real>(
      "abs", x, [](Real v) { return std::abs(v); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : (v < Real(0) ? Real(-1) : Real(0)); });
}

// PReLU with broadcastable negative-slope parameter (e.g. alpha shaped [C,1,1]).
template <typename Real>
Tensor<Real> prelu(const Tensor<Real>& x, const Tensor<Real>& alpha) {
  return binary_op<Real>(
      "prelu", x, alpha,
      [](Real v, Real a) { return v >= Real(0) ? v : a * v; },
      [](Real v, Real a, Real) { return v >= Real(0) ? Real(1) : a; },
      [](Real v, Real, Real) { return v >= Real(0) ? Real(0) : v; });
}

// atan2(y, x) with atan2(0, 0) := 0; partials vanish at the origin.
template <typename Real>
Tensor<Real> atan2_op(const Tensor<Real>& y, const Tensor<Real>& x) {
  return binary_op<Real>(
      "atan2", y, x,
      [](Real yv, Real xv) {
        if (yv == Real(0) && xv == Real(0)) return Real(0);
        const Real a = std::atan2(yv, xv);
        return a == -Real(M_PI) ? Real(M_PI) : a;  // principal range (-pi, pi]
      },
      [](Real yv, Real xv, Real) {
        const Real r2 = xv * xv + yv * yv;
        return r2 < Real(1e-300) ? Real(0) : xv / r2;
      },
      [](Real yv, Real xv, Real) {
        const Real r2 = xv * xv + yv * yv;
        return r2 < Real(1e-300) ? Real(0) : -yv / r2;
      });
}

// |d - 2*pi*round(d / 2*pi)|: absolute phase error folded to [0, pi].
template <typename Real>
Tensor<Real> anti_wrap(const Tensor<Real>& d) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return unary_op<Real>(
      "anti_wrap", d,
      [](Real v) {
        const double w = double(v) - kTwoPi * std::round(double(v) / kTwoPi);
        return Real(std::abs(w));
      },
      [](Real v, Real) {
        const double w = double(v) - kTwoPi * std::round(double(v) / kTwoPi);
        return Real(w > 0 ? 1 : (w < 0 ? -1 : 0));
      });
}

// ---------------------------------------------------------------------------
// Shape movement.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  check(shape_numel(shape) == x.numel(),
        "reshape: element count mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
  auto out = make_output<Real>(std::move(shape), x.requires_grad(), false);
  out.data() = x.data();
  record_backward(out, [xp = x.ptr(), op = out.ptr()]() {
    for (size_t i = 0; i < xp->grad.size(); ++i) xp->grad[i] += op->grad[i];
  });
  return out;
}

namespace detail {

template <typename Real>
void permute_copy(const Shape& oshape, const std::vector<int64_t>& src_stride,
                  const Real* src, Real* dst, int d, int64_t is) {
  const int nd = int(oshape.size());
  if (d == nd - 1) {
    const int n = oshape[size_t(d)];
    const int64_t st = src_stride[size_t(d)];
    for (int i = 0; i < n; ++i) dst[i] = src[is + i * st];
    return;
  }
  int64_t block = 1;
  for (int i = d + 1; i < nd; ++i) block *= oshape[size_t(i)];
  for (int i = 0; i < oshape[size_t(d)]; ++i)
    permute_copy(oshape, src_stride, src, dst + i * block, d + 1, is + i * src_stride[size_t(d)]);
}

// Scatter-add of a contiguous buffer shaped `oshape` back through the same
// stride map (exact adjoint of permute_copy).
template <typename Real>
void permute_accum(const Shape& oshape, const std::vector<int64_t>& src_stride,
                   Real* dst, const Real* src, int d, int64_t is) {
  const int nd = int(oshape.size());
  if (d == nd - 1) {
    const int n = oshape[size_t(d)];
    const int64_t st = src_stride[size_t(d)];
    for (int i = 0; i < n; ++i) dst[is + i * st] += src[i];
    return;
  }
  int64_t block = 1;
  for (int i = d + 1; i < nd; ++i) block *= oshape[size_t(i)];
  for (int i = 0; i < oshape[size_t(d)]; ++i)
    permute_accum(oshape, src_stride, dst, src + i * block, d + 1, is + i * src_stride[size_t(d)]);
}

inline std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = int(s.size()) - 1; i >= 0; --i) {
    st[size_t(i)] = acc;
    acc *= s[size_t(i)];
  }
  return st;
}

}  // namespace detail

template <typename Real>
Tensor<Real> permute(const Tensor<Real>& x, const std::vector<int>& axes) {
  const int nd = x.ndim();
  check(int(axes.size()) == nd, "permute: axes size mismatch");
  Shape oshape(size_t(nd), 0);
  const auto xstride = detail::contiguous_strides(x.shape());
  std::vector<int64_t> sstride(size_t(nd), 0);
  std::vector<bool> seen(size_t(nd), false);
  for (int i = 0; i < nd; ++i) {
    const int a = axes[size_t(i)];
    check(a >= 0 && a < nd && !seen[size_t(a)], "permute: invalid axes");
    seen[size_t(a)] = true;
    oshape[size_t(i)] = x.dim(a);
    sstride[size_t(i)] = xstride[size_t(a)];
  }
  auto out = make_output<Real>(oshape, x.requires_grad(), false);
  if (out.numel() > 0)
    detail::permute_copy(oshape, sstride, x.data().data(), out.data().data(), 0, 0);
  record_backward(out, [xp = x.ptr(), op = out.ptr(), oshape, sstride]() {
    detail::permute_accum(oshape, sstride, xp->grad.data(), op->grad.data(), 0, 0);
  });
  return out;
}

namespace detail {

// outer * extent(axis) * inner decomposition shared by axis ops.
inline void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[size_t(i)];
  for (int i = axis + 1; i < int(s.size()); ++i) inner *= s[size_t(i)];
}

}  // namespace detail

template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, int start, int end) {
  check(axis >= 0 && axis < x.ndim(), "slice: bad axis");
  check(0 <= start && start < end && end <= x.dim(axis), "slice: bad range");
  Shape oshape = x.shape();
  oshape[size_t(axis)] = end - start;
  int64_t outer, inner;
  detail::axis_split(x.shape(), axis, outer, inner);
  const int ext = x.dim(axis), len = end - start;
  auto out = make_output<Real>(oshape, x.requires_grad(), false);
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int i = 0; i < len; ++i)
      std::copy_n(xd + (o * ext + start + i) * inner, inner, od + (o * len + i) * inner);
  record_backward(out, [xp = x.ptr(), op = out.ptr(), outer, inner, ext, len, start]() {
    for (int64_t o = 0; o < outer; ++o)
      for (int i = 0; i < len; ++i) {
        Real* dst = xp->grad.data() + (o * ext + start + i) * inner;
        const Real* src = op->grad.data() + (o * len + i) * inner;
        for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
      }
  });
  return out;
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& xs, int axis) {
  check(!xs.empty(), "concat: empty input list");
  const Shape& s0 = xs[0].shape();
  check(axis >= 0 && axis < int(s0.size()), "concat: bad axis");
  int total = 0;
  bool anygrad = false;
  for (const auto& t : xs) {
    check(t.ndim() == int(s0.size()), "concat: rank mismatch");
    for (int i = 0; i < t.ndim(); ++i)
      if (i != axis) check(t.dim(i) == s0[size_t(i)], "concat: shape mismatch off-axis");
    total += t.dim(axis);
    anygrad = anygrad || t.requires_grad();
  }
  Shape oshape = s0;
  oshape[size_t(axis)] = total;
  auto out = make_output<Real>(oshape, anygrad, false);
  int64_t outer, inner;
  detail::axis_split(oshape, axis, outer, inner);
  int off = 0;
  for (const auto& t : xs) {
    const int ext = t.dim(axis);
    const Real* xd = t.data().data();
    Real* od = out.data().data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(xd + o * ext * inner, ext * inner, od + (o * total + off) * inner);
    off += ext;
  }
  std::vector<std::shared_ptr<TensorData<Real>>> parts;
  for (const auto& t : xs) parts.push_back(t.ptr());
  record_backward(out, [parts, op = out.ptr(), outer, inner, total]() {
    int off2 = 0;
    for (const auto& xp : parts) {
      const int axext = int(xp->data.size() / size_t(std::max<int64_t>(outer * inner, 1)));
      if (xp->requires_grad) {
        for (int64_t o = 0; o < outer; ++o) {
          Real* dst = xp->grad.data() + o * axext * inner;
          const Real* src = op->grad.data() + (o * total + off2) * inner;
          for (int64_t k = 0; k < int64_t(axext) * inner; ++k) dst[k] += src[k];
        }
      }
      off2 += axext;
    }
  });
  return out;
}

// Zero-pad along one axis.
template <typename Real>
Tensor<Real> pad_axis(const Tensor<Real>& x, int axis, int before, int after) {
  check(axis >= 0 && axis < x.ndim(), "pad_axis: bad axis");
  check(before >= 0 && after >= 0, "pad_axis: negative pad");
  Shape oshape = x.shape();
  oshape[size_t(axis)] += before + after;
  auto out = make_output<Real>(oshape, x.requires_grad());
  int64_t outer, inner;
  detail::axis_split(x.shape(), axis, outer, inner);
  const int ext = x.dim(axis), oext = ext + before + after;
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(xd + o * ext * inner, ext * inner, od + (o * oext + before) * inner);
  record_backward(out, [xp = x.ptr(), op = out.ptr(), outer, inner, ext, oext, before]() {
    for (int64_t o = 0; o < outer; ++o) {
      Real* dst = xp->grad.data() + o * ext * inner;
      const Real* src = op->grad.data() + (o * oext + before) * inner;
      for (int64_t k = 0; k < int64_t(ext) * inner; ++k) dst[k] += src[k];
    }
  });
  return out;
}

// Repeat each index r times along an axis (nearest-neighbour upsampling).
template <typename Real>
Tensor<Real> repeat_interleave(const Tensor<Real>& x, int axis, int r) {
  check(axis >= 0 && axis < x.ndim(), "repeat_interleave: bad axis");
  check(r >= 1, "repeat_interleave: r must be >= 1");
  Shape oshape = x.shape();
  oshape[size_t(axis)] *= r;
  auto out = make_output<Real>(oshape, x.requires_grad(), false);
  int64_t outer, inner;
  detail::axis_split(x.shape(), axis, outer, inner);
  const int ext = x.dim(axis);
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int i = 0; i < ext; ++i)
      for (int j = 0; j < r; ++j)
        std::copy_n(xd + (o * ext + i) * inner, inner,
                    od + ((o * ext + i) * r + j) * inner);
  record_backward(out, [xp = x.ptr(), op = out.ptr(), outer, inner, ext, r]() {
    for (int64_t o = 0; o < outer; ++o)
      for (int i = 0; i < ext; ++i) {
        Real* dst = xp->grad.data() + (o * ext + i) * inner;
        for (int j = 0; j < r; ++j) {
          const Real* src = op->grad.data() + ((o * ext + i) * r + j) * inner;
          for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
        }
      }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x) {
  auto out = make_output<Real>({1}, x.requires_grad());
  Real acc(0);
  for (Real v : x.data()) acc += v;
  out.data()[0] = acc;
  check_finite(out, "sum_all");
  record_backward(out, [xp = x.ptr(), op = out.ptr()]() {
    const Real g = op->grad[0];
    for (auto& v : xp->grad) v += g;
  });
  return out;
}

template <typename Real>
Tensor<Real> mean_all(const Tensor<Real>& x) {
  check(x.numel() > 0, "mean_all: empty tensor");
  auto out = make_output<Real>({1}, x.requires_grad());
  Real acc(0);
  for (Real v : x.data()) acc += v;
  out.data()[0] = acc / Real(x.numel());
  check_finite(out, "mean_all");
  record_backward(out, [xp = x.ptr(), op = out.ptr()]() {
    const Real g = op->grad[0] / Real(xp->data.size());
    for (auto& v : xp->grad) v += g;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Softmax over the last axis (numerically stabilized).
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x) {
  const int n = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / n;
  auto out = make_output<Real>(x.shape(), x.requires_grad(), false);
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const Real* in = xd + r * n;
    Real* o = od + r * n;
    Real mx = in[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, in[i]);
    Real denom(0);
    for (int i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - mx);
      denom += o[i];
    }
    const Real inv = Real(1) / denom;
    for (int i = 0; i < n; ++i) o[i] *= inv;
  }
  check_finite(out, "softmax");
  record_backward(out, [xp = x.ptr(), op = out.ptr(), n, rows]() {
    for (int64_t r = 0; r < rows; ++r) {
      const Real* o = op->data.data() + r * n;
      const Real* g = op->grad.data() + r * n;
      Real* dx = xp->grad.data() + r * n;
      Real dot(0);
      for (int i = 0; i < n; ++i) dot += o[i] * g[i];
      for (int i = 0; i < n; ++i) dx[i] += o[i] * (g[i] - dot);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Matmul with leading-batch broadcast; optional transposed right operand.
//   a: [..., M, K], b: [..., K, N] (or [..., N, K] with transpose_b).
// ---------------------------------------------------------------------------

namespace detail {

// One register panel: 4 rows by W unit-stride columns at offset w0. Each
// column's value depends only on the k order, so any W decomposition of the
// w axis produces identical results for a given Real.
template <int W, bool Acc, typename Real>
ZIPENH_ALWAYS_INLINE void gemm_panel4(const Real* am, int64_t ams, int64_t aks, const Real* bh,
                                      int64_t bks, Real* ch, int64_t cms, int K, int w0) {
  Real acc0[W] = {}, acc1[W] = {}, acc2[W] = {}, acc3[W] = {};
  for (int k = 0; k < K; ++k) {
    const Real* br = bh + k * bks + w0;
    const Real a0 = am[k * aks];
    const Real a1 = am[ams + k * aks];
    const Real a2 = am[2 * ams + k * aks];
    const Real a3 = am[3 * ams + k * aks];
    for (int j = 0; j < W; ++j) {
      acc0[j] += a0 * br[j];
      acc1[j] += a1 * br[j];
      acc2[j] += a2 * br[j];
      acc3[j] += a3 * br[j];
    }
  }
  Real* c0 = ch + w0;
  Real* c1 = c0 + cms;
  Real* c2 = c1 + cms;
  Real* c3 = c2 + cms;
  for (int j = 0; j < W; ++j) {
    if constexpr (Acc) {
      c0[j] += acc0[j];
      c1[j] += acc1[j];
      c2[j] += acc2[j];
      c3[j] += acc3[j];
    } else {
      c0[j] = acc0[j];
      c1[j] = acc1[j];
      c2[j] = acc2[j];
      c3[j] = acc3[j];
    }
  }
}

template <int W, bool Acc, typename Real>
ZIPENH_ALWAYS_INLINE void gemm_panel1(const Real* am, int64_t aks, const Real* bh, int64_t bks,
                                      Real* ch, int K, int w0) {
  Real acc[W] = {};
  for (int k = 0; k < K; ++k) {
    const Real* br = bh + k * bks + w0;
    const Real a0 = am[k * aks];
    for (int j = 0; j < W; ++j) acc[j] += a0 * br[j];
  }
  Real* cw = ch + w0;
  for (int j = 0; j < W; ++j) {
    if constexpr (Acc)
      cw[j] += acc[j];
    else
      cw[j] = acc[j];
  }
}

// C[m*cms + h*chs + w] (+)= sum_k A[m*ams + k*aks] * B[k*bks + h*bhs + w].
// Register-tiled over (m, w); the w axis must be unit-stride in B and C.
// A is read as scalars, so its strides are arbitrary; this lets transposed
// operands run through the same kernel without materializing a transpose.
template <bool Acc, typename Real>
void gemm_tile(const Real* A, int64_t ams, int64_t aks, const Real* B, int64_t bks,
               int64_t bhs, Real* C, int64_t cms, int64_t chs, int M, int K, int NH,
               int NW) {
  // Two 512-bit accumulator rows per m (16 doubles or 32 floats), then a
  // cascade of narrower panels so small NW still runs vectorized.
  constexpr int MT = 4, NT = int(128 / sizeof(Real));
  int m0 = 0;
  for (; m0 + MT <= M; m0 += MT) {
    const Real* am = A + m0 * ams;
    for (int h = 0; h < NH; ++h) {
      const Real* bh = B + h * bhs;
      Real* ch = C + m0 * cms + h * chs;
      int w0 = 0;
      for (; w0 + NT <= NW; w0 += NT)
        gemm_panel4<NT, Acc>(am, ams, aks, bh, bks, ch, cms, K, w0);
      if (w0 + NT / 2 <= NW) {
        gemm_panel4<NT / 2, Acc>(am, ams, aks, bh, bks, ch, cms, K, w0);
        w0 += NT / 2;
      }
      if constexpr (NT / 4 >= 8) {
        if (w0 + NT / 4 <= NW) {
          gemm_panel4<NT / 4, Acc>(am, ams, aks, bh, bks, ch, cms, K, w0);
          w0 += NT / 4;
        }
      }
      for (; w0 < NW; ++w0) {
        Real s0(0), s1(0), s2(0), s3(0);
        for (int k = 0; k < K; ++k) {
          const Real bv = bh[k * bks + w0];
          s0 += am[k * aks] * bv;
          s1 += am[ams + k * aks] * bv;
          s2 += am[2 * ams + k * aks] * bv;
          s3 += am[3 * ams + k * aks] * bv;
        }
        Real* cw = ch + w0;
        if constexpr (Acc) {
          cw[0] += s0;
          cw[cms] += s1;
          cw[2 * cms] += s2;
          cw[3 * cms] += s3;
        } else {
          cw[0] = s0;
          cw[cms] = s1;
          cw[2 * cms] = s2;
          cw[3 * cms] = s3;
        }
      }
    }
  }
  for (; m0 < M; ++m0) {
    const Real* am = A + m0 * ams;
    for (int h = 0; h < NH; ++h) {
      const Real* bh = B + h * bhs;
      Real* ch = C + m0 * cms + h * chs;
      int w0 = 0;
      for (; w0 + NT <= NW; w0 += NT)
        gemm_panel1<NT, Acc>(am, aks, bh, bks, ch, K, w0);
      if (w0 + NT / 2 <= NW) {
        gemm_panel1<NT / 2, Acc>(am, aks, bh, bks, ch, K, w0);
        w0 += NT / 2;
      }
      if constexpr (NT / 4 >= 8) {
        if (w0 + NT / 4 <= NW) {
          gemm_panel1<NT / 4, Acc>(am, aks, bh, bks, ch, K, w0);
          w0 += NT / 4;
        }
      }
      for (; w0 < NW; ++w0) {
        Real s(0);
        for (int k = 0; k < K; ++k) s += am[k * aks] * bh[k * bks + w0];
        if constexpr (Acc)
          ch[w0] += s;
        else
          ch[w0] = s;
      }
    }
  }
}

// Windowed dot product: lanes of the unit-stride w axis accumulate in a
// fixed order (vector lanes, a half-width chunk, each row's scalar tail, one
// final fold).
template <typename Real>
Real dot_window(const Real* a, int64_t ahs, const Real* b, int64_t bhs, int NH, int NW) {
  constexpr int V = int(64 / sizeof(Real));
  constexpr int HV = V / 2;
  const int wv = NW - NW % V;
  const bool half = NW - wv >= HV;
  const int ws = wv + (half ? HV : 0);
  Real vacc[V] = {};
  Real tail(0);
  for (int h = 0; h < NH; ++h) {
    const Real* ar = a + h * ahs;
    const Real* br = b + h * bhs;
    for (int w = 0; w < wv; w += V)
      for (int v = 0; v < V; ++v) vacc[v] += ar[w + v] * br[w + v];
    if (half)
      for (int v = 0; v < HV; ++v) vacc[v] += ar[wv + v] * br[wv + v];
    for (int w = ws; w < NW; ++w) tail += ar[w] * br[w];
  }
  Real s = tail;
  for (int v = 0; v < V; ++v) s += vacc[v];
  return s;
}

// D[m*dms + n*dns] (+)= sum_{h,w} A[m*ams + h*ahs + w] * B[n*bns + h*bhs + w].
// Reduction kernel for dot-shaped products (scores, weight gradients); the
// w axis must be unit-stride in A and B.
template <bool Acc, typename Real>
void dot_tile(const Real* A, int64_t ams, int64_t ahs, const Real* B, int64_t bns,
              int64_t bhs, Real* D, int64_t dms, int64_t dns, int M, int N, int NH,
              int NW) {
  constexpr int V = int(64 / sizeof(Real));
  constexpr int HV = V / 2;
  const int wv = NW - NW % V;
  const bool half = NW - wv >= HV;
  const int ws = wv + (half ? HV : 0);
  int m0 = 0;
  for (; m0 + 4 <= M; m0 += 4) {
    int n0 = 0;
    for (; n0 + 2 <= N; n0 += 2) {
      Real v00[V] = {}, v01[V] = {}, v10[V] = {}, v11[V] = {};
      Real v20[V] = {}, v21[V] = {}, v30[V] = {}, v31[V] = {};
      Real t00(0), t01(0), t10(0), t11(0), t20(0), t21(0), t30(0), t31(0);
      for (int h = 0; h < NH; ++h) {
        const Real* a0 = A + (m0 + 0) * ams + h * ahs;
        const Real* a1 = A + (m0 + 1) * ams + h * ahs;
        const Real* a2 = A + (m0 + 2) * ams + h * ahs;
        const Real* a3 = A + (m0 + 3) * ams + h * ahs;
        const Real* b0 = B + (n0 + 0) * bns + h * bhs;
        const Real* b1 = B + (n0 + 1) * bns + h * bhs;
        for (int w = 0; w < wv; w += V)
          for (int v = 0; v < V; ++v) {
            const Real x0 = b0[w + v], x1 = b1[w + v];
            v00[v] += a0[w + v] * x0;
            v01[v] += a0[w + v] * x1;
            v10[v] += a1[w + v] * x0;
            v11[v] += a1[w + v] * x1;
            v20[v] += a2[w + v] * x0;
            v21[v] += a2[w + v] * x1;
            v30[v] += a3[w + v] * x0;
            v31[v] += a3[w + v] * x1;
          }
        if (half)
          for (int v = 0; v < HV; ++v) {
            const Real x0 = b0[wv + v], x1 = b1[wv + v];
            v00[v] += a0[wv + v] * x0;
            v01[v] += a0[wv + v] * x1;
            v10[v] += a1[wv + v] * x0;
            v11[v] += a1[wv + v] * x1;
            v20[v] += a2[wv + v] * x0;
            v21[v] += a2[wv + v] * x1;
            v30[v] += a3[wv + v] * x0;
            v31[v] += a3[wv + v] * x1;
          }
        for (int w = ws; w < NW; ++w) {
          const Real x0 = b0[w], x1 = b1[w];
          t00 += a0[w] * x0;
          t01 += a0[w] * x1;
          t10 += a1[w] * x0;
          t11 += a1[w] * x1;
          t20 += a2[w] * x0;
          t21 += a2[w] * x1;
          t30 += a3[w] * x0;
          t31 += a3[w] * x1;
        }
      }
      for (int v = 0; v < V; ++v) {
        t00 += v00[v];
        t01 += v01[v];
        t10 += v10[v];
        t11 += v11[v];
        t20 += v20[v];
        t21 += v21[v];
        t30 += v30[v];
        t31 += v31[v];
      }
      Real* d0 = D + (m0 + 0) * dms + n0 * dns;
      Real* d1 = D + (m0 + 1) * dms + n0 * dns;
      Real* d2 = D + (m0 + 2) * dms + n0 * dns;
      Real* d3 = D + (m0 + 3) * dms + n0 * dns;
      if constexpr (Acc) {
        d0[0] += t00;
        d0[dns] += t01;
        d1[0] += t10;
        d1[dns] += t11;
        d2[0] += t20;
        d2[dns] += t21;
        d3[0] += t30;
        d3[dns] += t31;
      } else {
        d0[0] = t00;
        d0[dns] = t01;
        d1[0] = t10;
        d1[dns] = t11;
        d2[0] = t20;
        d2[dns] = t21;
        d3[0] = t30;
        d3[dns] = t31;
      }
    }
    for (; n0 < N; ++n0)
      for (int i = 0; i < 4; ++i) {
        const Real s =
            dot_window(A + (m0 + i) * ams, ahs, B + n0 * bns, bhs, NH, NW);
        Real* d = D + (m0 + i) * dms + n0 * dns;
        if constexpr (Acc)
          *d += s;
        else
          *d = s;
      }
  }
  for (; m0 < M; ++m0)
    for (int n0 = 0; n0 < N; ++n0) {
      const Real s = dot_window(A + m0 * ams, ahs, B + n0 * bns, bhs, NH, NW);
      Real* d = D + m0 * dms + n0 * dns;
      if constexpr (Acc)
        *d += s;
      else
        *d = s;
    }
}

template <typename Real>
void gemm_nn(const Real* a, const Real* b, Real* o, int M, int K, int N) {
  gemm_tile<false>(a, K, 1, b, N, 0, o, N, 0, M, K, 1, N);
}

template <typename Real>
void gemm_nt(const Real* a, const Real* bt, Real* o, int M, int K, int N) {
  // bt is [N, K]; out[m,n] = dot(a[m,:], bt[n,:])
  dot_tile<false>(a, K, 0, bt, K, 0, o, N, 1, M, N, 1, K);
}

// o[k,n] += sum_m a[m,k] * g[m,n]  (a^T g via a strided view, accumulated)
template <typename Real>
void gemm_tn_accum(const Real* a, const Real* g, Real* o, int M, int K, int N) {
  gemm_tile<true>(a, 1, K, g, N, 0, o, N, 0, K, M, 1, N);
}

// o[m,k] += g[m,:] . b[:,k] as rows: o[m,:] += sum_n g[m,n] * b[n,:] where b is [N,K]
template <typename Real>
void gemm_nn_accum(const Real* g, const Real* b, Real* o, int M, int N, int K) {
  gemm_tile<true>(g, N, 1, b, K, 0, o, K, 0, M, N, 1, K);
}

// o[m,k] += dot(g[m,:], b[k,:]) where b is [K, N]
template <typename Real>
void gemm_nt_accum(const Real* g, const Real* b, Real* o, int M, int N, int K) {
  dot_tile<true>(g, N, 0, b, N, 0, o, K, 1, M, K, 1, N);
}

}  // namespace detail

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, bool transpose_b = false) {
  check(a.ndim() >= 2 && b.ndim() >= 2, "matmul: operands must have rank >= 2");
  const int M = a.dim(a.ndim() - 2), K = a.dim(a.ndim() - 1);
  const int bK = transpose_b ? b.dim(b.ndim() - 1) : b.dim(b.ndim() - 2);
  const int N = transpose_b ? b.dim(b.ndim() - 2) : b.dim(b.ndim() - 1);
  if (K != bK)
    check(false, "matmul: inner dimensions disagree (" + std::to_string(K) + " vs " +
                     std::to_string(bK) + ")");

  Shape alead(a.shape().begin(), a.shape().end() - 2);
  Shape blead(b.shape().begin(), b.shape().end() - 2);
  const Shape lead = broadcast_shape(alead, blead);
  Shape oshape = lead;
  oshape.push_back(M);
  oshape.push_back(N);

  auto out = make_output<Real>(oshape, a.requires_grad() || b.requires_grad(), false);
  const auto sa = broadcast_strides(alead, lead);
  const auto sb = broadcast_strides(blead, lead);
  const int64_t batches = shape_numel(lead);
  const int64_t amat = int64_t(M) * K, bmat = int64_t(bK) * (transpose_b ? N : K);
  const int64_t bmat2 = transpose_b ? int64_t(N) * K : int64_t(K) * N;
  (void)bmat;
  const int64_t omat = int64_t(M) * N;

  // Per-batch base offsets via the stride maps (0 on broadcast axes).
  // Captures by value: the backward closure outlives this stack frame.
  auto offsets = [lead, sa, sb](int64_t idx, int64_t& ao, int64_t& bo) {
    ao = 0;
    bo = 0;
    for (int i = int(lead.size()) - 1; i >= 0; --i) {
      const int64_t c = idx % lead[size_t(i)];
      idx /= lead[size_t(i)];
      ao += c * sa[size_t(i)];
      bo += c * sb[size_t(i)];
    }
  };

  for (int64_t bi = 0; bi < batches; ++bi) {
    int64_t ao, bo;
    offsets(bi, ao, bo);
    const Real* ap = a.data().data() + ao * amat;
    const Real* bp = b.data().data() + bo * bmat2;
    Real* op = out.data().data() + bi * omat;
    if (transpose_b)
      detail::gemm_nt(ap, bp, op, M, K, N);
    else
      detail::gemm_nn(ap, bp, op, M, K, N);
  }
  check_finite(out, "matmul");

  record_backward(out, [apd = a.ptr(), bpd = b.ptr(), op = out.ptr(), lead, sa, sb,
                        M, K, N, amat, bmat2, omat, batches, transpose_b, offsets]() {
    for (int64_t bi = 0; bi < batches; ++bi) {
      int64_t ao, bo;
      offsets(bi, ao, bo);
      const Real* g = op->grad.data() + bi * omat;
      const Real* av = apd->data.data() + ao * amat;
      const Real* bv = bpd->data.data() + bo * bmat2;
      if (apd->requires_grad) {
        Real* da = apd->grad.data() + ao * amat;
        if (transpose_b)
          detail::gemm_nn_accum(g, bv, da, M, N, K);  // dA += g . B
        else
          detail::gemm_nt_accum(g, bv, da, M, N, K);  // dA += g . B^T
      }
      if (bpd->requires_grad) {
        Real* db = bpd->grad.data() + bo * bmat2;
        if (transpose_b)
          detail::gemm_tn_accum(g, av, db, M, N, K);  // dB += g^T . A  ([N,K])
        else
          detail::gemm_tn_accum(av, g, db, M, K, N);  // dB += A^T . g  ([K,N])
      }
    }
  });
  return out;
}

// Fused affine map: x [..., in] -> [..., out] with weight [out, in], bias [out].
template <typename Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>* bias = nullptr) {
  check(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
  const int in = x.dim(x.ndim() - 1);
  check(w.dim(1) == in, "linear: weight in-dim mismatch");
  const int outd = w.dim(0);
  if (bias) check(bias->ndim() == 1 && bias->dim(0) == outd, "linear: bias shape mismatch");
  const int64_t rows = x.numel() / in;
  Shape oshape = x.shape();
  oshape.back() = outd;
  const bool anygrad = x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  auto out = make_output<Real>(oshape, anygrad, false);

  const Real* xd = x.data().data();
  const Real* wd = w.data().data();
  const Real* bd = bias ? bias->data().data() : nullptr;
  Real* od = out.data().data();
  // Weight transposed once so the row-major kernel streams it; rows chunked
  // for the thread pool. Bias becomes a prefill the kernel accumulates onto.
  std::vector<Real> wt = detail::buffer_pool<Real>().get(size_t(in) * size_t(outd));
  for (int o = 0; o < outd; ++o)
    for (int i = 0; i < in; ++i) wt[size_t(i) * outd + o] = wd[size_t(o) * in + i];
  const int64_t chunk = 256;
  const int64_t nchunks = (rows + chunk - 1) / chunk;
  parallel_for(nchunks, [&](int64_t c0) {
    const int64_t r0 = c0 * chunk;
    const int rc = int(std::min(chunk, rows - r0));
    Real* ob = od + r0 * outd;
    if (bd) {
      for (int64_t r = 0; r < rc; ++r)
        for (int o = 0; o < outd; ++o) ob[r * outd + o] = bd[o];
      detail::gemm_tile<true>(xd + r0 * in, in, 1, wt.data(), outd, 0, ob, outd, 0,
                              rc, in, 1, outd);
    } else {
      detail::gemm_tile<false>(xd + r0 * in, in, 1, wt.data(), outd, 0, ob, outd, 0,
                               rc, in, 1, outd);
    }
  });
  detail::buffer_pool<Real>().put(std::move(wt));
  check_finite(out, "linear");

  auto bp = bias ? bias->ptr() : std::shared_ptr<TensorData<Real>>();
  record_backward(out, [xp = x.ptr(), wp = w.ptr(), bp, op = out.ptr(), rows, in, outd,
                        chunk, nchunks]() {
    const Real* g = op->grad.data();
    if (xp->requires_grad) {
      Real* dx = xp->grad.data();
      const Real* wd2 = wp->data.data();
      parallel_for(nchunks, [&](int64_t c0) {
        const int64_t r0 = c0 * chunk;
        const int rc = int(std::min(chunk, rows - r0));
        detail::gemm_tile<true>(g + r0 * outd, outd, 1, wd2, in, 0, dx + r0 * in, in,
                                0, rc, outd, 1, in);
      });
    }
    if (wp->requires_grad) {
      Real* dw = wp->grad.data();
      const Real* xd2 = xp->data.data();
      // dw[o,i] += sum_r g[r,o] x[r,i]: g^T is a strided view, no transpose.
      detail::gemm_tile<true>(g, 1, outd, xd2, in, 0, dw, in, 0, outd, int(rows), 1,
                              in);
    }
    if (bp && bp->requires_grad) {
      Real* db = bp->grad.data();
      for (int64_t r = 0; r < rows; ++r) {
        const Real* grow = g + r * outd;
        for (int o = 0; o < outd; ++o) db[o] += grow[o];
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Instance normalization over the spatial axes of [B, C, H, W], affine.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> instance_norm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                           const Tensor<Real>& beta, double eps = 1e-5) {
  check(x.ndim() == 4, "instance_norm: input must be [B,C,H,W]");
  const int B = x.dim(0), C = x.dim(1);
  const int64_t m = int64_t(x.dim(2)) * x.dim(3);
  check(gamma.ndim() == 1 && gamma.dim(0) == C, "instance_norm: gamma shape");
  check(beta.ndim() == 1 && beta.dim(0) == C, "instance_norm: beta shape");
  const bool anygrad = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  auto out = make_output<Real>(x.shape(), anygrad, false);

  std::vector<Real> mean(size_t(B) * C), ivstd(size_t(B) * C);
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t bc = 0; bc < int64_t(B) * C; ++bc) {
    const Real* p = xd + bc * m;
    Real mu(0);
    for (int64_t i = 0; i < m; ++i) mu += p[i];
    mu /= Real(m);
    Real var(0);
    for (int64_t i = 0; i < m; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= Real(m);
    mean[size_t(bc)] = mu;
    ivstd[size_t(bc)] = Real(1) / std::sqrt(var + Real(eps));
    const Real gam = gamma.data()[size_t(bc % C)];
    const Real bet = beta.data()[size_t(bc % C)];
    Real* o = od + bc * m;
    for (int64_t i = 0; i < m; ++i) o[i] = gam * (p[i] - mu) * ivstd[size_t(bc)] + bet;
  }
  check_finite(out, "instance_norm");

  record_backward(out, [xp = x.ptr(), gp = gamma.ptr(), bp = beta.ptr(), op = out.ptr(),
                        mean, ivstd, B, C, m]() {
    const Real* xd2 = xp->data.data();
    const Real* g = op->grad.data();
    for (int64_t bc = 0; bc < int64_t(B) * C; ++bc) {
      const Real* p = xd2 + bc * m;
      const Real* grow = g + bc * m;
      const Real mu = mean[size_t(bc)], iv = ivstd[size_t(bc)];
      const Real gam = gp->data[size_t(bc % C)];
      Real sg(0), sgx(0);
      for (int64_t i = 0; i < m; ++i) {
        sg += grow[i];
        sgx += grow[i] * (p[i] - mu) * iv;
      }
      if (gp->requires_grad) gp->grad[size_t(bc % C)] += sgx;
      if (bp->requires_grad) bp->grad[size_t(bc % C)] += sg;
      if (xp->requires_grad) {
        Real* dx = xp->grad.data() + bc * m;
        const Real k1 = gam * iv;
        for (int64_t i = 0; i < m; ++i) {
          const Real xhat = (p[i] - mu) * iv;
          dx[i] += k1 * (grow[i] - sg / Real(m) - xhat * sgx / Real(m));
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Sub-pixel rearrange on the last three axes [..., C*s, H, W]:
//   axis 2 (W): out[..., c, h, w*s + j] = x[..., j*C + c, h, w]
//   axis 1 (H): out[..., c, h*s + j, w] = x[..., j*C + c, h, w]
// The inverse permutation is sub_pixel_inverse.
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> sub_pixel(const Tensor<Real>& x, int s, int axis) {
  check(x.ndim() >= 3, "sub_pixel: need at least [C,H,W]");
  check(axis == 1 || axis == 2, "sub_pixel: axis must be 1 (H) or 2 (W)");
  const int nd = x.ndim();
  const int Cs = x.dim(nd - 3), H = x.dim(nd - 2), W = x.dim(nd - 1);
  check(s >= 1 && Cs % s == 0, "sub_pixel: channel extent not divisible by s");
  const int C = Cs / s;
  Shape oshape = x.shape();
  oshape[size_t(nd - 3)] = C;
  oshape[size_t(nd - 2)] = axis == 1 ? H * s : H;
  oshape[size_t(nd - 1)] = axis == 2 ? W * s : W;
  auto out = make_output<Real>(oshape, x.requires_grad(), false);
  const int64_t batch = x.numel() / (int64_t(Cs) * H * W);
  const int64_t xs = int64_t(Cs) * H * W, os = xs;
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  const int oH = oshape[size_t(nd - 2)], oW = oshape[size_t(nd - 1)];
  for (int64_t b = 0; b < batch; ++b)
    for (int j = 0; j < s; ++j)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            const int oh = axis == 1 ? h * s + j : h;
            const int ow = axis == 2 ? w * s + j : w;
            od[b * os + (int64_t(c) * oH + oh) * oW + ow] =
                xd[b * xs + (int64_t(j * C + c) * H + h) * W + w];
          }
  record_backward(out, [xp = x.ptr(), op = out.ptr(), batch, s, C, H, W, oH, oW, xs, os, axis]() {
    for (int64_t b = 0; b < batch; ++b)
      for (int j = 0; j < s; ++j)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
              const int oh = axis == 1 ? h * s + j : h;
              const int ow = axis == 2 ? w * s + j : w;
              xp->grad[size_t(b * xs + (int64_t(j * C + c) * H + h) * W + w)] +=
                  op->grad[size_t(b * os + (int64_t(c) * oH + oh) * oW + ow)];
            }
  });
  return out;
}

// Exact inverse of sub_pixel (space back to channels).
template <typename Real>
Tensor<Real> sub_pixel_inverse(const Tensor<Real>& x, int s, int axis) {
  check(x.ndim() >= 3, "sub_pixel_inverse: need at least [C,H,W]");
  check(axis == 1 || axis == 2, "sub_pixel_inverse: axis must be 1 or 2");
  const int nd = x.ndim();
  const int C = x.dim(nd - 3), H = x.dim(nd - 2), W = x.dim(nd - 1);
  const int ext = axis == 1 ? H : W;
  check(ext % s == 0, "sub_pixel_inverse: spatial extent not divisible by s");
  Shape oshape = x.shape();
  oshape[size_t(nd - 3)] = C * s;
  oshape[size_t(nd - 2)] = axis == 1 ? H / s : H;
  oshape[size_t(nd - 1)] = axis == 2 ? W / s : W;
  auto out = make_output<Real>(oshape, x.requires_grad(), false);
  const int64_t batch = x.numel() / (int64_t(C) * H * W);
  const int64_t xs = int64_t(C) * H * W, os = xs;
  const int nH = oshape[size_t(nd - 2)], nW = oshape[size_t(nd - 1)];
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int j = 0; j < s; ++j)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < nH; ++h)
          for (int w = 0; w < nW; ++w) {
            const int ih = axis == 1 ? h * s + j : h;
            const int iw = axis == 2 ? w * s + j : w;
            od[b * os + (int64_t(j * C + c) * nH + h) * nW + w] =
                xd[b * xs + (int64_t(c) * H + ih) * W + iw];
          }
  record_backward(out, [xp = x.ptr(), op = out.ptr(), batch, s, C, H, W, nH, nW, xs, os, axis]() {
    for (int64_t b = 0; b < batch; ++b)
      for (int j = 0; j < s; ++j)
        for (int c = 0; c < C; ++c)
          for (int h = 0; h < nH; ++h)
            for (int w = 0; w < nW; ++w) {
              const int ih = axis == 1 ? h * s + j : h;
              const int iw = axis == 2 ? w * s + j : w;
              xp->grad[size_t(b * xs + (int64_t(c) * H + ih) * W + iw)] +=
                  op->grad[size_t(b * os + (int64_t(j * C + c) * nH + h) * nW + w)];
            }
  });
  return out;
}

}  // namespace zipenh
