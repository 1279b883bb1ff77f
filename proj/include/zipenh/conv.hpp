// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "zipenh/ops.hpp"
#include "zipenh/tensor.hpp"

namespace zipenh {

struct Conv2dSpec {
  int stride_h = 1, stride_w = 1;
  int dil_h = 1, dil_w = 1;
  int pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
};

namespace detail {

// Valid output range along one axis for a given kernel tap: all o with
// 0 <= o*stride + k*dil - pad < extent.
inline void tap_range(int extent, int out_extent, int stride, int kd, int pad,
                      int& lo, int& hi) {
  const int num = pad - kd;
  lo = num <= 0 ? 0 : (num + stride - 1) / stride;
  const int top = extent - 1 + pad - kd;
  hi = top < 0 ? 0 : std::min(out_extent, top / stride + 1);
  if (hi < lo) hi = lo;
}

}  // namespace detail

// Direct 2-D convolution (cross-correlation convention, no kernel flip).
// x: [B, C_in, H, W] or [C_in, H, W]; w: [C_out, C_in, kH, kW]; explicit
// zero padding with independent amounts per side.
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Conv2dSpec& sp, const Tensor<Real>* bias = nullptr) {
  const bool batched = x.ndim() == 4;
  check(batched || x.ndim() == 3, "conv2d: input must be [B,C,H,W] or [C,H,W]");
  check(w.ndim() == 4, "conv2d: weight must be [C_out,C_in,kH,kW]");
  const int B = batched ? x.dim(0) : 1;
  const int Cin = x.dim(batched ? 1 : 0);
  const int H = x.dim(batched ? 2 : 1);
  const int W = x.dim(batched ? 3 : 2);
  const int Cout = w.dim(0), kH = w.dim(2), kW = w.dim(3);
  check(w.dim(1) == Cin, "conv2d: C_in mismatch");
  check(sp.stride_h >= 1 && sp.stride_w >= 1 && sp.dil_h >= 1 && sp.dil_w >= 1,
        "conv2d: stride and dilation must be >= 1");
  const int effH = sp.dil_h * (kH - 1) + 1, effW = sp.dil_w * (kW - 1) + 1;
  const int padH = H + sp.pad_top + sp.pad_bottom;
  const int padW = W + sp.pad_left + sp.pad_right;
  check(padH >= effH && padW >= effW, "conv2d: kernel larger than padded input");
  const int Hout = (padH - effH) / sp.stride_h + 1;
  const int Wout = (padW - effW) / sp.stride_w + 1;
  if (bias) check(bias->ndim() == 1 && bias->dim(0) == Cout, "conv2d: bias shape mismatch");

  Shape oshape = batched ? Shape{B, Cout, Hout, Wout} : Shape{Cout, Hout, Wout};
  const bool anygrad =
      x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  auto out = make_output<Real>(oshape, anygrad, false);

  const Real* xd = x.data().data();
  const Real* wd = w.data().data();
  const Real* bd = bias ? bias->data().data() : nullptr;
  Real* od = out.data().data();
  const int64_t xplane = int64_t(H) * W, oplane = int64_t(Hout) * Wout;
  const int64_t xbatch = int64_t(Cin) * xplane, obatch = int64_t(Cout) * oplane;

  // Unit w-stride keeps output rows contiguous per tap, so each (kh, kw)
  // tap is a strided GEMM over channels; other shapes take the direct loop.
  const bool tapgemm = sp.stride_w == 1 && sp.dil_w == 1;
  const int64_t wcin = int64_t(Cin) * kH * kW, wk = int64_t(kH) * kW;
  if (tapgemm) {
    const int mtiles = (Cout + 3) / 4;
    parallel_for(int64_t(B) * mtiles, [&](int64_t task) {
      const int b = int(task / mtiles), co0 = int(task % mtiles) * 4;
      const int mc = std::min(4, Cout - co0);
      for (int m = 0; m < mc; ++m) {
        Real* oc = od + b * obatch + int64_t(co0 + m) * oplane;
        const Real bv = bd ? bd[co0 + m] : Real(0);
        for (int64_t i = 0; i < oplane; ++i) oc[i] = bv;
      }
      for (int kh = 0; kh < kH; ++kh) {
        int oh_lo, oh_hi;
        detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
        for (int kw = 0; kw < kW; ++kw) {
          int ow_lo, ow_hi;
          detail::tap_range(W, Wout, 1, kw, sp.pad_left, ow_lo, ow_hi);
          if (oh_hi <= oh_lo || ow_hi <= ow_lo) continue;
          const int ih0 = oh_lo * sp.stride_h + kh * sp.dil_h - sp.pad_top;
          const int iw0 = ow_lo + kw - sp.pad_left;
          detail::gemm_tile<true>(
              wd + int64_t(co0) * wcin + int64_t(kh) * kW + kw, wcin, wk,
              xd + b * xbatch + int64_t(ih0) * W + iw0, xplane,
              int64_t(W) * sp.stride_h,
              od + b * obatch + int64_t(co0) * oplane + int64_t(oh_lo) * Wout + ow_lo,
              oplane, Wout, mc, Cin, oh_hi - oh_lo, ow_hi - ow_lo);
        }
      }
    });
  } else {
    parallel_for(int64_t(B) * Cout, [&](int64_t bco) {
      const int b = int(bco / Cout), co = int(bco % Cout);
      Real* oc = od + b * obatch + int64_t(co) * oplane;
      const Real bv = bd ? bd[co] : Real(0);
      for (int64_t i = 0; i < oplane; ++i) oc[i] = bv;
      for (int ci = 0; ci < Cin; ++ci) {
        const Real* xc = xd + b * xbatch + int64_t(ci) * xplane;
        for (int kh = 0; kh < kH; ++kh) {
          int oh_lo, oh_hi;
          detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
          for (int kw = 0; kw < kW; ++kw) {
            const Real wv = wd[((int64_t(co) * Cin + ci) * kH + kh) * kW + kw];
            int ow_lo, ow_hi;
            detail::tap_range(W, Wout, sp.stride_w, kw * sp.dil_w, sp.pad_left, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const int ih = oh * sp.stride_h + kh * sp.dil_h - sp.pad_top;
              const Real* xrow = xc + int64_t(ih) * W;
              Real* orow = oc + int64_t(oh) * Wout;
              for (int ow = ow_lo; ow < ow_hi; ++ow)
                orow[ow] += wv * xrow[ow * sp.stride_w + kw * sp.dil_w - sp.pad_left];
            }
          }
        }
      }
    });
  }
  check_finite(out, "conv2d");

  auto bp = bias ? bias->ptr() : std::shared_ptr<TensorData<Real>>();
  record_backward(out, [xp = x.ptr(), wp = w.ptr(), bp, op = out.ptr(), sp, B, Cin,
                        Cout, H, W, Hout, Wout, kH, kW, xplane, oplane, xbatch,
                        obatch]() {
    const Real* g = op->grad.data();
    const Real* xd2 = xp->data.data();
    const Real* wd2 = wp->data.data();
    const bool tapgemm2 = sp.stride_w == 1 && sp.dil_w == 1;
    const int64_t wcin2 = int64_t(Cin) * kH * kW, wk2 = int64_t(kH) * kW;
    if (xp->requires_grad) {
      Real* dx = xp->grad.data();
      if (tapgemm2) {
        // dx[ci,:] += W^T . g per tap; taps overlap columns, so the tap
        // loop stays serial inside each batch item.
        parallel_for(B, [&](int64_t b) {
          for (int kh = 0; kh < kH; ++kh) {
            int oh_lo, oh_hi;
            detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
            for (int kw = 0; kw < kW; ++kw) {
              int ow_lo, ow_hi;
              detail::tap_range(W, Wout, 1, kw, sp.pad_left, ow_lo, ow_hi);
              if (oh_hi <= oh_lo || ow_hi <= ow_lo) continue;
              const int ih0 = oh_lo * sp.stride_h + kh * sp.dil_h - sp.pad_top;
              const int iw0 = ow_lo + kw - sp.pad_left;
              detail::gemm_tile<true>(
                  wd2 + int64_t(kh) * kW + kw, wk2, wcin2,
                  g + b * obatch + int64_t(oh_lo) * Wout + ow_lo, oplane, Wout,
                  dx + b * xbatch + int64_t(ih0) * W + iw0, xplane,
                  int64_t(W) * sp.stride_h, Cin, Cout, oh_hi - oh_lo, ow_hi - ow_lo);
            }
          }
        });
      } else {
        parallel_for(B, [&](int64_t b) {
          for (int co = 0; co < Cout; ++co) {
            const Real* gc = g + b * obatch + int64_t(co) * oplane;
            for (int ci = 0; ci < Cin; ++ci) {
              Real* dxc = dx + b * xbatch + int64_t(ci) * xplane;
              for (int kh = 0; kh < kH; ++kh) {
                int oh_lo, oh_hi;
                detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
                for (int kw = 0; kw < kW; ++kw) {
                  const Real wv = wd2[((int64_t(co) * Cin + ci) * kH + kh) * kW + kw];
                  int ow_lo, ow_hi;
                  detail::tap_range(W, Wout, sp.stride_w, kw * sp.dil_w, sp.pad_left, ow_lo, ow_hi);
                  for (int oh = oh_lo; oh < oh_hi; ++oh) {
                    const int ih = oh * sp.stride_h + kh * sp.dil_h - sp.pad_top;
                    Real* dxrow = dxc + int64_t(ih) * W;
                    const Real* grow = gc + int64_t(oh) * Wout;
                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                      dxrow[ow * sp.stride_w + kw * sp.dil_w - sp.pad_left] += wv * grow[ow];
                  }
                }
              }
            }
          }
        });
      }
    }
    if (wp->requires_grad) {
      Real* dw = wp->grad.data();
      if (tapgemm2) {
        const int mtiles = (Cout + 3) / 4;
        parallel_for(mtiles, [&](int64_t mt) {
          const int co0 = int(mt) * 4;
          const int mc = std::min(4, Cout - co0);
          for (int64_t b = 0; b < B; ++b)
            for (int kh = 0; kh < kH; ++kh) {
              int oh_lo, oh_hi;
              detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
              for (int kw = 0; kw < kW; ++kw) {
                int ow_lo, ow_hi;
                detail::tap_range(W, Wout, 1, kw, sp.pad_left, ow_lo, ow_hi);
                if (oh_hi <= oh_lo || ow_hi <= ow_lo) continue;
                const int ih0 = oh_lo * sp.stride_h + kh * sp.dil_h - sp.pad_top;
                const int iw0 = ow_lo + kw - sp.pad_left;
                detail::dot_tile<true>(
                    g + b * obatch + int64_t(co0) * oplane + int64_t(oh_lo) * Wout + ow_lo,
                    oplane, Wout,
                    xd2 + b * xbatch + int64_t(ih0) * W + iw0, xplane,
                    int64_t(W) * sp.stride_h,
                    dw + int64_t(co0) * wcin2 + int64_t(kh) * kW + kw, wcin2, wk2, mc,
                    Cin, oh_hi - oh_lo, ow_hi - ow_lo);
              }
            }
        });
      } else {
        parallel_for(Cout, [&](int64_t co) {
          for (int64_t b = 0; b < B; ++b) {
            const Real* gc = g + b * obatch + co * oplane;
            for (int ci = 0; ci < Cin; ++ci) {
              const Real* xc = xd2 + b * xbatch + int64_t(ci) * xplane;
              for (int kh = 0; kh < kH; ++kh) {
                int oh_lo, oh_hi;
                detail::tap_range(H, Hout, sp.stride_h, kh * sp.dil_h, sp.pad_top, oh_lo, oh_hi);
                for (int kw = 0; kw < kW; ++kw) {
                  int ow_lo, ow_hi;
                  detail::tap_range(W, Wout, sp.stride_w, kw * sp.dil_w, sp.pad_left, ow_lo, ow_hi);
                  Real acc(0);
                  for (int oh = oh_lo; oh < oh_hi; ++oh) {
                    const int ih = oh * sp.stride_h + kh * sp.dil_h - sp.pad_top;
                    const Real* xrow = xc + int64_t(ih) * W;
                    const Real* grow = gc + int64_t(oh) * Wout;
                    for (int ow = ow_lo; ow < ow_hi; ++ow)
                      acc += grow[ow] * xrow[ow * sp.stride_w + kw * sp.dil_w - sp.pad_left];
                  }
                  dw[((co * Cin + ci) * kH + kh) * kW + kw] += acc;
                }
              }
            }
          }
        });
      }
    }
    if (bp && bp->requires_grad) {
      Real* db = bp->grad.data();
      for (int64_t b = 0; b < B; ++b)
        for (int co = 0; co < Cout; ++co) {
          const Real* gc = g + b * obatch + int64_t(co) * oplane;
          Real acc(0);
          for (int64_t i = 0; i < oplane; ++i) acc += gc[i];
          db[co] += acc;
        }
    }
  });
  return out;
}

// Depthwise 1-D convolution along the last axis of [B, C, S]; weight [C, k],
// optional bias [C], zero padding on both sides.
template <typename Real>
Tensor<Real> depthwise_conv1d(const Tensor<Real>& x, const Tensor<Real>& w,
                              int pad_left, int pad_right,
                              const Tensor<Real>* bias = nullptr) {
  check(x.ndim() == 3, "depthwise_conv1d: input must be [B,C,S]");
  check(w.ndim() == 2 && w.dim(0) == x.dim(1), "depthwise_conv1d: weight must be [C,k]");
  const int B = x.dim(0), C = x.dim(1), S = x.dim(2), k = w.dim(1);
  check(S + pad_left + pad_right >= k, "depthwise_conv1d: kernel larger than padded input");
  const int Sout = S + pad_left + pad_right - k + 1;
  if (bias) check(bias->ndim() == 1 && bias->dim(0) == C, "depthwise_conv1d: bias shape");
  const bool anygrad =
      x.requires_grad() || w.requires_grad() || (bias && bias->requires_grad());
  auto out = make_output<Real>({B, C, Sout}, anygrad, false);

  const Real* xd = x.data().data();
  const Real* wd = w.data().data();
  const Real* bd = bias ? bias->data().data() : nullptr;
  Real* od = out.data().data();
  parallel_for(int64_t(B) * C, [&](int64_t bc) {
    const int c = int(bc % C);
    const Real* xrow = xd + bc * S;
    Real* orow = od + bc * Sout;
    const Real bv = bd ? bd[c] : Real(0);
    for (int s = 0; s < Sout; ++s) orow[s] = bv;
    for (int j = 0; j < k; ++j) {
      const Real wv = wd[int64_t(c) * k + j];
      int lo, hi;
      detail::tap_range(S, Sout, 1, j, pad_left, lo, hi);
      const Real* xoff = xrow + j - pad_left;
      for (int s = lo; s < hi; ++s) orow[s] += wv * xoff[s];
    }
  });
  check_finite(out, "depthwise_conv1d");

  auto bp = bias ? bias->ptr() : std::shared_ptr<TensorData<Real>>();
  record_backward(out, [xp = x.ptr(), wp = w.ptr(), bp, op = out.ptr(), B, C, S, Sout,
                        k, pad_left]() {
    const Real* g = op->grad.data();
    const Real* xd2 = xp->data.data();
    const Real* wd2 = wp->data.data();
    if (xp->requires_grad) {
      Real* dx = xp->grad.data();
      parallel_for(int64_t(B) * C, [&](int64_t bc) {
        const int c = int(bc % C);
        Real* dxrow = dx + bc * S;
        const Real* grow = g + bc * Sout;
        for (int j = 0; j < k; ++j) {
          const Real wv = wd2[int64_t(c) * k + j];
          int lo, hi;
          detail::tap_range(S, Sout, 1, j, pad_left, lo, hi);
          Real* dxoff = dxrow + j - pad_left;
          for (int s = lo; s < hi; ++s) dxoff[s] += wv * grow[s];
        }
      });
    }
    if (wp->requires_grad) {
      Real* dw = wp->grad.data();
      parallel_for(C, [&](int64_t c) {
        for (int64_t b = 0; b < B; ++b) {
          const Real* xrow = xd2 + (b * C + c) * S;
          const Real* grow = g + (b * C + c) * Sout;
          for (int j = 0; j < k; ++j) {
            int lo, hi;
            detail::tap_range(S, Sout, 1, int(j), pad_left, lo, hi);
            const Real* xoff = xrow + j - pad_left;
            Real acc(0);
            for (int s = lo; s < hi; ++s) acc += grow[s] * xoff[s];
            dw[c * k + j] += acc;
          }
        }
      });
    }
    if (bp && bp->requires_grad) {
      Real* db = bp->grad.data();
      for (int64_t b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const Real* grow = g + (b * C + c) * Sout;
          Real acc(0);
          for (int s = 0; s < Sout; ++s) acc += grow[s];
          db[c] += acc;
        }
    }
  });
  return out;
}

}  // namespace zipenh
