// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "zipenh/ops.hpp"
#include "zipenh/stft.hpp"
#include "zipenh/tensor.hpp"

namespace zipenh {

// Input feature stack: channel 0 = compressed magnitude, channel 1 = phase.
template <typename Real>
Tensor<Real> stack_input(const Spectrum<Real>& s) {
  const int T = s.frames, F = s.bins;
  Tensor<Real> out({2, T, F});
  Real* m = out.data().data();
  Real* p = m + int64_t(T) * F;
  for (int64_t i = 0; i < int64_t(T) * F; ++i) {
    m[i] = compress_magnitude(s.magnitude[size_t(i)], s.config.compression_c);
    p[i] = s.phase[size_t(i)];
  }
  return out;
}

namespace detail {

// d/dx of one-sided rfft given grads on (re, im): interior bins halved, then
// N * irfft of the resulting spectrum (exact adjoint, see the matching test).
template <typename Real>
void rfft_adjoint(const Real* gre, const Real* gim, int n_fft, std::vector<Real>& dx) {
  const int F = n_fft / 2 + 1;
  std::vector<std::complex<Real>> G(size_t(F), std::complex<Real>(0, 0));
  for (int k = 0; k < F; ++k) {
    const bool interior = k != 0 && k != n_fft / 2;
    const Real s = interior ? Real(0.5) : Real(1);
    G[size_t(k)] = std::complex<Real>(gre[k] * s, gim[k] * s);
  }
  dx = irfft(G, n_fft);
  for (auto& v : dx) v *= Real(n_fft);
}

// Adjoint of irfft: dre[k] = (c_k/N) Re(rfft(g))[k], dim[k] = (2/N) Im(rfft(g))[k]
// with c_k = 1 at DC/Nyquist and 2 in the interior (where dim is forced 0).
template <typename Real>
void irfft_adjoint(const std::vector<Real>& gframe, int n_fft, Real* dre, Real* dim) {
  const auto R = rfft(gframe);
  const int F = n_fft / 2 + 1;
  for (int k = 0; k < F; ++k) {
    const bool interior = k != 0 && k != n_fft / 2;
    dre[k] += (interior ? Real(2) : Real(1)) / Real(n_fft) * R[size_t(k)].real();
    dim[k] += interior ? Real(2) / Real(n_fft) * R[size_t(k)].imag() : Real(0);
  }
}

}  // namespace detail

// Differentiable analysis transform: x [B, L] -> (re, im), each [B, T, F].
// Same framing as stft(): centre reflect pad, Hann window, T = floor(L/hop)+1.
template <typename Real>
std::pair<Tensor<Real>, Tensor<Real>> stft_op(const Tensor<Real>& x, const StftConfig& cfg) {
  cfg.validate();
  check(x.ndim() == 2, "stft_op: input must be [B, L]");
  const int B = x.dim(0);
  const int64_t L = x.dim(1);
  const int pad = cfg.center_pad ? cfg.win_length / 2 : 0;
  const int T = cfg.frames(L), F = cfg.bins();
  const auto win = hann_window<Real>(cfg.win_length);

  auto re = make_output<Real>({B, T, F}, x.requires_grad(), false);
  auto im = make_output<Real>({B, T, F}, x.requires_grad(), false);
  const Real* xd = x.data().data();
  Real* red = re.data().data();
  Real* imd = im.data().data();
  std::vector<Real> frame(size_t(cfg.n_fft), Real(0));
  for (int b = 0; b < B; ++b) {
    const Real* xb = xd + int64_t(b) * L;
    for (int t = 0; t < T; ++t) {
      const int64_t start = int64_t(t) * cfg.hop - pad;
      for (int n = 0; n < cfg.win_length; ++n) {
        const int64_t i = start + n;
        const Real v = (i >= 0 && i < L)
                           ? xb[i]
                           : (cfg.center_pad ? xb[detail::reflect_index(i, L)] : Real(0));
        frame[size_t(n)] = win[size_t(n)] * v;
      }
      for (int n = cfg.win_length; n < cfg.n_fft; ++n) frame[size_t(n)] = Real(0);
      const auto spec = rfft(frame);
      Real* rrow = red + (int64_t(b) * T + t) * F;
      Real* irow = imd + (int64_t(b) * T + t) * F;
      for (int f = 0; f < F; ++f) {
        rrow[f] = spec[size_t(f)].real();
        irow[f] = spec[size_t(f)].imag();
      }
    }
  }
  check_finite(re, "stft_op");
  check_finite(im, "stft_op");

  // One tape entry propagating both outputs.
  if (grad_enabled<Real>() && x.requires_grad()) {
    auto closure = [xp = x.ptr(), rp = re.ptr(), ip = im.ptr(), cfg, win, B, L, T, F, pad]() {
      std::vector<Real> dframe;
      for (int b = 0; b < B; ++b) {
        Real* dxb = xp->grad.data() + int64_t(b) * L;
        for (int t = 0; t < T; ++t) {
          const Real* gre = rp->grad.data() + (int64_t(b) * T + t) * F;
          const Real* gim = ip->grad.data() + (int64_t(b) * T + t) * F;
          detail::rfft_adjoint(gre, gim, cfg.n_fft, dframe);
          const int64_t start = int64_t(t) * cfg.hop - pad;
          for (int n = 0; n < cfg.win_length; ++n) {
            const int64_t i = start + n;
            const Real g = win[size_t(n)] * dframe[size_t(n)];
            if (i >= 0 && i < L)
              dxb[i] += g;
            else if (cfg.center_pad)
              dxb[detail::reflect_index(i, L)] += g;
          }
        }
      }
    };
    active_graph<Real>()->tape.emplace_back(std::move(closure));
  }
  return {re, im};
}

// Differentiable synthesis transform: (re, im) [B, T, F] -> x [B, L] by
// Hann-weighted overlap-add normalized by the running window-square sum.
template <typename Real>
Tensor<Real> istft_op(const Tensor<Real>& re, const Tensor<Real>& im,
                      const StftConfig& cfg, int64_t original_length) {
  cfg.validate();
  check(re.ndim() == 3 && im.ndim() == 3, "istft_op: inputs must be [B, T, F]");
  check(re.shape() == im.shape(), "istft_op: re/im shape mismatch");
  const int B = re.dim(0), T = re.dim(1), F = re.dim(2);
  check(F == cfg.bins(), "istft_op: bin count does not match config");
  check(T == cfg.frames(original_length), "istft_op: frame count does not match length");
  const int pad = cfg.center_pad ? cfg.win_length / 2 : 0;
  const int64_t L = original_length;
  const auto win = hann_window<Real>(cfg.win_length);

  const int64_t padded = int64_t(T - 1) * cfg.hop + cfg.win_length;
  std::vector<Real> wsum(size_t(padded), Real(0));
  for (int t = 0; t < T; ++t)
    for (int n = 0; n < cfg.win_length; ++n)
      wsum[size_t(int64_t(t) * cfg.hop + n)] += win[size_t(n)] * win[size_t(n)];
  for (int64_t i = 0; i < L; ++i)
    check(wsum[size_t(i + pad)] >= Real(1e-8),
          "istft_op: window sum of squares below 1e-8 at a retained sample");

  auto out = make_output<Real>({B, int(L)}, re.requires_grad() || im.requires_grad(), false);
  Real* od = out.data().data();
  std::vector<std::complex<Real>> spec(size_t(F), std::complex<Real>(0, 0));
  std::vector<Real> acc(size_t(padded), Real(0));
  for (int b = 0; b < B; ++b) {
    std::fill(acc.begin(), acc.end(), Real(0));
    for (int t = 0; t < T; ++t) {
      const Real* rrow = re.data().data() + (int64_t(b) * T + t) * F;
      const Real* irow = im.data().data() + (int64_t(b) * T + t) * F;
      for (int f = 0; f < F; ++f) spec[size_t(f)] = std::complex<Real>(rrow[f], irow[f]);
      const auto frame = irfft(spec, cfg.n_fft);
      const int64_t start = int64_t(t) * cfg.hop;
      for (int n = 0; n < cfg.win_length; ++n)
        acc[size_t(start + n)] += win[size_t(n)] * frame[size_t(n)];
    }
    Real* ob = od + int64_t(b) * L;
    for (int64_t i = 0; i < L; ++i) ob[i] = acc[size_t(i + pad)] / wsum[size_t(i + pad)];
  }
  check_finite(out, "istft_op");

  if (out.requires_grad()) {
    auto closure = [rp = re.ptr(), ip = im.ptr(), op = out.ptr(), cfg, win, wsum, B, T,
                    F, pad, L, padded]() {
      std::vector<Real> gacc(size_t(padded), Real(0));
      std::vector<Real> gframe(size_t(cfg.n_fft), Real(0));
      for (int b = 0; b < B; ++b) {
        std::fill(gacc.begin(), gacc.end(), Real(0));
        const Real* gy = op->grad.data() + int64_t(b) * L;
        for (int64_t i = 0; i < L; ++i) gacc[size_t(i + pad)] = gy[i] / wsum[size_t(i + pad)];
        for (int t = 0; t < T; ++t) {
          const int64_t start = int64_t(t) * cfg.hop;
          for (int n = 0; n < cfg.n_fft; ++n)
            gframe[size_t(n)] =
                n < cfg.win_length ? win[size_t(n)] * gacc[size_t(start + n)] : Real(0);
          Real* dre = rp->requires_grad ? rp->grad.data() + (int64_t(b) * T + t) * F : nullptr;
          Real* dim = ip->requires_grad ? ip->grad.data() + (int64_t(b) * T + t) * F : nullptr;
          std::vector<Real> dre_tmp(size_t(F), Real(0)), dim_tmp(size_t(F), Real(0));
          detail::irfft_adjoint(gframe, cfg.n_fft, dre_tmp.data(), dim_tmp.data());
          if (dre)
            for (int f = 0; f < F; ++f) dre[f] += dre_tmp[size_t(f)];
          if (dim)
            for (int f = 0; f < F; ++f) dim[f] += dim_tmp[size_t(f)];
        }
      }
    };
    active_graph<Real>()->tape.emplace_back(std::move(closure));
  }
  return out;
}

}  // namespace zipenh
