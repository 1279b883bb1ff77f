// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "zipenh/common.hpp"
#include "zipenh/fft.hpp"
#include "zipenh/wav.hpp"

namespace zipenh {

struct StftConfig {
  int n_fft = 400;
  int win_length = 400;
  int hop = 100;
  double compression_c = 0.3;
  bool center_pad = true;

  void validate() const {
    check(n_fft >= 2 && win_length >= 1 && hop >= 1, "StftConfig: sizes must be positive");
    check(win_length <= n_fft, "StftConfig: win_length must be <= n_fft");
    check(hop <= win_length, "StftConfig: hop must be <= win_length");
    check(compression_c > 0.0 && compression_c <= 1.0, "StftConfig: compression_c must be in (0, 1]");
  }
  int bins() const { return n_fft / 2 + 1; }
  int frames(int64_t length) const { return int(length / hop) + 1; }
};

// magnitude/phase are row-major [T, F]; phase lies in (-pi, pi].
template <typename Real>
struct Spectrum {
  std::vector<Real> magnitude;
  std::vector<Real> phase;
  int frames = 0;
  int bins = 0;
  StftConfig config;
  int64_t original_length = 0;
  int sample_rate = 16000;

  Real& mag(int t, int f) { return magnitude[size_t(t) * bins + f]; }
  Real& ph(int t, int f) { return phase[size_t(t) * bins + f]; }
  const Real& mag(int t, int f) const { return magnitude[size_t(t) * bins + f]; }
  const Real& ph(int t, int f) const { return phase[size_t(t) * bins + f]; }
};

// Periodic Hann: w[n] = 0.5 * (1 - cos(2*pi*n/N)); sum over N samples = N/2.
template <typename Real>
std::vector<Real> hann_window(int n) {
  std::vector<Real> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = Real(0.5 * (1.0 - std::cos(6.283185307179586476925286766559 * i / n)));
  return w;
}

namespace detail {

// Reflect index into [0, len), bouncing off both edges without repeating them.
inline int64_t reflect_index(int64_t i, int64_t len) {
  if (len == 1) return 0;
  const int64_t period = 2 * (len - 1);
  i = i % period;
  if (i < 0) i += period;
  return i < len ? i : period - i;
}

}  // namespace detail

// Phase in (-pi, pi]; atan2(0, 0) defined as 0, and -pi maps to +pi.
template <typename Real>
Real principal_phase(Real im, Real re) {
  if (im == Real(0) && re == Real(0)) return Real(0);
  Real p = std::atan2(im, re);
  if (p <= Real(-3.14159265358979323846)) p = Real(3.14159265358979323846);
  return p;
}

template <typename Real>
Spectrum<Real> stft(const Waveform<Real>& w, const StftConfig& cfg) {
  cfg.validate();
  const int64_t L = int64_t(w.samples.size());
  check(L >= 1, "stft: input must have at least one sample");
  const int pad = cfg.center_pad ? cfg.win_length / 2 : 0;
  const int T = cfg.frames(L);
  const int F = cfg.bins();
  const auto win = hann_window<Real>(cfg.win_length);

  Spectrum<Real> s;
  s.frames = T;
  s.bins = F;
  s.config = cfg;
  s.original_length = L;
  s.sample_rate = w.sample_rate;
  s.magnitude.assign(size_t(T) * F, Real(0));
  s.phase.assign(size_t(T) * F, Real(0));

  std::vector<Real> frame(cfg.n_fft);
  for (int t = 0; t < T; ++t) {
    const int64_t start = int64_t(t) * cfg.hop - pad;
    for (int n = 0; n < cfg.win_length; ++n) {
      const int64_t i = start + n;
      const Real x = (i >= 0 && i < L) ? w.samples[size_t(i)]
                                       : (cfg.center_pad ? w.samples[size_t(detail::reflect_index(i, L))] : Real(0));
      frame[n] = win[n] * x;
    }
    for (int n = cfg.win_length; n < cfg.n_fft; ++n) frame[n] = Real(0);
    const auto spec = rfft(frame);
    for (int f = 0; f < F; ++f) {
      s.mag(t, f) = std::abs(spec[f]);
      s.ph(t, f) = principal_phase(spec[f].imag(), spec[f].real());
    }
  }
  return s;
}

// Weighted overlap-add with the analysis Hann as synthesis window, normalized
// by the running sum of squared windows, trimmed to original_length.
template <typename Real>
Waveform<Real> istft(const Spectrum<Real>& s) {
  s.config.validate();
  const StftConfig& cfg = s.config;
  const int64_t L = s.original_length;
  const int pad = cfg.center_pad ? cfg.win_length / 2 : 0;
  const int T = s.frames;
  const int F = s.bins;
  check(F == cfg.bins(), "istft: bin count does not match config");
  const auto win = hann_window<Real>(cfg.win_length);

  const int64_t padded = int64_t(T - 1) * cfg.hop + cfg.win_length;
  std::vector<Real> acc(padded, Real(0));
  std::vector<Real> wsum(padded, Real(0));

  std::vector<std::complex<Real>> spec(F);
  for (int t = 0; t < T; ++t) {
    for (int f = 0; f < F; ++f) {
      const Real m = s.mag(t, f), p = s.ph(t, f);
      spec[f] = std::complex<Real>(m * std::cos(p), m * std::sin(p));
    }
    const auto frame = irfft(spec, cfg.n_fft);
    const int64_t start = int64_t(t) * cfg.hop;
    for (int n = 0; n < cfg.win_length; ++n) {
      acc[size_t(start + n)] += win[n] * frame[n];
      wsum[size_t(start + n)] += win[n] * win[n];
    }
  }

  Waveform<Real> out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(size_t(L));
  for (int64_t i = 0; i < L; ++i) {
    const size_t j = size_t(i + pad);
    check(j < wsum.size() && wsum[j] >= Real(1e-8),
          "istft: window sum of squares below 1e-8 at a retained sample");
    out.samples[size_t(i)] = acc[j] / wsum[j];
  }
  return out;
}

template <typename Real>
Real compress_magnitude(Real m, double c) {
  return Real(std::pow(double(m), c));
}

// Negatives clamp to zero before the inverse power (decoder head is unbounded).
template <typename Real>
Real decompress_magnitude(Real m_c, double c) {
  const double v = double(m_c) < 0.0 ? 0.0 : double(m_c);
  return Real(std::pow(v, 1.0 / c));
}

}  // namespace zipenh
