#pragma once

// Objective quality metrics over waveforms: scale-invariant SDR and
// frame-clipped segmental SNR.

#include <cmath>
#include <cstdint>
#include <vector>

#include "zipenh/common.hpp"

namespace zipenh {

// 10*log10(||s||^2 / ||e||^2) with s the projection of est onto ref and
// e the residual. Invariant to rescaling est; reported value capped to
// +-100 dB so perfect matches stay finite.
template <typename Real>
double si_sdr(const std::vector<Real>& est, const std::vector<Real>& ref) {
  check(est.size() == ref.size(), "si_sdr: length mismatch");
  check(!ref.empty(), "si_sdr: empty signals");
  double dot = 0, ref_sq = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    dot += double(est[i]) * double(ref[i]);
    ref_sq += double(ref[i]) * double(ref[i]);
  }
  check(ref_sq > 0, "si_sdr: reference is silent");
  const double alpha = dot / ref_sq;
  double sig = 0, err = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double s = alpha * double(ref[i]);
    const double e = double(est[i]) - s;
    sig += s * s;
    err += e * e;
  }
  if (err == 0 || sig / err >= 1e10) return 100.0;
  if (sig == 0 || sig / err <= 1e-10) return -100.0;
  const double v = 10.0 * std::log10(sig / err);
  return std::min(100.0, std::max(-100.0, v));
}

// Mean over active frames (length 256, hop 128) of the per-frame SNR in dB,
// clipped to [-10, 35]. A frame is active when its reference energy is
// within 40 dB of the loudest frame; signals shorter than one frame or with
// no active frame are errors.
template <typename Real>
double ssnr(const std::vector<Real>& est, const std::vector<Real>& ref, int frame = 256,
            int hop = 128) {
  check(est.size() == ref.size(), "ssnr: length mismatch");
  check(frame > 0 && hop > 0, "ssnr: frame and hop must be positive");
  check(ref.size() >= size_t(frame), "ssnr: signal shorter than one frame");

  std::vector<double> energy, dist;
  double peak = 0;
  for (size_t t0 = 0; t0 + size_t(frame) <= ref.size(); t0 += size_t(hop)) {
    double e = 0, d = 0;
    for (int i = 0; i < frame; ++i) {
      const double r = double(ref[t0 + size_t(i)]);
      const double diff = double(est[t0 + size_t(i)]) - r;
      e += r * r;
      d += diff * diff;
    }
    energy.push_back(e);
    dist.push_back(d);
    peak = std::max(peak, e);
  }
  check(peak > 0, "ssnr: no active frames");

  const double floor_e = peak * 1e-4;  // 40 dB below the loudest frame
  double acc = 0;
  int64_t active = 0;
  for (size_t t = 0; t < energy.size(); ++t) {
    if (energy[t] < floor_e) continue;
    double snr;
    if (dist[t] == 0)
      snr = 35.0;
    else
      snr = std::min(35.0, std::max(-10.0, 10.0 * std::log10(energy[t] / dist[t])));
    acc += snr;
    ++active;
  }
  check(active > 0, "ssnr: no active frames");
  return acc / double(active);
}

}  // namespace zipenh
