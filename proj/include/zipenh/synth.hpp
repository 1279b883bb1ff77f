#pragma once

// Seeded synthetic training pairs: a clean signal built from a few
// harmonic tones with ADSR envelopes in the speech band, plus filtered
// white noise mixed at an exact target SNR. Same seed, same bits.

#include <cmath>
#include <cstdint>
#include <vector>

#include "zipenh/common.hpp"
#include "zipenh/wav.hpp"

namespace zipenh {

template <typename Real>
struct SynthPair {
  Waveform<Real> clean, noise, noisy;  // noisy = clean + noise, exactly
  double snr_db = 0;
};

namespace detail {

// Piecewise-linear attack/decay/sustain/release gain at position u in [0,1].
inline double adsr_gain(double u, double attack, double decay, double release,
                        double sustain) {
  if (u < attack) return u / attack;
  if (u < attack + decay)
    return 1.0 + (sustain - 1.0) * (u - attack) / decay;
  if (u < 1.0 - release) return sustain;
  return sustain * (1.0 - u) / release;
}

}  // namespace detail

template <typename Real>
SynthPair<Real> make_synth_pair(uint64_t seed, double snr_db, double duration_s,
                                int sample_rate = 16000) {
  check(duration_s >= 0.2, "make_synth_pair: duration must be at least 0.2 s");
  check(snr_db >= -5.0 && snr_db <= 15.0, "make_synth_pair: SNR must lie in [-5, 15] dB");
  check(sample_rate >= 8000, "make_synth_pair: sample rate must be at least 8 kHz");

  Rng rng(seed, 0x9e3779b97f4a7c15ULL);
  const int64_t L = int64_t(std::llround(duration_s * sample_rate));
  const double two_pi = 6.283185307179586476925286766559;
  const double f_ceiling = std::min(3500.0, 0.45 * sample_rate);

  std::vector<double> clean(size_t(L), 0.0);
  const int n_tones = 2 + int(rng.uniform_int(4));  // 2..5
  for (int k = 0; k < n_tones; ++k) {
    const double f0 = rng.uniform(80.0, 700.0);
    const int n_harm = 1 + int(rng.uniform_int(4));  // 1..4
    const double attack = rng.uniform(0.02, 0.15);
    const double decay = rng.uniform(0.05, 0.2);
    const double release = rng.uniform(0.1, 0.3);
    const double sustain = rng.uniform(0.4, 0.9);
    // The first tone spans the whole clip so the clean signal never goes
    // silent; later tones start and stop inside it.
    int64_t onset = 0, span = L;
    if (k > 0) {
      onset = int64_t(rng.uniform(0.0, 0.5) * double(L));
      span = std::max<int64_t>(int64_t(0.3 * double(L)), 1);
      span = std::min(span + int64_t(rng.uniform(0.0, 0.7) * double(L)), L - onset);
    }
    for (int h = 1; h <= n_harm; ++h) {
      const double f = f0 * h;
      if (f > f_ceiling) break;
      const double amp = rng.uniform(0.5, 1.0) / h;
      const double phase0 = rng.uniform(0.0, two_pi);
      const double w = two_pi * f / sample_rate;
      for (int64_t n = 0; n < span; ++n) {
        const double u = double(n) / double(span);
        const double env = detail::adsr_gain(u, attack, decay, release, sustain);
        clean[size_t(onset + n)] += amp * env * std::sin(w * double(n) + phase0);
      }
    }
  }
  double peak = 0;
  for (double v : clean) peak = std::max(peak, std::abs(v));
  const double norm = 0.6 / std::max(peak, 1e-12);
  for (double& v : clean) v *= norm;

  // One-pole lowpassed white noise; the pole position shapes the color.
  std::vector<double> noise(size_t(L), 0.0);
  const double pole = rng.uniform(0.3, 0.9);
  double state = 0;
  for (auto& v : noise) {
    state = pole * state + (1.0 - pole) * rng.uniform(-1.0, 1.0);
    v = state;
  }

  double ce = 0, ne = 0;
  for (double v : clean) ce += v * v;
  for (double v : noise) ne += v * v;
  const double gain = std::sqrt(ce / (ne * std::pow(10.0, snr_db / 10.0)));
  for (double& v : noise) v *= gain;

  double mix_peak = 0;
  for (size_t i = 0; i < clean.size(); ++i)
    mix_peak = std::max(mix_peak, std::abs(clean[i] + noise[i]));
  if (mix_peak > 0.95) {
    const double s = 0.95 / mix_peak;  // common factor, SNR unchanged
    for (double& v : clean) v *= s;
    for (double& v : noise) v *= s;
  }

  SynthPair<Real> pair;
  pair.snr_db = snr_db;
  pair.clean.sample_rate = pair.noise.sample_rate = pair.noisy.sample_rate = sample_rate;
  pair.clean.samples.resize(size_t(L));
  pair.noise.samples.resize(size_t(L));
  pair.noisy.samples.resize(size_t(L));
  for (size_t i = 0; i < size_t(L); ++i) {
    pair.clean.samples[i] = Real(clean[i]);
    pair.noise.samples[i] = Real(noise[i]);
    pair.noisy.samples[i] = Real(clean[i]) + Real(noise[i]);
  }
  return pair;
}

}  // namespace zipenh
