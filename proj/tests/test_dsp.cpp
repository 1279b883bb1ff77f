// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <cstdio>
#include <vector>

#include "zipenh/fft.hpp"
#include "zipenh/stft.hpp"
#include "zipenh/wav.hpp"

using namespace zipenh;

namespace {

// O(n^2) DFT oracle; the fast transform is gated on agreement with this.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x) {
  const int n = int(x.size());
  std::vector<std::complex<double>> out(n);
  for (int k = 0; k < n; ++k) {
    std::complex<double> acc(0, 0);
    for (int j = 0; j < n; ++j) {
      const double a = -2.0 * M_PI * double(j) * double(k) / double(n);
      acc += x[j] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

std::string temp_path(const std::string& name) {
  return std::string("/tmp/zipenh_test_") + name;
}

}  // namespace

TEST_CASE("fft matches naive DFT oracle across sizes") {
  Rng rng(7);
  for (int n : {1, 2, 3, 4, 5, 8, 12, 16, 25, 64, 100, 128, 101, 400}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto want = naive_dft(x);
    auto got = x;
    fft(got);
    double max_err = 0;
    for (int k = 0; k < n; ++k) max_err = std::max(max_err, std::abs(got[k] - want[k]));
    INFO("n=" << n);
    CHECK(max_err < 1e-9 * std::max(1, n));
  }
}

TEST_CASE("ifft inverts fft") {
  Rng rng(11);
  for (int n : {2, 3, 60, 400}) {
    std::vector<std::complex<double>> x(n);
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto y = x;
    fft(y);
    ifft(y);
    double max_err = 0;
    for (int k = 0; k < n; ++k) max_err = std::max(max_err, std::abs(y[k] - x[k]));
    CHECK(max_err < 1e-12);
  }
}

TEST_CASE("rfft agrees with complex fft and irfft inverts it") {
  Rng rng(13);
  for (int n : {2, 64, 400}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1, 1);
    auto spec = rfft(x);
    REQUIRE(int(spec.size()) == n / 2 + 1);
    std::vector<std::complex<double>> full(n);
    for (int i = 0; i < n; ++i) full[i] = x[i];
    fft(full);
    for (int k = 0; k <= n / 2; ++k) CHECK(std::abs(spec[k] - full[k]) < 1e-10);
    auto back = irfft(spec, n);
    for (int i = 0; i < n; ++i) CHECK(std::abs(back[i] - x[i]) < 1e-12);
  }
}

TEST_CASE("wav round-trips zeros and scale") {
  const auto path = temp_path("zeros.wav");
  Waveform<double> w;
  w.sample_rate = 16000;
  w.samples.assign(16000, 0.0);
  write_wav(path, w);
  auto r = read_wav<double>(path);
  REQUIRE(r.samples.size() == w.samples.size());
  REQUIRE(r.sample_rate == 16000);
  for (double v : r.samples) REQUIRE(v == 0.0);
  std::remove(path.c_str());

  // PCM16 value 16384 decodes to exactly 0.5.
  Waveform<double> one;
  one.samples = {16384.0 / 32768.0};
  const auto p2 = temp_path("half.wav");
  write_wav(p2, one);
  auto r2 = read_wav<double>(p2);
  CHECK(r2.samples[0] == 0.5);
  std::remove(p2.c_str());
}

TEST_CASE("wav round-trip quantization error is below 1/32768") {
  Rng rng(3);
  Waveform<double> w;
  w.samples.resize(4096);
  for (auto& v : w.samples) v = rng.uniform(-0.9, 0.9);
  const auto path = temp_path("rand.wav");
  write_wav(path, w);
  auto r = read_wav<double>(path);
  REQUIRE(r.samples.size() == w.samples.size());
  double max_err = 0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(r.samples[i] - w.samples[i]));
  CHECK(max_err < std::pow(2.0, -15.0));
  std::remove(path.c_str());
}

TEST_CASE("wav rejects malformed and multi-channel input") {
  const auto path = temp_path("bad.wav");
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOTAWAVFILEATALLJUSTBYTESPADDINGPADDINGPAD";
  }
  CHECK_THROWS(read_wav<double>(path));
  {
    // Minimal stereo PCM16 header.
    Waveform<double> w;
    w.samples = {0.0, 0.0};
    write_wav(path, w);
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(22);
    const char two[2] = {2, 0};
    f.write(two, 2);
  }
  CHECK_THROWS(read_wav<double>(path));
  std::remove(path.c_str());
}

TEST_CASE("stft of DC input matches windowed-DFT oracle") {
  // Periodic Hann equals 0.5 - 0.25 e^{i 2 pi n/N} - 0.25 e^{-i 2 pi n/N}, so
  // a constant input puts sum(hann) = N/2 in bin 0, N/4 in bin 1, zero beyond.
  Waveform<double> w;
  w.samples.assign(16000, 1.0);
  StftConfig cfg;
  auto s = stft(w, cfg);
  REQUIRE(s.bins == 201);
  const int t = s.frames / 2;  // interior frame: padding plays no role
  CHECK(std::abs(s.mag(t, 0) - 200.0) < 1e-9);
  CHECK(std::abs(s.mag(t, 1) - 100.0) < 1e-9);
  for (int f = 2; f < s.bins; ++f) CHECK(std::abs(s.mag(t, f)) < 1e-9);
}

TEST_CASE("stft of zeros gives zero magnitude and zero phase") {
  Waveform<double> w;
  w.samples.assign(1600, 0.0);
  auto s = stft(w, StftConfig{});
  for (auto v : s.magnitude) REQUIRE(v == 0.0);
  for (auto v : s.phase) REQUIRE(v == 0.0);
}

TEST_CASE("stft frame and bin counts follow floor(L/hop)+1 and n_fft/2+1") {
  Waveform<double> w;
  w.samples.assign(32000, 0.0);
  auto s = stft(w, StftConfig{});
  CHECK(s.frames == 321);
  CHECK(s.bins == 201);
}

TEST_CASE("istft of zero spectrum is zero") {
  Waveform<double> w;
  w.samples.assign(8000, 0.0);
  auto s = stft(w, StftConfig{});
  auto back = istft(s);
  REQUIRE(back.samples.size() == 8000);
  for (double v : back.samples) REQUIRE(v == 0.0);
}

TEST_CASE("stft/istft round-trip is exact to 1e-6") {
  Rng rng(21);
  StftConfig cfg;
  SECTION("1 s white noise") {
    Waveform<double> w;
    w.samples.resize(16000);
    for (auto& v : w.samples) v = rng.uniform(-1, 1);
    auto back = istft(stft(w, cfg));
    double max_err = 0;
    for (size_t i = 0; i < w.samples.size(); ++i)
      max_err = std::max(max_err, std::abs(back.samples[i] - w.samples[i]));
    CHECK(max_err < 1e-6);
  }
  SECTION("440 Hz sine, 0.5 s") {
    Waveform<double> w;
    w.samples.resize(8000);
    for (size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = std::sin(2.0 * M_PI * 440.0 * double(i) / 16000.0);
    auto back = istft(stft(w, cfg));
    double max_err = 0;
    for (size_t i = 0; i < w.samples.size(); ++i)
      max_err = std::max(max_err, std::abs(back.samples[i] - w.samples[i]));
    CHECK(max_err < 1e-6);
  }
  SECTION("short and odd lengths, small config") {
    StftConfig tiny;
    tiny.n_fft = 64;
    tiny.win_length = 64;
    tiny.hop = 32;
    for (int64_t L : {401, 997, 1600, 3200}) {
      Waveform<double> w;
      w.samples.resize(size_t(L));
      for (auto& v : w.samples) v = rng.uniform(-1, 1);
      auto back = istft(stft(w, tiny));
      double max_err = 0;
      for (size_t i = 0; i < w.samples.size(); ++i)
        max_err = std::max(max_err, std::abs(back.samples[i] - w.samples[i]));
      INFO("L=" << L);
      CHECK(max_err < 1e-6);
    }
  }
}

TEST_CASE("windowed frames satisfy Parseval within 1e-6 relative") {
  Rng rng(31);
  Waveform<double> w;
  w.samples.resize(4000);
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  StftConfig cfg;
  auto s = stft(w, cfg);
  const auto win = hann_window<double>(cfg.win_length);
  const int pad = cfg.win_length / 2;
  const int t = 10;  // interior frame, no padding involved
  double frame_energy = 0;
  for (int n = 0; n < cfg.win_length; ++n) {
    const int64_t i = int64_t(t) * cfg.hop - pad + n;
    const double x = win[n] * w.samples[size_t(i)];
    frame_energy += x * x;
  }
  // One-sided convention: double all bins except DC and Nyquist.
  double spec_energy = 0;
  for (int f = 0; f < s.bins; ++f) {
    const double m2 = double(s.mag(t, f)) * double(s.mag(t, f));
    spec_energy += (f == 0 || f == s.bins - 1) ? m2 : 2.0 * m2;
  }
  spec_energy /= double(cfg.n_fft);
  CHECK(std::abs(spec_energy - frame_energy) < 1e-6 * frame_energy);
}

TEST_CASE("phase stays in the principal branch") {
  Rng rng(41);
  Waveform<double> w;
  w.samples.resize(6400);
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  auto s = stft(w, StftConfig{});
  for (auto p : s.phase) {
    REQUIRE(p > -M_PI);
    REQUIRE(p <= M_PI);
  }
}

TEST_CASE("magnitude compression and decompression") {
  CHECK(compress_magnitude(1.0, 0.3) == 1.0);
  const double c = 0.3;
  const double m4 = compress_magnitude(4.0, c);
  CHECK(std::abs(m4 - 1.5157165665103982) < 1e-12);
  CHECK(std::abs(decompress_magnitude(m4, c) - 4.0) < 1e-9);
  CHECK(decompress_magnitude(-0.2, c) == 0.0);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double m = rng.uniform(0, 50);
    const double back = decompress_magnitude(compress_magnitude(m, c), c);
    REQUIRE(std::abs(back - m) <= 1e-9 * std::max(1.0, m));
  }
}

TEST_CASE("stft config validation rejects bad settings") {
  Waveform<double> w;
  w.samples.assign(800, 0.1);
  StftConfig bad;
  bad.hop = 500;  // hop > win_length
  CHECK_THROWS(stft(w, bad));
  StftConfig bad2;
  bad2.win_length = 500;  // win_length > n_fft
  CHECK_THROWS(stft(w, bad2));
  StftConfig bad3;
  bad3.compression_c = 0.0;
  CHECK_THROWS(stft(w, bad3));
}

TEST_CASE("single-precision round-trip stays accurate") {
  Rng rng(51);
  Waveform<float> w;
  w.samples.resize(16000);
  for (auto& v : w.samples) v = float(rng.uniform(-1, 1));
  auto back = istft(stft(w, StftConfig{}));
  double max_err = 0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(double(back.samples[i]) - double(w.samples[i])));
  CHECK(max_err < 1e-3);
}

#include "helpers.hpp"
#include "zipenh/spectral.hpp"

using test_helpers::fill_uniform;
using test_helpers::gradcheck;

TEST_CASE("stack_input packs compressed magnitude and phase") {
  Waveform<double> w;
  w.samples.assign(32000, 0.0);
  auto s = stft(w, StftConfig{});
  auto x = stack_input(s);
  REQUIRE(x.shape() == Shape{2, 321, 201});
  for (auto v : x.data()) REQUIRE(v == 0.0);

  Rng rng(61);
  for (auto& v : w.samples) v = rng.uniform(-1, 1);
  auto s2 = stft(w, StftConfig{});
  auto x2 = stack_input(s2);
  const int64_t plane = 321 * 201;
  for (int64_t i = 0; i < plane; ++i) {
    REQUIRE(x2.data()[size_t(i)] >= 0.0);  // compressed magnitudes
    const double want = compress_magnitude(s2.magnitude[size_t(i)], 0.3);
    REQUIRE(std::abs(x2.data()[size_t(i)] - want) < 1e-12);
    REQUIRE(x2.data()[size_t(plane + i)] == s2.phase[size_t(i)]);
  }
}

TEST_CASE("stft_op matches the plain transform and round-trips") {
  Rng rng(62);
  StftConfig cfg;
  cfg.n_fft = 64;
  cfg.win_length = 64;
  cfg.hop = 32;
  const int B = 2, L = 500;
  Tensor<double> x({B, L});
  fill_uniform(x, rng, -1, 1);
  auto [re, im] = stft_op(x, cfg);
  REQUIRE(re.shape() == Shape{B, cfg.frames(L), cfg.bins()});

  for (int b = 0; b < B; ++b) {
    Waveform<double> w;
    w.samples.assign(x.data().begin() + b * L, x.data().begin() + (b + 1) * L);
    auto s = stft(w, cfg);
    for (int t = 0; t < s.frames; ++t)
      for (int f = 0; f < s.bins; ++f) {
        const double rr = re.data()[(size_t(b) * s.frames + t) * s.bins + f];
        const double ii = im.data()[(size_t(b) * s.frames + t) * s.bins + f];
        REQUIRE(std::abs(std::hypot(rr, ii) - s.mag(t, f)) < 1e-10);
      }
  }

  auto back = istft_op(re, im, cfg, L);
  REQUIRE(back.shape() == Shape{B, L});
  for (int64_t i = 0; i < back.numel(); ++i)
    REQUIRE(std::abs(back.data()[size_t(i)] - x.data()[size_t(i)]) < 1e-6);
}

TEST_CASE("spectral op gradients agree with finite differences") {
  Rng rng(63);
  StftConfig cfg;
  cfg.n_fft = 32;
  cfg.win_length = 32;
  cfg.hop = 16;
  const int B = 1, L = 90;
  const int T = cfg.frames(L), F = cfg.bins();

  Tensor<double> x({B, L}, true);
  fill_uniform(x, rng, -1, 1);
  Tensor<double> wre({B, T, F}), wim({B, T, F}), wy({B, L});
  fill_uniform(wre, rng, -1, 1);
  fill_uniform(wim, rng, -1, 1);
  fill_uniform(wy, rng, -1, 1);

  CHECK(gradcheck({x}, [&] {
          auto [re, im] = stft_op(x, cfg);
          return add(sum_all(mul(re, wre)), sum_all(mul(im, wim)));
        }) < 1e-4);

  Tensor<double> re({B, T, F}, true), im({B, T, F}, true);
  fill_uniform(re, rng, -1, 1);
  fill_uniform(im, rng, -1, 1);
  CHECK(gradcheck({re, im}, [&] {
          auto y = istft_op(re, im, cfg, L);
          return sum_all(mul(y, wy));
        }) < 1e-4);

  // Analysis-of-synthesis chain, the exact structure the spectral loss uses.
  CHECK(gradcheck({re, im}, [&] {
          auto y = istft_op(re, im, cfg, L);
          auto [re2, im2] = stft_op(y, cfg);
          return add(sum_all(mul(re2, wre)), sum_all(mul(im2, wim)));
        }) < 1e-4);
}
