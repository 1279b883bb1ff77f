// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "zipenh/config.hpp"
#include "zipenh/metrics.hpp"
#include "zipenh/model.hpp"
#include "zipenh/profiler.hpp"

using namespace zipenh;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> tone(size_t n, double freq_per_sample, double amp = 1.0) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = amp * std::sin(2.0 * kPi * freq_per_sample * double(i));
  return v;
}

// Removes the ref component from noise exactly (to rounding), then rescales
// the residual so ||noise||^2 = ||ref||^2 / 10^(snr/10).
std::vector<double> orthogonal_noise(const std::vector<double>& ref, uint64_t seed,
                                     double snr_db) {
  Rng rng(seed);
  std::vector<double> n(ref.size());
  for (auto& v : n) v = rng.uniform(-1.0, 1.0);
  double nr = 0, rr = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    nr += n[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  for (size_t i = 0; i < ref.size(); ++i) n[i] -= nr / rr * ref[i];
  double nn = 0;
  for (double v : n) nn += v * v;
  const double gain = std::sqrt(rr / (nn * std::pow(10.0, snr_db / 10.0)));
  for (auto& v : n) v *= gain;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scale-invariant SDR
// ---------------------------------------------------------------------------

TEST_CASE("si-sdr saturates for any rescaled copy of the reference") {
  const auto ref = tone(4096, 0.013);
  REQUIRE(si_sdr(ref, ref) == 100.0);
  for (double a : {3.0, 0.1, -1.0}) {
    std::vector<double> est(ref.size());
    for (size_t i = 0; i < ref.size(); ++i) est[i] = a * ref[i];
    REQUIRE(si_sdr(est, ref) == 100.0);
  }
}

TEST_CASE("si-sdr reports the constructed ratio for orthogonal noise") {
  const auto ref = tone(8000, 0.0173);
  for (double snr : {20.0, 0.0, -7.5}) {
    const auto noise = orthogonal_noise(ref, 5 + uint64_t(snr * 10), snr);
    std::vector<double> est(ref.size());
    for (size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + noise[i];
    REQUIRE(si_sdr(est, ref) == Catch::Approx(snr).margin(0.01));
  }
}

TEST_CASE("si-sdr is invariant to estimate gain but not to offsets") {
  const auto ref = tone(4096, 0.02);
  const auto noise = orthogonal_noise(ref, 77, 12.0);
  std::vector<double> est(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + noise[i];

  const double base = si_sdr(est, ref);
  for (double a : {0.1, 2.0, -1.0}) {
    std::vector<double> scaled(est.size());
    for (size_t i = 0; i < est.size(); ++i) scaled[i] = a * est[i];
    REQUIRE(si_sdr(scaled, ref) == Catch::Approx(base).margin(1e-9));
  }

  std::vector<double> shifted(est.size());
  for (size_t i = 0; i < est.size(); ++i) shifted[i] = est[i] + 0.5;
  REQUIRE(si_sdr(shifted, ref) < base - 1.0);
}

TEST_CASE("si-sdr floors when the estimate carries no reference component") {
  const auto ref = tone(4096, 0.011);
  auto est = orthogonal_noise(ref, 3, 0.0);  // exactly orthogonal to ref
  REQUIRE(si_sdr(est, ref) == -100.0);
}

TEST_CASE("si-sdr rejects degenerate inputs") {
  const std::vector<double> a(16, 0.5), b(8, 0.5), zero(16, 0.0), empty;
  REQUIRE_THROWS_WITH(si_sdr(a, b), Catch::Matchers::ContainsSubstring("length mismatch"));
  REQUIRE_THROWS_WITH(si_sdr(empty, empty), Catch::Matchers::ContainsSubstring("empty"));
  REQUIRE_THROWS_WITH(si_sdr(a, zero), Catch::Matchers::ContainsSubstring("silent"));
}

// ---------------------------------------------------------------------------
// Segmental SNR
// ---------------------------------------------------------------------------

TEST_CASE("segmental snr is 35 for an exact match") {
  const auto ref = tone(2048, 0.031);
  REQUIRE(ssnr(ref, ref) == 35.0);
}

TEST_CASE("segmental snr averages a constructed half-and-half split") {
  // Layout in 128-sample hops: p tone hops, one silent hop, p tone hops.
  // The estimate equals the reference before the silent hop and is zero
  // afterwards. Every frame overlapping the silent hop either stays clean
  // (error zero) or is inactive (reference energy zero), so exactly p frames
  // score 35 and p frames score 0, with no partially-erroneous frames.
  const int p = 6, hop = 128;
  const size_t L = size_t(hop) * (2 * p + 1);
  std::vector<double> ref(L, 0.0), est(L, 0.0);
  const auto t = tone(L, 0.0371, 0.8);
  for (int h = 0; h < 2 * p + 1; ++h) {
    if (h == p) continue;  // silent hop
    for (int i = 0; i < hop; ++i) ref[size_t(h) * hop + size_t(i)] = t[size_t(h) * hop + size_t(i)];
  }
  for (size_t i = 0; i < size_t(p) * hop; ++i) est[i] = ref[i];  // clean prefix

  REQUIRE(ssnr(est, ref) == Catch::Approx(17.5).margin(1e-9));
}

TEST_CASE("segmental snr of a sign-flipped estimate is the true ratio, above the floor") {
  // est = -ref gives per-frame distortion 4x the energy: 10*log10(1/4),
  // about -6.02 dB, which the [-10, 35] clip leaves untouched.
  const auto ref = tone(2048, 0.0143);
  std::vector<double> est(ref.size());
  for (size_t i = 0; i < ref.size(); ++i) est[i] = -ref[i];
  REQUIRE(ssnr(est, ref) == Catch::Approx(10.0 * std::log10(0.25)).margin(1e-9));
  REQUIRE(ssnr(est, ref) > -10.0);
}

TEST_CASE("segmental snr clips at both ends of the frame range") {
  const auto ref = tone(2048, 0.0234);
  std::vector<double> est(ref.size());
  // Overwhelming noise: every frame far below -10 dB, so the mean sits at it.
  Rng rng(5);
  for (size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + rng.uniform(-40.0, 40.0);
  REQUIRE(ssnr(est, ref) == -10.0);
  // Vanishing noise: every frame far above 35 dB.
  for (size_t i = 0; i < ref.size(); ++i) est[i] = ref[i] + 1e-9;
  REQUIRE(ssnr(est, ref) == 35.0);
}

TEST_CASE("segmental snr ignores frames far below the loudest frame") {
  const size_t half = 1024;
  std::vector<double> ref = tone(2 * half, 0.0179);
  for (size_t i = half; i < 2 * half; ++i) ref[i] *= 1e-3;  // 60 dB down
  auto est = ref;
  Rng rng(6);
  for (size_t i = half + 256; i < 2 * half; ++i) est[i] = rng.uniform(-1.0, 1.0);
  REQUIRE(ssnr(est, ref) == 35.0);  // the corrupted frames are inactive
}

TEST_CASE("segmental snr rejects degenerate inputs") {
  const std::vector<double> shorty(100, 0.5), zeros(2048, 0.0);
  REQUIRE_THROWS_WITH(ssnr(shorty, shorty),
                      Catch::Matchers::ContainsSubstring("shorter than one frame"));
  REQUIRE_THROWS_WITH(ssnr(zeros, zeros),
                      Catch::Matchers::ContainsSubstring("no active frames"));
  const std::vector<double> a(2048, 0.5), b(1024, 0.5);
  REQUIRE_THROWS_WITH(ssnr(a, b), Catch::Matchers::ContainsSubstring("length mismatch"));
}

// ---------------------------------------------------------------------------
// Complexity profiler: parameters
// ---------------------------------------------------------------------------

namespace {

ModelConfig preset_model(const std::string& name) {
  RunConfig cfg;
  apply_preset(cfg, name);
  return cfg.model;
}

int64_t enumerated_params(const ModelConfig& mc) {
  Rng rng(1);
  ZipEnhancer<double> model(rng, mc, StftConfig{});
  ParamList<double> ps;
  model.collect(ps);
  return param_count(ps);
}

}  // namespace

TEST_CASE("analytic parameter counts equal runtime enumeration") {
  for (const std::string name : {"S", "S2", "S8", "S-tiny"}) {
    const auto mc = preset_model(name);
    REQUIRE(count_params(mc).total_params == enumerated_params(mc));
  }
  // An uneven custom shape exercises every formula term.
  ModelConfig odd;
  odd.n_stacks = 2;
  odd.ratios = {1, 3};
  odd.channels = 24;
  odd.heads = 3;
  odd.ffn_hidden = 50;
  odd.conv_kernel = 7;
  odd.attn_head_dim = 5;
  odd.pos_clip = 4;
  REQUIRE(count_params(odd).total_params == enumerated_params(odd));
}

TEST_CASE("analytic parameter count equals runtime enumeration for the wide preset") {
  const auto mc = preset_model("M");
  REQUIRE(count_params(mc).total_params == enumerated_params(mc));
}

TEST_CASE("base width parameter total sits in the published band") {
  const auto rep = count_params(preset_model("S"));
  REQUIRE(rep.total_params == 2042291);
  REQUIRE(rep.total_params >= 1730000);
  REQUIRE(rep.total_params <= 2350000);
  REQUIRE(std::abs(double(rep.total_params) / 2.04e6 - 1.0) < 0.15);
}

TEST_CASE("sampling-family parameter totals agree to a twentieth of a percent") {
  std::vector<int64_t> totals;
  for (const std::string name : {"S", "S2", "S3", "S4", "S5", "S6", "S7", "S8"})
    totals.push_back(count_params(preset_model(name)).total_params);
  const auto [lo, hi] = std::minmax_element(totals.begin(), totals.end());
  REQUIRE(double(*hi - *lo) / double(*lo) < 0.0005);
}

TEST_CASE("parameter counts are independent of signal duration") {
  const auto mc = preset_model("S");
  REQUIRE(count_flops(mc, 1.0).total_params == count_flops(mc, 3.7).total_params);
}

// ---------------------------------------------------------------------------
// Complexity profiler: FLOPs
// ---------------------------------------------------------------------------

TEST_CASE("compute ordering follows the sampling ratios") {
  std::vector<double> fl;
  for (const std::string name : {"S2", "S", "S3", "S4", "S5", "S6", "S7", "S8"})
    fl.push_back(count_flops(preset_model(name), 1.0).total_flops);
  for (size_t i = 1; i < fl.size(); ++i) REQUIRE(fl[i] < fl[i - 1]);
}

TEST_CASE("base sampling recipe saves the published share of compute") {
  const double s = count_flops(preset_model("S"), 1.0).total_flops;
  const double s2 = count_flops(preset_model("S2"), 1.0).total_flops;
  const double ratio = s / s2;
  REQUIRE(ratio > 0.68);
  REQUIRE(ratio < 0.88);
}

TEST_CASE("unit sampling ratio elides the sampling modules exactly") {
  const auto rep = count_flops(preset_model("S2"), 1.0);
  for (const auto& row : rep.rows)
    REQUIRE(row.module.find("sampling") == std::string::npos);

  // A mixed config carries sampling rows only for its sampled stacks.
  const auto mixed = count_flops(preset_model("S"), 1.0);
  int sampling_rows = 0;
  for (const auto& row : mixed.rows)
    if (row.module.find("sampling") != std::string::npos) ++sampling_rows;
  REQUIRE(sampling_rows == 2);  // ratios {1,2,2,1}
}

TEST_CASE("raising any single ratio never raises total compute") {
  const auto base = preset_model("S");
  for (int i = 0; i < base.n_stacks; ++i) {
    double prev = -1.0;
    for (int r : {1, 2, 3, 4, 6, 8}) {
      auto mc = base;
      mc.ratios[size_t(i)] = r;
      const double fl = count_flops(mc, 1.0).total_flops;
      if (prev >= 0.0) REQUIRE(fl < prev);
      prev = fl;
    }
  }
}

TEST_CASE("frequency blocks scale linearly and time blocks quadratically in frames") {
  const auto mc = preset_model("S");
  const double f0 = 101;  // interior bins
  // One frequency-axis block: T sequences of fixed length. Doubling T
  // exactly doubles the count (all terms integer-valued in double).
  for (double T : {64.0, 128.0}) {
    REQUIRE(costing::block_flops(mc, 2.0 * T, f0) == 2.0 * costing::block_flops(mc, T, f0));
  }
  // One time-axis block: fixed bins, sequence length T. The quadratic
  // remainder after removing the linear part scales by 4 per doubling.
  const double c1 = costing::block_flops(mc, f0, 64.0);
  const double c2 = costing::block_flops(mc, f0, 128.0);
  const double c4 = costing::block_flops(mc, f0, 256.0);
  REQUIRE(c4 - 2.0 * c2 == 4.0 * (c2 - 2.0 * c1));
  REQUIRE(c2 - 2.0 * c1 > 0.0);  // genuinely super-linear
}

TEST_CASE("total compute grows with duration and parameters do not") {
  const auto mc = preset_model("S");
  const auto one = count_flops(mc, 1.0);
  const auto two = count_flops(mc, 2.0);
  REQUIRE(two.total_flops > 1.8 * one.total_flops);
  REQUIRE(two.total_params == one.total_params);
}

// ---------------------------------------------------------------------------
// Report formats
// ---------------------------------------------------------------------------

TEST_CASE("summary table carries the family columns and conventions") {
  std::vector<CostReport> reps;
  for (const std::string name : {"S", "S2"})
    reps.push_back(profile_model(preset_model(name), StftConfig{}, 1.0, 16000, name));
  const std::string table = cost_table(reps);
  for (const std::string col : {"Model", "N", "Ratios", "C", "Heads", "Para[M]", "FLOPS[G]"})
    REQUIRE(table.find(col) != std::string::npos);
  REQUIRE(table.find("{1,2,2,1}") != std::string::npos);
  REQUIRE(table.find("{1,1,1,1}") != std::string::npos);
  REQUIRE(table.find("2.04") != std::string::npos);  // Para[M] for the base width
  REQUIRE(table.find("duration 1 s") != std::string::npos);
  REQUIRE(table.find("MAC=2") != std::string::npos);

  const std::string csv = cost_csv(reps);
  REQUIRE(csv.rfind("Model,N,Ratios,C,Heads,Para[M],FLOPS[G],params,flops,duration_s,convention\n", 0) == 0);
  REQUIRE(csv.find("S,4,1-2-2-1,64,4,2.04,") != std::string::npos);
  REQUIRE(csv.find("MAC=2") != std::string::npos);

  const std::string breakdown = cost_breakdown_csv(reps[0]);
  REQUIRE(breakdown.rfind("module,params,flops\n", 0) == 0);
  REQUIRE(breakdown.find("encoder,305856,") != std::string::npos);
  REQUIRE(breakdown.find("stack1.sampling,4,") != std::string::npos);
  REQUIRE(breakdown.find("total,2042291,") != std::string::npos);
}

TEST_CASE("profiler rejects degenerate durations") {
  REQUIRE_THROWS(count_flops(preset_model("S"), 0.0));
  REQUIRE_THROWS(count_flops(preset_model("S"), -1.0));
}
