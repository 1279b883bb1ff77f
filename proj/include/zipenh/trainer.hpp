#pragma once

// Training loop: deterministic data stream, batched forward through the
// enhancement model, composite loss, scale-aware Adam with the decaying
// schedule, per-step metrics, and periodic checkpoints. Everything is keyed
// by (run seed, global sample index), so a run is bit-reproducible and a
// resumed run continues the stream exactly where it stopped.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "zipenh/checkpoint.hpp"
#include "zipenh/config.hpp"
#include "zipenh/loss.hpp"
#include "zipenh/metrics.hpp"
#include "zipenh/model.hpp"
#include "zipenh/optim.hpp"
#include "zipenh/synth.hpp"
#include "zipenh/wav.hpp"

namespace zipenh {

inline constexpr const char* kMetricsHeader =
    "step,lr,loss_total,loss_stft,loss_mag,loss_com,loss_pha,loss_time,sisdr_train";

struct StepMetrics {
  int64_t step = 0;
  double lr = 0;
  double loss_total = 0, loss_stft = 0, loss_mag = 0, loss_com = 0, loss_pha = 0, loss_time = 0;
  double sisdr_train = 0;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  int64_t final_step = 0;
  std::string csv;  // header plus one row per executed step
};

namespace detail {

// One training example: clean/noisy segment pair at the configured length.
template <typename Real>
struct SamplePair {
  std::vector<Real> clean, noisy;
};

// Stream identifiers for the derived RNGs; arbitrary fixed tags keep the
// pair, mixing, and crop draws independent of each other.
inline constexpr uint64_t kStreamPair = 0x7061697200000000ULL;
inline constexpr uint64_t kStreamCrop = 0x63726f7000000000ULL;

// Uncropped pair for a draw key; a pure function of (seed, key, config), so
// fixed-pair runs may generate each key once and reuse the result.
template <typename Real>
SynthPair<Real> synthetic_pair(const RunConfig& cfg, int64_t key) {
  Rng pair_rng(cfg.seed, kStreamPair ^ uint64_t(key));
  const uint64_t pair_seed = pair_rng.next_u64();
  const double snr = pair_rng.uniform(cfg.snr_min, cfg.snr_max);
  const double pair_len =
      cfg.pair_seconds > 0 ? cfg.pair_seconds : cfg.segment_seconds;
  return make_synth_pair<Real>(pair_seed, snr, pair_len, cfg.sample_rate);
}

// Crop draw depends on the step index (not the pair key), so repeated visits
// to one fixed pair see different windows.
template <typename Real>
SamplePair<Real> crop_sample(const RunConfig& cfg, const SynthPair<Real>& pair, int64_t index) {
  const int64_t want = int64_t(std::llround(cfg.segment_seconds * cfg.sample_rate));
  const int64_t have = int64_t(pair.clean.samples.size());
  int64_t offset = 0;
  if (have > want) {
    Rng crop_rng(cfg.seed, kStreamCrop ^ uint64_t(index));
    offset = int64_t(crop_rng.uniform_int(uint64_t(have - want + 1)));
  }
  SamplePair<Real> out;
  out.clean.assign(pair.clean.samples.begin() + offset,
                   pair.clean.samples.begin() + offset + want);
  out.noisy.assign(pair.noisy.samples.begin() + offset,
                   pair.noisy.samples.begin() + offset + want);
  return out;
}

template <typename Real>
SamplePair<Real> synthetic_sample(const RunConfig& cfg, int64_t index,
                                  const std::vector<SynthPair<Real>>* cache = nullptr) {
  // Fixed-pair mode cycles a small seeded set; stream mode draws fresh pairs.
  const int64_t key = cfg.fixed_pairs > 0 ? index % cfg.fixed_pairs : index;
  if (cache != nullptr) return crop_sample(cfg, (*cache)[size_t(key)], index);
  const auto pair = synthetic_pair<Real>(cfg, key);
  return crop_sample(cfg, pair, index);
}

inline std::vector<std::string> list_wavs(const std::string& dir) {
  check(std::filesystem::is_directory(dir), "train: '" + dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  check(!names.empty(), "train: no .wav files in '" + dir + "'");
  return names;
}

template <typename Real>
SamplePair<Real> paired_sample(const RunConfig& cfg, const std::vector<std::string>& names,
                               int64_t index) {
  const auto& name = names[size_t(index % int64_t(names.size()))];
  const auto clean = read_wav<Real>(cfg.clean_dir + "/" + name);
  const auto noisy = read_wav<Real>(cfg.noisy_dir + "/" + name);
  check(clean.samples.size() == noisy.samples.size(),
        "train: length mismatch between clean and noisy '" + name + "'");

  const int64_t want = int64_t(std::llround(cfg.segment_seconds * cfg.sample_rate));
  const int64_t have = int64_t(clean.samples.size());
  check(have >= want, "train: '" + name + "' is shorter than one training segment");
  int64_t offset = 0;
  if (have > want) {
    Rng crop_rng(cfg.seed, kStreamCrop ^ uint64_t(index));
    offset = int64_t(crop_rng.uniform_int(uint64_t(have - want + 1)));
  }
  SamplePair<Real> out;
  out.clean.assign(clean.samples.begin() + offset, clean.samples.begin() + offset + want);
  out.noisy.assign(noisy.samples.begin() + offset, noisy.samples.begin() + offset + want);
  return out;
}

// [B, 2, T, F] input features for a batch of noisy segments.
template <typename Real>
Tensor<Real> batch_features(const std::vector<std::vector<Real>>& noisy, const RunConfig& cfg) {
  std::vector<Tensor<Real>> rows;
  rows.reserve(noisy.size());
  for (const auto& wave : noisy) {
    Waveform<Real> w{wave, cfg.sample_rate};
    auto feat = stack_input(stft(w, cfg.stft));  // [2, T, F]
    rows.push_back(reshape(feat, {1, feat.dim(0), feat.dim(1), feat.dim(2)}));
  }
  return rows.size() == 1 ? rows[0] : concat(rows, 0);
}

template <typename Real>
double mean_si_sdr_rows(const Tensor<Real>& est, const std::vector<std::vector<Real>>& ref) {
  double acc = 0;
  int64_t used = 0;
  const int64_t L = est.dim(1);
  for (size_t b = 0; b < ref.size(); ++b) {
    double ref_sq = 0;
    for (Real v : ref[b]) ref_sq += double(v) * double(v);
    if (ref_sq == 0) continue;  // silent crop carries no alignment information
    std::vector<Real> row(size_t(L), Real(0));
    for (int64_t i = 0; i < L; ++i) row[size_t(i)] = est.data()[size_t(b) * size_t(L) + size_t(i)];
    acc += si_sdr(row, ref[b]);
    ++used;
  }
  return used > 0 ? acc / double(used) : 0.0;
}

inline std::string metrics_row(const StepMetrics& m) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                static_cast<long long>(m.step), m.lr, m.loss_total, m.loss_stft, m.loss_mag,
                m.loss_com, m.loss_pha, m.loss_time, m.sisdr_train);
  return buf;
}

inline void require_checkpoint_dir(const std::string& dir) {
  check(std::filesystem::is_directory(dir),
        "train: checkpoint directory '" + dir + "' does not exist");
  // Probe writability now so a long run cannot die at its first save.
  const std::string probe = dir + "/.zipenh_probe";
  {
    std::ofstream f(probe, std::ios::trunc);
    check(bool(f), "train: checkpoint directory '" + dir + "' is not writable");
  }
  std::filesystem::remove(probe);
}

}  // namespace detail

// Runs `cfg.steps` optimization steps (continuing from `resume_path` if
// given) and returns per-step metrics. Training is always single-threaded.
template <typename Real = double>
TrainResult train_loop(const RunConfig& cfg, const std::string& resume_path = "",
                       bool f64_checkpoints = false) {
  cfg.validate();
  if (!cfg.checkpoint_dir.empty()) detail::require_checkpoint_dir(cfg.checkpoint_dir);
  std::vector<std::string> paired_names;
  if (cfg.data_source == "paired") {
    paired_names = detail::list_wavs(cfg.clean_dir);
    detail::list_wavs(cfg.noisy_dir);
  }

  Rng model_rng(cfg.seed);
  ZipEnhancer<Real> model(model_rng, cfg.model, cfg.stft);
  ParamList<Real> params;
  model.collect(params);
  ScaleAdam<Real> opt;
  opt.init(params);

  int64_t global_step = 0;
  if (!resume_path.empty()) {
    const auto data = read_checkpoint(resume_path);
    apply_checkpoint(data, params, &opt);
    global_step = data.global_step;
  }

  const std::string config_echo = config_to_text(cfg);
  const int64_t seg = int64_t(std::llround(cfg.segment_seconds * cfg.sample_rate));
  const int T = cfg.stft.frames(seg);
  const int F = cfg.stft.bins();

  // A fixed synthetic set is small and reused every cycle; generate it once.
  std::vector<SynthPair<Real>> fixed_set;
  if (cfg.data_source == "synthetic" && cfg.fixed_pairs > 0) {
    fixed_set.reserve(size_t(cfg.fixed_pairs));
    for (int64_t k = 0; k < cfg.fixed_pairs; ++k)
      fixed_set.push_back(detail::synthetic_pair<Real>(cfg, k));
  }

  TrainResult result;
  result.csv = std::string(kMetricsHeader) + "\n";

  auto save = [&](const std::string& name) {
    save_checkpoint(cfg.checkpoint_dir + "/" + name, config_echo, global_step, params, &opt,
                    f64_checkpoints);
  };

  while (global_step < cfg.steps) {
    const int64_t s = global_step + 1;
    const double lr = eden_lr(s, cfg.eden);

    std::vector<std::vector<Real>> clean_rows, noisy_rows;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int64_t index = (s - 1) * cfg.batch_size + b;
      auto sample = cfg.data_source == "paired"
                        ? detail::paired_sample<Real>(cfg, paired_names, index)
                        : detail::synthetic_sample<Real>(
                              cfg, index, fixed_set.empty() ? nullptr : &fixed_set);
      clean_rows.push_back(std::move(sample.clean));
      noisy_rows.push_back(std::move(sample.noisy));
    }
    Tensor<Real> clean({cfg.batch_size, int(seg)});
    for (int b = 0; b < cfg.batch_size; ++b)
      for (int64_t i = 0; i < seg; ++i)
        clean.data()[size_t(b) * size_t(seg) + size_t(i)] = clean_rows[size_t(b)][size_t(i)];

    StepMetrics m;
    m.step = s;
    m.lr = lr;
    {
      Graph<Real> graph;
      GraphScope<Real> scope(&graph);
      auto feat = detail::batch_features(noisy_rows, cfg);
      check(feat.dim(2) == T && feat.dim(3) == F, "train: segment does not fit the analysis grid");
      auto [est_mag_c, est_phase] = model.forward_spec(feat, s);
      auto terms = composite_loss(est_mag_c, est_phase, clean, cfg.stft, cfg.loss);

      m.loss_total = terms.total.item();
      m.loss_stft = terms.stft.item();
      m.loss_mag = terms.mag.item();
      m.loss_com = terms.com.item();
      m.loss_pha = terms.pha.item();
      m.loss_time = terms.time.item();
      if (!(std::isfinite(m.loss_total) && std::isfinite(m.loss_stft) && std::isfinite(m.loss_mag) &&
            std::isfinite(m.loss_com) && std::isfinite(m.loss_pha) && std::isfinite(m.loss_time))) {
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "train: non-finite loss at step %lld (total=%g, stft=%g, mag=%g, com=%g, "
                      "pha=%g, time=%g)",
                      static_cast<long long>(s), m.loss_total, m.loss_stft, m.loss_mag, m.loss_com,
                      m.loss_pha, m.loss_time);
        throw std::runtime_error(buf);
      }
      m.sisdr_train = detail::mean_si_sdr_rows(terms.est_wave, clean_rows);

      for (auto& p : params) p.tensor.zero_grad();
      backward(terms.total, graph);
    }
    opt.step(params, lr);
    global_step = s;

    result.metrics.push_back(m);
    result.csv += detail::metrics_row(m) + "\n";
    if (!cfg.checkpoint_dir.empty() && s % cfg.checkpoint_every == 0)
      save("ckpt_step" + std::to_string(s) + ".zenh");
  }

  if (!cfg.checkpoint_dir.empty()) save("ckpt_final.zenh");
  result.final_step = global_step;
  return result;
}

}  // namespace zipenh
