#pragma once

// Run configuration: named model presets, a flat key=value config format
// with dotted sections, and a full-fidelity echo so every run can be
// reproduced from its own log or checkpoint.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "zipenh/loss.hpp"
#include "zipenh/optim.hpp"
#include "zipenh/stft.hpp"
#include "zipenh/zipblocks.hpp"

namespace zipenh {

struct RunConfig {
  std::string preset = "custom";
  ModelConfig model;
  StftConfig stft;
  LossWeights loss;
  EdenConfig eden;

  uint64_t seed = 1;
  int batch_size = 4;
  double segment_seconds = 2.0;
  int64_t steps = 1000;
  std::string checkpoint_dir;
  int64_t checkpoint_every = 500;
  int threads = 1;

  std::string data_source = "synthetic";  // "synthetic" | "paired"
  std::string clean_dir, noisy_dir;       // paired mode
  int sample_rate = 16000;                // synthetic mode
  double snr_min = -5.0, snr_max = 15.0;
  int64_t fixed_pairs = 0;    // 0 = unbounded stream; N = cycle N seeded pairs
  double pair_seconds = 0.0;  // 0 = pairs are segment-length; else full pair
                              // duration, trained on segment-length crops

  void validate() const {
    model.validate();
    stft.validate();
    loss.validate();
    eden.validate();
    check(batch_size >= 1, "config: batch_size must be at least 1");
    check(segment_seconds >= 0.2, "config: segment_seconds must be at least 0.2");
    check(steps >= 0, "config: steps must be nonnegative");
    check(checkpoint_every >= 1, "config: checkpoint_every must be at least 1");
    check(threads >= 1, "config: threads must be at least 1");
    check(data_source == "synthetic" || data_source == "paired",
          "config: data.source must be 'synthetic' or 'paired'");
    check(sample_rate >= 8000, "config: sample_rate must be at least 8000");
    check(snr_min <= snr_max && snr_min >= -5.0 && snr_max <= 15.0,
          "config: SNR range must lie inside [-5, 15]");
    check(fixed_pairs >= 0, "config: fixed_pairs must be nonnegative");
    check(pair_seconds == 0.0 || pair_seconds >= segment_seconds,
          "config: pair_seconds must be 0 or at least segment_seconds");
  }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"S",  "S2", "S3", "S4",    "S5",
                                                 "S6", "S7", "S8", "M",     "S-tiny"};
  return names;
}

// Applies a named preset. The S family and M pin (stack count, ratios,
// width, heads); hidden sizes derive from the width (feed-forward 3C,
// head dim C/heads). S-tiny is a miniature for fast tests, not a
// published configuration; it also shrinks the analysis grid.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  auto set_model = [&](int n, std::vector<int> ratios, int channels, int heads) {
    cfg.model.n_stacks = n;
    cfg.model.ratios = std::move(ratios);
    cfg.model.channels = channels;
    cfg.model.heads = heads;
    cfg.model.ffn_hidden = 3 * channels;
    cfg.model.attn_head_dim = channels / heads;
    cfg.model.conv_kernel = 15;
    cfg.model.pos_clip = 64;
  };
  if (name == "S") set_model(4, {1, 2, 2, 1}, 64, 4);
  else if (name == "S2") set_model(4, {1, 1, 1, 1}, 64, 4);
  else if (name == "S3") set_model(4, {1, 2, 4, 1}, 64, 4);
  else if (name == "S4") set_model(4, {1, 2, 4, 2}, 64, 4);
  else if (name == "S5") set_model(4, {1, 4, 4, 2}, 64, 4);
  else if (name == "S6") set_model(4, {2, 3, 4, 2}, 64, 4);
  else if (name == "S7") set_model(4, {2, 6, 8, 2}, 64, 4);
  else if (name == "S8") set_model(4, {3, 6, 8, 3}, 64, 4);
  else if (name == "M") set_model(6, {1, 2, 3, 4, 2, 1}, 128, 8);
  else if (name == "S-tiny") {
    set_model(2, {1, 2}, 16, 2);
    cfg.stft.n_fft = 64;
    cfg.stft.win_length = 64;
    cfg.stft.hop = 32;
    cfg.sample_rate = 8000;
  } else if (name != "custom") {
    check(false, "config: unknown preset '" + name + "'");
  }
  cfg.preset = name;
}

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    check(pos == v.size(), "config: bad integer for " + key + ": '" + v + "'");
    return r;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    check(false, "config: bad integer for " + key + ": '" + v + "'");
    return 0;
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    check(pos == v.size(), "config: bad number for " + key + ": '" + v + "'");
    return r;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    check(false, "config: bad number for " + key + ": '" + v + "'");
    return 0;
  }
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(int(parse_int(key, trim(item))));
  check(!out.empty(), "config: empty list for " + key);
  return out;
}

inline std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  using detail::parse_int;
  using detail::parse_int_list;
  using detail::parse_real;
  if (key == "preset") { apply_preset(cfg, value); return; }

  if (key == "model.n_stacks") cfg.model.n_stacks = int(parse_int(key, value));
  else if (key == "model.ratios") {
    cfg.model.ratios = parse_int_list(key, value);
    cfg.model.n_stacks = int(cfg.model.ratios.size());
  }
  else if (key == "model.channels") cfg.model.channels = int(parse_int(key, value));
  else if (key == "model.heads") cfg.model.heads = int(parse_int(key, value));
  else if (key == "model.ffn_hidden") cfg.model.ffn_hidden = int(parse_int(key, value));
  else if (key == "model.conv_kernel") cfg.model.conv_kernel = int(parse_int(key, value));
  else if (key == "model.attn_head_dim") cfg.model.attn_head_dim = int(parse_int(key, value));
  else if (key == "model.pos_clip") cfg.model.pos_clip = int(parse_int(key, value));

  else if (key == "stft.n_fft") cfg.stft.n_fft = int(parse_int(key, value));
  else if (key == "stft.win_length") cfg.stft.win_length = int(parse_int(key, value));
  else if (key == "stft.hop") cfg.stft.hop = int(parse_int(key, value));
  else if (key == "stft.compression") cfg.stft.compression_c = parse_real(key, value);

  else if (key == "loss.perceptual") cfg.loss.perceptual = parse_real(key, value);
  else if (key == "loss.stft") cfg.loss.stft = parse_real(key, value);
  else if (key == "loss.mag") cfg.loss.mag = parse_real(key, value);
  else if (key == "loss.com") cfg.loss.com = parse_real(key, value);
  else if (key == "loss.pha") cfg.loss.pha = parse_real(key, value);
  else if (key == "loss.time") cfg.loss.time = parse_real(key, value);

  else if (key == "eden.alpha_base") cfg.eden.alpha_base = parse_real(key, value);
  else if (key == "eden.t_warmup") cfg.eden.t_warmup = parse_int(key, value);
  else if (key == "eden.alpha_step") cfg.eden.alpha_step = parse_real(key, value);
  else if (key == "eden.alpha_epoch") cfg.eden.alpha_epoch = parse_real(key, value);
  else if (key == "eden.steps_per_epoch") cfg.eden.steps_per_epoch = parse_int(key, value);

  else if (key == "train.seed") cfg.seed = uint64_t(parse_int(key, value));
  else if (key == "train.batch_size") cfg.batch_size = int(parse_int(key, value));
  else if (key == "train.segment_seconds") cfg.segment_seconds = parse_real(key, value);
  else if (key == "train.steps") cfg.steps = parse_int(key, value);
  else if (key == "train.checkpoint_dir") cfg.checkpoint_dir = value;
  else if (key == "train.checkpoint_every") cfg.checkpoint_every = parse_int(key, value);
  else if (key == "train.threads") cfg.threads = int(parse_int(key, value));

  else if (key == "data.source") cfg.data_source = value;
  else if (key == "data.clean_dir") cfg.clean_dir = value;
  else if (key == "data.noisy_dir") cfg.noisy_dir = value;
  else if (key == "data.sample_rate") cfg.sample_rate = int(parse_int(key, value));
  else if (key == "data.snr_min") cfg.snr_min = parse_real(key, value);
  else if (key == "data.snr_max") cfg.snr_max = parse_real(key, value);
  else if (key == "data.fixed_pairs") cfg.fixed_pairs = parse_int(key, value);
  else if (key == "data.pair_seconds") cfg.pair_seconds = parse_real(key, value);

  else check(false, "config: unknown key '" + key + "'");
}

// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
inline void parse_config_text(RunConfig& cfg, const std::string& text) {
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          "config: line " + std::to_string(line_no) + " is not key = value");
    try {
      set_config_key(cfg, detail::trim(line.substr(0, eq)),
                     detail::trim(line.substr(eq + 1)));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("config: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  check(bool(in), "config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(cfg, ss.str());
}

// Full effective configuration in its own file format; re-parsing the echo
// reproduces the config exactly even when fields override the preset.
inline std::string config_to_text(const RunConfig& cfg) {
  using detail::real_text;
  std::ostringstream o;
  o << "preset = " << cfg.preset << "\n";
  o << "model.n_stacks = " << cfg.model.n_stacks << "\n";
  o << "model.ratios = ";
  for (size_t i = 0; i < cfg.model.ratios.size(); ++i)
    o << (i ? "," : "") << cfg.model.ratios[i];
  o << "\n";
  o << "model.channels = " << cfg.model.channels << "\n";
  o << "model.heads = " << cfg.model.heads << "\n";
  o << "model.ffn_hidden = " << cfg.model.ffn_hidden << "\n";
  o << "model.conv_kernel = " << cfg.model.conv_kernel << "\n";
  o << "model.attn_head_dim = " << cfg.model.attn_head_dim << "\n";
  o << "model.pos_clip = " << cfg.model.pos_clip << "\n";
  o << "stft.n_fft = " << cfg.stft.n_fft << "\n";
  o << "stft.win_length = " << cfg.stft.win_length << "\n";
  o << "stft.hop = " << cfg.stft.hop << "\n";
  o << "stft.compression = " << real_text(cfg.stft.compression_c) << "\n";
  o << "loss.perceptual = " << real_text(cfg.loss.perceptual) << "\n";
  o << "loss.stft = " << real_text(cfg.loss.stft) << "\n";
  o << "loss.mag = " << real_text(cfg.loss.mag) << "\n";
  o << "loss.com = " << real_text(cfg.loss.com) << "\n";
  o << "loss.pha = " << real_text(cfg.loss.pha) << "\n";
  o << "loss.time = " << real_text(cfg.loss.time) << "\n";
  o << "eden.alpha_base = " << real_text(cfg.eden.alpha_base) << "\n";
  o << "eden.t_warmup = " << cfg.eden.t_warmup << "\n";
  o << "eden.alpha_step = " << real_text(cfg.eden.alpha_step) << "\n";
  o << "eden.alpha_epoch = " << real_text(cfg.eden.alpha_epoch) << "\n";
  o << "eden.steps_per_epoch = " << cfg.eden.steps_per_epoch << "\n";
  o << "train.seed = " << cfg.seed << "\n";
  o << "train.batch_size = " << cfg.batch_size << "\n";
  o << "train.segment_seconds = " << real_text(cfg.segment_seconds) << "\n";
  o << "train.steps = " << cfg.steps << "\n";
  o << "train.checkpoint_dir = " << cfg.checkpoint_dir << "\n";
  o << "train.checkpoint_every = " << cfg.checkpoint_every << "\n";
  o << "train.threads = " << cfg.threads << "\n";
  o << "data.source = " << cfg.data_source << "\n";
  o << "data.clean_dir = " << cfg.clean_dir << "\n";
  o << "data.noisy_dir = " << cfg.noisy_dir << "\n";
  o << "data.sample_rate = " << cfg.sample_rate << "\n";
  o << "data.snr_min = " << real_text(cfg.snr_min) << "\n";
  o << "data.snr_max = " << real_text(cfg.snr_max) << "\n";
  o << "data.fixed_pairs = " << cfg.fixed_pairs << "\n";
  o << "data.pair_seconds = " << real_text(cfg.pair_seconds) << "\n";
  return o.str();
}

}  // namespace zipenh
