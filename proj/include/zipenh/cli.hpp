#pragma once

// Command-line surface: argument parsing and the four subcommands (train,
// enhance, profile, eval) as in-process functions returning exit codes.
// Logging goes to stderr via ZIPENH_LOG; machine-readable output goes to the
// stream handed in (stdout from the binary) or to --out files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "zipenh/checkpoint.hpp"
#include "zipenh/config.hpp"
#include "zipenh/metrics.hpp"
#include "zipenh/model.hpp"
#include "zipenh/profiler.hpp"
#include "zipenh/trainer.hpp"
#include "zipenh/wav.hpp"

namespace zipenh {

struct CliOptions {
  std::string command;
  std::vector<std::string> positional;
  std::map<std::string, std::string> flags;            // --name value
  std::vector<std::pair<std::string, std::string>> sets;  // repeated --set k=v

  bool has(const std::string& name) const { return flags.count(name) != 0; }
  std::string get(const std::string& name, const std::string& fallback = "") const {
    auto it = flags.find(name);
    return it == flags.end() ? fallback : it->second;
  }
};

inline const std::set<std::string>& value_flags() {
  static const std::set<std::string> f = {
      "--config", "--preset", "--seed",  "--threads",  "--out",
      "--steps",  "--checkpoint-dir",    "--checkpoint-every",
      "--resume", "--duration",          "--batch-size"};
  return f;
}

inline const std::set<std::string>& bool_flags() {
  static const std::set<std::string> f = {"--f64-checkpoint", "--all-presets", "--help"};
  return f;
}

inline CliOptions parse_cli(const std::vector<std::string>& args) {
  CliOptions opts;
  size_t i = 0;
  if (i < args.size() && !args[i].empty() && args[i][0] != '-') opts.command = args[i++];
  for (; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0) {
      opts.positional.push_back(a);
      continue;
    }
    if (a == "--set") {
      check(i + 1 < args.size(), "cli: --set needs KEY=VALUE");
      const std::string kv = args[++i];
      const size_t eq = kv.find('=');
      check(eq != std::string::npos && eq > 0, "cli: --set needs KEY=VALUE, got '" + kv + "'");
      opts.sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    } else if (value_flags().count(a)) {
      check(i + 1 < args.size(), "cli: " + a + " needs a value");
      opts.flags[a] = args[++i];
    } else if (bool_flags().count(a)) {
      opts.flags[a] = "1";
    } else {
      check(false, "cli: unknown flag '" + a + "'");
    }
  }
  return opts;
}

// Assembles the effective configuration: defaults, then --config file, then
// --preset, then --set pairs, then the shorthand flags. Later layers win.
inline RunConfig build_run_config(const CliOptions& opts, const std::string& base_text = "") {
  RunConfig cfg;
  if (!base_text.empty()) parse_config_text(cfg, base_text);
  if (opts.has("--config")) load_config_file(cfg, opts.get("--config"));
  if (opts.has("--preset")) apply_preset(cfg, opts.get("--preset"));
  for (const auto& [k, v] : opts.sets) set_config_key(cfg, k, v);
  if (opts.has("--seed")) set_config_key(cfg, "train.seed", opts.get("--seed"));
  if (opts.has("--threads")) set_config_key(cfg, "train.threads", opts.get("--threads"));
  if (opts.has("--steps")) set_config_key(cfg, "train.steps", opts.get("--steps"));
  if (opts.has("--batch-size")) set_config_key(cfg, "train.batch_size", opts.get("--batch-size"));
  if (opts.has("--checkpoint-dir"))
    set_config_key(cfg, "train.checkpoint_dir", opts.get("--checkpoint-dir"));
  if (opts.has("--checkpoint-every"))
    set_config_key(cfg, "train.checkpoint_every", opts.get("--checkpoint-every"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline int cmd_train(const CliOptions& opts) {
  std::string base_text;
  const std::string resume = opts.get("--resume");
  if (!resume.empty()) base_text = read_checkpoint(resume).config_text;
  const RunConfig cfg = build_run_config(opts, base_text);

  thread_count() = 1;  // training is always serial and bit-reproducible
  zlog(LogLevel::info) << "train: preset " << cfg.preset << ", " << cfg.steps
                       << " steps, seed " << cfg.seed;
  zlog(LogLevel::debug) << config_to_text(cfg);

  const TrainResult result = train_loop<double>(cfg, resume, opts.has("--f64-checkpoint"));

  const std::string out_path = opts.get("--out", "metrics.csv");
  {
    std::ofstream out(out_path, std::ios::trunc);
    check(bool(out), "train: cannot write metrics to '" + out_path + "'");
    out << result.csv;
  }
  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    zlog(LogLevel::info) << "train: finished at step " << last.step << ", loss "
                         << last.loss_total << ", train si-sdr " << last.sisdr_train;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// enhance
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> wav_names(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace detail

inline int cmd_enhance(const CliOptions& opts) {
  check(opts.positional.size() == 2,
        "enhance: expected <checkpoint> <input wav or directory> (plus --out PATH)");
  const std::string ckpt_path = opts.positional[0];
  const std::string input = opts.positional[1];
  const std::string out = opts.get("--out");
  check(!out.empty(), "enhance: --out PATH is required");

  const auto data = read_checkpoint(ckpt_path);
  RunConfig cfg;
  parse_config_text(cfg, data.config_text);
  if (opts.has("--threads")) cfg.threads = int(detail::parse_int("threads", opts.get("--threads")));
  thread_count() = cfg.threads;

  Rng rng(cfg.seed);
  ZipEnhancer<double> model(rng, cfg.model, cfg.stft);
  ParamList<double> params;
  model.collect(params);
  apply_checkpoint(data, params);
  zlog(LogLevel::info) << "enhance: model step " << data.global_step << " from " << ckpt_path;

  std::vector<std::pair<std::string, std::string>> jobs;  // input path -> output path
  if (std::filesystem::is_directory(input)) {
    check(std::filesystem::is_directory(out),
          "enhance: --out must name an existing directory when the input is a directory");
    const auto names = detail::wav_names(input);
    check(!names.empty(), "enhance: no .wav files in '" + input + "'");
    for (const auto& n : names) jobs.emplace_back(input + "/" + n, out + "/" + n);
  } else {
    jobs.emplace_back(input, out);
  }

  for (const auto& [src, dst] : jobs) {
    const auto noisy = read_wav<double>(src);
    check(!noisy.samples.empty(), "enhance: '" + src + "' holds no samples");
    const auto enhanced = enhance(model, noisy);
    write_wav(dst, enhanced);
    zlog(LogLevel::debug) << "enhance: " << src << " -> " << dst << " (" << noisy.samples.size()
                          << " samples)";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

inline int cmd_profile(const CliOptions& opts, std::ostream& out_stream) {
  const double duration = opts.has("--duration")
                              ? detail::parse_real("duration", opts.get("--duration"))
                              : 1.0;
  std::vector<std::string> names;
  if (opts.has("--all-presets")) {
    names = {"S", "S2", "S3", "S4", "S5", "S6", "S7", "S8", "M"};
  } else if (opts.has("--preset") || opts.has("--config") || !opts.sets.empty()) {
    names = {"-"};
  } else {
    names = {"S"};
  }

  std::vector<CostReport> reports;
  for (const auto& name : names) {
    CliOptions one = opts;
    one.flags.erase("--all-presets");
    if (name != "-") one.flags["--preset"] = name;
    const RunConfig cfg = build_run_config(one);
    reports.push_back(profile_model(cfg.model, cfg.stft, duration, cfg.sample_rate,
                                    name != "-" ? name : cfg.preset));
  }

  out_stream << cost_table(reports);
  for (const auto& rep : reports) zlog(LogLevel::debug) << cost_breakdown_csv(rep);
  if (opts.has("--out")) {
    const std::string path = opts.get("--out");
    std::ofstream f(path, std::ios::trunc);
    check(bool(f), "profile: cannot write '" + path + "'");
    f << cost_csv(reports);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline int cmd_eval(const CliOptions& opts, std::ostream& out_stream) {
  check(opts.positional.size() == 2, "eval: expected <reference dir> <estimate dir>");
  const std::string ref_dir = opts.positional[0];
  const std::string est_dir = opts.positional[1];
  check(std::filesystem::is_directory(ref_dir), "eval: '" + ref_dir + "' is not a directory");
  check(std::filesystem::is_directory(est_dir), "eval: '" + est_dir + "' is not a directory");

  const auto ref_names = detail::wav_names(ref_dir);
  const auto est_names = detail::wav_names(est_dir);
  check(!ref_names.empty(), "eval: no .wav files in '" + ref_dir + "'");
  for (const auto& n : ref_names)
    check(std::find(est_names.begin(), est_names.end(), n) != est_names.end(),
          "eval: no estimate for '" + n + "'");
  for (const auto& n : est_names)
    check(std::find(ref_names.begin(), ref_names.end(), n) != ref_names.end(),
          "eval: no reference for '" + n + "'");

  std::ostringstream csv;
  csv << "file,si_sdr,ssnr\n";
  double sum_sdr = 0, sum_ssnr = 0;
  for (const auto& n : ref_names) {
    const auto ref = read_wav<double>(ref_dir + "/" + n);
    const auto est = read_wav<double>(est_dir + "/" + n);
    const double sdr = si_sdr(est.samples, ref.samples);
    const double seg = ssnr(est.samples, ref.samples);
    sum_sdr += sdr;
    sum_ssnr += seg;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g\n", n.c_str(), sdr, seg);
    csv << buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean,%.10g,%.10g\n", sum_sdr / double(ref_names.size()),
                sum_ssnr / double(ref_names.size()));
  csv << buf;

  if (opts.has("--out")) {
    const std::string path = opts.get("--out");
    std::ofstream f(path, std::ios::trunc);
    check(bool(f), "eval: cannot write '" + path + "'");
    f << csv.str();
  } else {
    out_stream << csv.str();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline const char* cli_usage() {
  return "usage: zipenh <command> [options]\n"
         "\n"
         "commands:\n"
         "  train    optimize a model on synthetic or paired data\n"
         "           [--preset NAME] [--config PATH] [--set KEY=VALUE]... [--steps N]\n"
         "           [--seed N] [--batch-size N] [--checkpoint-dir DIR]\n"
         "           [--checkpoint-every N] [--resume CKPT] [--f64-checkpoint]\n"
         "           [--out METRICS.csv]\n"
         "  enhance  run a trained model over audio\n"
         "           <checkpoint> <input.wav | input dir> --out <output.wav | existing dir>\n"
         "           [--threads N]\n"
         "  profile  report parameter and compute costs\n"
         "           [--preset NAME | --all-presets] [--duration SECONDS] [--out REPORT.csv]\n"
         "  eval     score estimates against references\n"
         "           <reference dir> <estimate dir> [--out SCORES.csv]\n"
         "\n"
         "environment: ZIPENH_LOG = error | info | debug\n";
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out_stream = std::cout) {
  try {
    const CliOptions opts = parse_cli(args);
    if (opts.command.empty() || opts.has("--help")) {
      out_stream << cli_usage();
      return opts.command.empty() && !opts.has("--help") ? 2 : 0;
    }
    if (opts.command == "train") return cmd_train(opts);
    if (opts.command == "enhance") return cmd_enhance(opts);
    if (opts.command == "profile") return cmd_profile(opts, out_stream);
    if (opts.command == "eval") return cmd_eval(opts, out_stream);
    check(false, "cli: unknown command '" + opts.command + "'");
    return 2;
  } catch (const std::exception& e) {
    zlog(LogLevel::error) << "error: " << e.what();
    return 1;
  }
}

}  // namespace zipenh
