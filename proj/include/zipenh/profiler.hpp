#pragma once

// Analytic complexity profiler: exact trainable-scalar counts and a
// declared-convention FLOP estimate per module, computed by structural
// traversal without running the model.
//
// Conventions (tagged in every report):
//   - one multiply-accumulate = 2 FLOPs; linear/conv output elements cost
//     (fan_in + 1) MACs each (the +1 is the bias accumulate)
//   - attention score and mixing matmuls: 2 * S^2 * d FLOPs per head each
//   - each pointwise op costs 1 FLOP per element; softmax 3, normalization 5
//   - reshapes, permutes, frame repetition, and sub-pixel moves are free

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "zipenh/stft.hpp"
#include "zipenh/zipblocks.hpp"

namespace zipenh {

struct CostRow {
  std::string module;
  int64_t params = 0;
  double flops = 0;
};

struct CostReport {
  std::string model_name;
  ModelConfig model;
  double duration_s = 1.0;
  int sample_rate = 16000;
  std::vector<CostRow> rows;
  int64_t total_params = 0;
  double total_flops = 0;
  std::string convention =
      "MAC=2; attention 2*S^2*d per head per product; pointwise 1/elem, "
      "softmax 3/elem, norm 5/elem; data movement free";
};

namespace costing {

inline int64_t lin_params(int64_t in, int64_t out) { return in * out + out; }
inline int64_t conv_params(int64_t cout, int64_t cin, int64_t kh, int64_t kw) {
  return cout * cin * kh * kw + cout;
}
inline int64_t dense_params(int64_t c) {
  int64_t p = 0;
  for (int i = 1; i <= 4; ++i) p += conv_params(c, i * c, 2, 3) + 3 * c;  // conv + IN + PReLU
  return p + conv_params(c, 5 * c, 1, 1);
}
inline int64_t encoder_params(int64_t c) {
  return conv_params(c, 2, 3, 3) + 3 * c + dense_params(c) + conv_params(c, c, 3, 3) + 3 * c;
}
inline int64_t trunk_params(int64_t c) {
  return dense_params(c) + conv_params(2 * c, c, 1, 3) + 3 * c;
}
inline int64_t block_params(const ModelConfig& m) {
  const int64_t c = m.channels, ffn = m.ffn_hidden;
  const int64_t attn = int64_t(m.heads) * m.attn_head_dim;
  const int64_t ffn3 = 3 * (lin_params(c, ffn) + lin_params(ffn, c));
  const int64_t mhaw = 2 * lin_params(c, attn) + int64_t(m.heads) * (2 * m.pos_clip + 1);
  const int64_t nla = 4 * lin_params(c, c);
  const int64_t sa2 = 2 * (lin_params(c, attn) + lin_params(attn, c));
  const int64_t conv2x = 2 * (lin_params(c, 2 * c) + (c * m.conv_kernel + c) + c + lin_params(c, c));
  return ffn3 + mhaw + nla + sa2 + conv2x + (c + 1) + 2 * c;
}
inline int64_t stack_core_params(const ModelConfig& m) {
  return 2 * block_params(m) + m.channels;  // block pair + outer bypass
}
inline int64_t stack_sampling_params(int ratio) {
  return ratio > 1 ? 2 * int64_t(ratio) : 0;
}

// FLOPs; n*(fan_in+1)*2 for matmul-like shapes.
inline double lin_flops(double positions, double in, double out) {
  return 2.0 * positions * out * (in + 1.0);
}
inline double conv_flops(double out_elems, double cin, double kh, double kw) {
  return 2.0 * out_elems * (cin * kh * kw + 1.0);
}
inline double dense_flops(double t, double f, double c) {
  double fl = 0;
  for (int i = 1; i <= 4; ++i)
    fl += conv_flops(t * f * c, double(i) * c, 2, 3) + 6.0 * t * f * c;  // IN 5 + PReLU 1
  return fl + conv_flops(t * f * c, 5 * c, 1, 1);
}
inline double encoder_flops(double t, double f_full, double f_half, double c) {
  double fl = conv_flops(t * f_full * c, 2, 3, 3) + 6.0 * t * f_full * c;
  fl += dense_flops(t, f_full, c);
  fl += conv_flops(t * f_half * c, c, 3, 3) + 6.0 * t * f_half * c;
  return fl;
}
inline double trunk_flops(double t, double f_half, double f_full, double c) {
  double fl = dense_flops(t, f_half, c);
  fl += conv_flops(t * f_half * 2 * c, c, 1, 3);
  fl += 6.0 * t * f_full * c;  // post-upsample IN + PReLU at full bins
  return fl;
}

// One sequence-modeling block over n_seq sequences of length s.
inline double block_flops(const ModelConfig& m, double n_seq, double s) {
  const double c = m.channels, ffn = m.ffn_hidden, heads = m.heads;
  const double attn = heads * m.attn_head_dim;
  const double pos = n_seq * s;  // positions
  double fl = 0;
  fl += 3.0 * (lin_flops(pos, c, ffn) + pos * ffn + lin_flops(pos, ffn, c));  // FFNs + SiLU
  fl += 2.0 * lin_flops(pos, c, attn);                       // attention q, k
  fl += n_seq * heads * 2.0 * s * s * m.attn_head_dim;       // score product
  fl += n_seq * heads * s * s * (1.0 + 1.0 + 3.0);           // scale, bias, softmax
  const double mix_sa = n_seq * heads * 2.0 * s * s * m.attn_head_dim;
  const double mix_nla = n_seq * heads * 2.0 * s * s * (c / heads);
  fl += 4.0 * lin_flops(pos, c, c) + 3.0 * pos * c + mix_nla;  // NLA + tanh/gate/mul
  fl += 2.0 * (lin_flops(pos, c, attn) + mix_sa + lin_flops(pos, attn, c));  // two SA
  fl += 2.0 * (lin_flops(pos, c, 2 * c) + 2.0 * pos * c +     // conv module x2: pw1 + GLU
               2.0 * pos * c * (m.conv_kernel + 1.0) + pos * c +  // depthwise + PReLU
               lin_flops(pos, c, c));                          // pw2
  fl += 5.0 * pos * c;       // closing normalization
  fl += 2.0 * 3.0 * pos * c;  // two bypass mixes
  return fl;
}

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// Dual-path block pair at the stack's interior extent, plus the outer bypass.
inline double stack_core_flops(const ModelConfig& m, int ratio, int64_t T, int64_t Fh) {
  const double c = m.channels;
  const int64_t t = ceil_div(T, ratio), f = ceil_div(Fh, ratio);
  double fl = block_flops(m, double(t), double(f));  // frequency-axis block
  fl += block_flops(m, double(f), double(t));        // time-axis block
  fl += 3.0 * double(T) * double(Fh) * c;            // outer bypass mix
  return fl;
}

// Learned-weight averaging on the way down; frame repetition back up is free.
inline double stack_sampling_flops(const ModelConfig& m, int ratio, int64_t T, int64_t Fh) {
  if (ratio <= 1) return 0.0;
  const double c = m.channels;
  const int64_t t = ceil_div(T, ratio), f = ceil_div(Fh, ratio);
  double fl = double(t) * double(Fh) * c * 2.0 * ratio;  // time averaging
  fl += double(t) * double(f) * c * 2.0 * ratio;         // frequency averaging
  fl += 2.0 * 3.0 * ratio;  // softmax over each direction's mixing weights
  return fl;
}

}  // namespace costing

// Builds the full per-module report for one configuration.
inline CostReport profile_model(const ModelConfig& model, const StftConfig& stft_cfg,
                                double duration_s, int sample_rate = 16000,
                                const std::string& name = "custom") {
  model.validate();
  stft_cfg.validate();
  check(duration_s > 0, "profile: duration must be positive");
  CostReport rep;
  rep.model_name = name;
  rep.model = model;
  rep.duration_s = duration_s;
  rep.sample_rate = sample_rate;

  const int64_t L = int64_t(std::llround(duration_s * sample_rate));
  const int64_t T = stft_cfg.frames(L);
  const int64_t F = stft_cfg.bins();
  const int64_t Fh = (F - 1) / 2 + 1;
  const double c = model.channels;

  rep.rows.push_back({"encoder", costing::encoder_params(model.channels),
                      costing::encoder_flops(double(T), double(F), double(Fh), c)});
  for (int i = 0; i < model.n_stacks; ++i) {
    const int r = model.ratios[size_t(i)];
    rep.rows.push_back({"stack" + std::to_string(i), costing::stack_core_params(model),
                        costing::stack_core_flops(model, r, T, Fh)});
    if (r > 1)
      rep.rows.push_back({"stack" + std::to_string(i) + ".sampling",
                          costing::stack_sampling_params(r),
                          costing::stack_sampling_flops(model, r, T, Fh)});
  }
  const double head = costing::conv_flops(double(T) * double(F), c, 1, 1);
  rep.rows.push_back({"magnitude_decoder",
                      costing::trunk_params(model.channels) + costing::conv_params(1, model.channels, 1, 1),
                      costing::trunk_flops(double(T), double(Fh), double(F), c) + head});
  rep.rows.push_back({"phase_decoder",
                      costing::trunk_params(model.channels) + 2 * costing::conv_params(1, model.channels, 1, 1),
                      costing::trunk_flops(double(T), double(Fh), double(F), c) + 2 * head +
                          double(T) * double(F)});  // atan2, 1/elem
  for (const auto& r : rep.rows) {
    rep.total_params += r.params;
    rep.total_flops += r.flops;
  }
  return rep;
}

inline CostReport count_params(const ModelConfig& model) {
  return profile_model(model, StftConfig{}, 1.0);
}

inline CostReport count_flops(const ModelConfig& model, double duration_s,
                              const StftConfig& stft_cfg = StftConfig{},
                              int sample_rate = 16000) {
  return profile_model(model, stft_cfg, duration_s, sample_rate);
}

namespace detail {

inline std::string ratios_text(const ModelConfig& m, char sep) {
  std::string s;
  for (size_t i = 0; i < m.ratios.size(); ++i)
    s += (i ? std::string(1, sep) : "") + std::to_string(m.ratios[i]);
  return s;
}

inline std::string fixed2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// Summary table mirroring the columns Model/N/Ratios/C/Heads/Para[M]/FLOPS[G].
inline std::string cost_table(const std::vector<CostReport>& reports) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Model", "N", "Ratios", "C", "Heads", "Para[M]", "FLOPS[G]"});
  for (const auto& r : reports)
    cells.push_back({r.model_name, std::to_string(r.model.n_stacks),
                     "{" + detail::ratios_text(r.model, ',') + "}",
                     std::to_string(r.model.channels), std::to_string(r.model.heads),
                     detail::fixed2(double(r.total_params) / 1e6),
                     detail::fixed2(r.total_flops / 1e9)});
  std::vector<size_t> width(cells[0].size(), 0);
  for (const auto& row : cells)
    for (size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  std::ostringstream o;
  for (const auto& row : cells) {
    for (size_t j = 0; j < row.size(); ++j) {
      o << row[j] << std::string(width[j] - row[j].size(), ' ');
      o << (j + 1 < row.size() ? "  " : "");
    }
    o << "\n";
  }
  if (!reports.empty()) {
    o << "# duration " << reports[0].duration_s << " s at " << reports[0].sample_rate
      << " Hz; " << reports[0].convention << "\n";
  }
  return o.str();
}

inline std::string cost_csv(const std::vector<CostReport>& reports) {
  std::ostringstream o;
  o << "Model,N,Ratios,C,Heads,Para[M],FLOPS[G],params,flops,duration_s,convention\n";
  for (const auto& r : reports) {
    o << r.model_name << ',' << r.model.n_stacks << ',' << detail::ratios_text(r.model, '-')
      << ',' << r.model.channels << ',' << r.model.heads << ','
      << detail::fixed2(double(r.total_params) / 1e6) << ','
      << detail::fixed2(r.total_flops / 1e9) << ',' << r.total_params << ','
      << detail::fixed2(r.total_flops) << ',' << r.duration_s << ",\"" << r.convention
      << "\"\n";
  }
  return o.str();
}

// Per-module breakdown for a single report.
inline std::string cost_breakdown_csv(const CostReport& r) {
  std::ostringstream o;
  o << "module,params,flops\n";
  for (const auto& row : r.rows)
    o << row.module << ',' << row.params << ',' << detail::fixed2(row.flops) << "\n";
  o << "total," << r.total_params << ',' << detail::fixed2(r.total_flops) << "\n";
  return o.str();
}

}  // namespace zipenh
