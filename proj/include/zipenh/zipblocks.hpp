#pragma once

// Dual-path sequence core: transformer-style blocks that compute one set of
// attention weights per block and reuse them across every attention consumer,
// wrapped in symmetric down/up sampling stacks over time and frequency.

#include <cmath>
#include <string>
#include <vector>

#include "zipenh/conv.hpp"
#include "zipenh/ops.hpp"
#include "zipenh/params.hpp"

namespace zipenh {

struct ModelConfig {
  int n_stacks = 4;
  std::vector<int> ratios{1, 2, 2, 1};
  int channels = 64;
  int heads = 4;
  int ffn_hidden = 192;
  int conv_kernel = 15;
  int attn_head_dim = 16;
  int pos_clip = 64;

  void validate() const {
    check(n_stacks >= 1, "ModelConfig: n_stacks must be >= 1");
    check(int(ratios.size()) == n_stacks, "ModelConfig: ratios must list one entry per stack");
    for (int r : ratios) check(r >= 1, "ModelConfig: sampling ratios must be >= 1");
    check(channels >= 1 && heads >= 1, "ModelConfig: channels and heads must be >= 1");
    check(channels % heads == 0, "ModelConfig: channels must be divisible by heads");
    check(ffn_hidden >= 1, "ModelConfig: ffn_hidden must be >= 1");
    check(conv_kernel >= 1 && conv_kernel % 2 == 1, "ModelConfig: conv_kernel must be odd");
    check(attn_head_dim >= 1, "ModelConfig: attn_head_dim must be >= 1");
    check(pos_clip >= 0, "ModelConfig: pos_clip must be >= 0");
  }
};

// -------------------------------------------------------------------------
// Fused ops private to the block structure.

// Relative-position bias lookup: out[h, i, j] = table[h, clip + clip_to(j - i)].
// Distances beyond the radius share the edge bucket, so any sequence length
// works with one fixed table.
template <typename Real>
Tensor<Real> relpos_bias_matrix(const Tensor<Real>& table, int seq_len, int clip) {
  check(table.ndim() == 2 && table.dim(1) == 2 * clip + 1,
        "relpos_bias_matrix: table must be [heads, 2*clip+1]");
  const int H = table.dim(0), S = seq_len;
  auto out = make_output<Real>({H, S, S}, table.requires_grad(), false);
  auto bucket = [clip](int d) {
    if (d < -clip) d = -clip;
    if (d > clip) d = clip;
    return d + clip;
  };
  for (int h = 0; h < H; ++h)
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j)
        out.data()[(size_t(h) * S + i) * S + j] =
            table.data()[size_t(h) * (2 * clip + 1) + bucket(j - i)];
  record_backward(out, [tp = table.ptr(), op = out.ptr(), H, S, clip, bucket]() {
    if (!tp->requires_grad) return;
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j)
          tp->grad[size_t(h) * (2 * clip + 1) + bucket(j - i)] +=
              op->grad[(size_t(h) * S + i) * S + j];
  });
  return out;
}

// bias_norm(x) = x / RMS[x - b] * exp(gamma), RMS over the trailing channel
// axis per frame. Note x itself is rescaled, not x - b.
template <typename Real>
Tensor<Real> bias_norm_op(const Tensor<Real>& x, const Tensor<Real>& b, const Tensor<Real>& gamma) {
  const int C = x.dim(x.ndim() - 1);
  check(b.ndim() == 1 && b.dim(0) == C, "bias_norm: bias length must match channels");
  check(gamma.numel() == 1, "bias_norm: gamma must be scalar");
  const int64_t frames = x.numel() / C;
  const Real scale = std::exp(gamma.data()[0]);

  auto out = make_output<Real>(
      x.shape(), x.requires_grad() || b.requires_grad() || gamma.requires_grad(), false);
  std::vector<Real> rms(size_t(frames), Real(0));
  for (int64_t f = 0; f < frames; ++f) {
    Real ss = 0;
    for (int c = 0; c < C; ++c) {
      const Real u = x.data()[size_t(f * C + c)] - b.data()[size_t(c)];
      ss += u * u;
    }
    const Real r = std::sqrt(ss / Real(C));
    check(r >= Real(1e-8), "bias_norm: channel RMS below 1e-8");
    rms[size_t(f)] = r;
    for (int c = 0; c < C; ++c)
      out.data()[size_t(f * C + c)] = x.data()[size_t(f * C + c)] / r * scale;
  }
  check_finite(out, "bias_norm");
  record_backward(out, [xp = x.ptr(), bp = b.ptr(), gp = gamma.ptr(), op = out.ptr(),
                        rms = std::move(rms), scale, frames, C]() {
    for (int64_t f = 0; f < frames; ++f) {
      const Real r = rms[size_t(f)];
      Real sxy = 0;  // sum_c gy_c * x_c
      for (int c = 0; c < C; ++c) sxy += op->grad[size_t(f * C + c)] * xp->data[size_t(f * C + c)];
      const Real k = scale * sxy / (Real(C) * r * r * r);
      for (int c = 0; c < C; ++c) {
        const Real u = xp->data[size_t(f * C + c)] - bp->data[size_t(c)];
        if (xp->requires_grad)
          xp->grad[size_t(f * C + c)] += scale / r * op->grad[size_t(f * C + c)] - k * u;
        if (bp->requires_grad) bp->grad[size_t(c)] += k * u;
      }
      if (gp->requires_grad) gp->grad[0] += scale / r * sxy;
    }
  });
  return out;
}

// -------------------------------------------------------------------------
// Sampling.

// Weighted r-frame averaging along axis 1 (time) or 2 (frequency) of a
// [B, T, F, C] feature. Softmax of the r raw weights keeps each output a
// convex combination; a short tail is padded by repeating the final frame.
template <typename Real>
Tensor<Real> downsample(const Tensor<Real>& x, int axis, int r, const Tensor<Real>& weights) {
  check(x.ndim() == 4, "downsample: expected a [B, T, F, C] feature");
  check(axis == 1 || axis == 2, "downsample: axis must be 1 (time) or 2 (frequency)");
  check(r >= 1, "downsample: ratio must be >= 1");
  if (r == 1) return x;
  check(weights.ndim() == 1 && weights.dim(0) == r, "downsample: need r weights");

  const int S = x.dim(axis);
  const int G = (S + r - 1) / r;
  auto xp = x;
  if (G * r != S) {
    auto last = slice(x, axis, S - 1, S);
    xp = concat(std::vector<Tensor<Real>>{x, repeat_interleave(last, axis, G * r - S)}, axis);
  }
  auto wrow = reshape(softmax_lastdim(weights), {1, r});
  const int B = x.dim(0), T = x.dim(1), F = x.dim(2), C = x.dim(3);
  if (axis == 1) {
    auto folded = reshape(xp, {B, G, r, F * C});
    return reshape(matmul(wrow, folded), {B, G, F, C});
  }
  auto folded = reshape(xp, {B, T, G, r, C});
  return reshape(matmul(wrow, folded), {B, T, G, C});
}

// Repeat each frame r times along the axis, then truncate to target_len.
template <typename Real>
Tensor<Real> upsample(const Tensor<Real>& x, int axis, int r, int target_len) {
  check(x.ndim() == 4, "upsample: expected a [B, T, F, C] feature");
  check(axis == 1 || axis == 2, "upsample: axis must be 1 (time) or 2 (frequency)");
  check(r >= 1, "upsample: ratio must be >= 1");
  check(int64_t(x.dim(axis)) * r >= target_len, "upsample: target length unreachable");
  auto rep = r == 1 ? x : repeat_interleave(x, axis, r);
  if (rep.dim(axis) == target_len) return rep;
  return slice(rep, axis, 0, target_len);
}

// -------------------------------------------------------------------------
// Elementary modules. Sequences are [B, S, C] row-major.

template <typename Real>
struct LinearLayer {
  Tensor<Real> w, b;

  LinearLayer() = default;
  LinearLayer(Rng& rng, int out_features, int in_features) {
    w = init_uniform<Real>(rng, {out_features, in_features},
                           1.0 / std::sqrt(double(in_features)));
    b = init_const<Real>({out_features}, Real(0));  // zero in, zero out at init
  }
  Tensor<Real> operator()(const Tensor<Real>& x) const { return linear(x, w, &b); }
  void collect(ParamList<Real>& out, const std::string& p) const {
    out.push_back({p + ".w", w});
    out.push_back({p + ".b", b});
  }
};

template <typename Real>
struct FeedForward {
  LinearLayer<Real> in, out;

  FeedForward() = default;
  FeedForward(Rng& rng, int channels, int hidden)
      : in(rng, hidden, channels), out(rng, channels, hidden) {}
  Tensor<Real> operator()(const Tensor<Real>& x) const { return out(silu(in(x))); }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    in.collect(ps, p + ".in");
    out.collect(ps, p + ".out");
  }
};

template <typename Real>
struct BiasNorm {
  Tensor<Real> b, gamma;

  BiasNorm() = default;
  // b starts away from zero: RMS[x - b] then stays positive on all-zero
  // frames, which the formula maps back to exact zero (x itself is scaled).
  BiasNorm(Rng& rng, int channels)
      : b(init_uniform<Real>(rng, {channels}, 0.1)), gamma(init_const<Real>({1}, Real(0))) {}
  Tensor<Real> operator()(const Tensor<Real>& x) const { return bias_norm_op(x, b, gamma); }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    ps.push_back({p + ".b", b});
    ps.push_back({p + ".gamma", gamma});
  }
};

// Channelwise learned interpolation O = (1 - c) * x + c * y. The raw weight
// starts at 1 (module fully on) and is clamped to [0.9, 1] for the first
// 2000 steps, then [0.2, 1].
template <typename Real>
struct Bypass {
  Tensor<Real> c;

  Bypass() = default;
  explicit Bypass(int channels) : c(init_const<Real>({channels}, Real(1))) {}
  Tensor<Real> operator()(const Tensor<Real>& x, const Tensor<Real>& y, int64_t step) const {
    check(x.shape() == y.shape(), "bypass: shape mismatch");
    auto ceff = clamp_op(c, step < 2000 ? 0.9 : 0.2, 1.0);
    return add(x, mul(ceff, sub(y, x)));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const { ps.push_back({p + ".c", c}); }
};

// [B, S, H*D] -> [B, H, S, D]
template <typename Real>
Tensor<Real> split_heads(const Tensor<Real>& x, int heads) {
  const int B = x.dim(0), S = x.dim(1), D = x.dim(2) / heads;
  return permute(reshape(x, {B, S, heads, D}), {0, 2, 1, 3});
}

// [B, H, S, D] -> [B, S, H*D]
template <typename Real>
Tensor<Real> merge_heads(const Tensor<Real>& x) {
  const int B = x.dim(0), H = x.dim(1), S = x.dim(2), D = x.dim(3);
  return reshape(permute(x, {0, 2, 1, 3}), {B, S, H * D});
}

// Per-head weighted aggregation of a [B, S, C] sequence by [B, H, S, S] rows.
template <typename Real>
Tensor<Real> apply_attention(const Tensor<Real>& aw, const Tensor<Real>& x, int heads) {
  check(x.dim(2) % heads == 0, "apply_attention: channels not divisible by heads");
  check(aw.dim(2) == x.dim(1), "apply_attention: sequence length mismatch");
  return merge_heads(matmul(aw, split_heads(x, heads)));
}

// Produces the block's single set of row-stochastic attention weights:
// softmax(Q K^T / sqrt(d) + relative-position bias), shape [B, H, S, S].
template <typename Real>
struct MultiHeadAttentionWeights {
  LinearLayer<Real> q, k;
  Tensor<Real> pos_table;
  int heads = 1, head_dim = 1, pos_clip = 0;
  mutable int64_t evaluations = 0;  // instrumentation: consumers share one computation

  MultiHeadAttentionWeights() = default;
  MultiHeadAttentionWeights(Rng& rng, const ModelConfig& cfg)
      : q(rng, cfg.heads * cfg.attn_head_dim, cfg.channels),
        k(rng, cfg.heads * cfg.attn_head_dim, cfg.channels),
        pos_table(init_const<Real>({cfg.heads, 2 * cfg.pos_clip + 1}, Real(0))),
        heads(cfg.heads),
        head_dim(cfg.attn_head_dim),
        pos_clip(cfg.pos_clip) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    ++evaluations;
    auto qh = split_heads(q(x), heads);
    auto kh = split_heads(k(x), heads);
    auto logits = mul_scalar(matmul(qh, kh, true), Real(1.0 / std::sqrt(double(head_dim))));
    logits = add(logits, relpos_bias_matrix(pos_table, x.dim(1), pos_clip));
    return softmax_lastdim(logits);
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    q.collect(ps, p + ".q");
    k.collect(ps, p + ".k");
    ps.push_back({p + ".pos", pos_table});
  }
};

// Value/output projections around externally supplied attention weights;
// no softmax of its own.
template <typename Real>
struct SelfAttention {
  LinearLayer<Real> v, o;
  int heads = 1;

  SelfAttention() = default;
  SelfAttention(Rng& rng, const ModelConfig& cfg)
      : v(rng, cfg.heads * cfg.attn_head_dim, cfg.channels),
        o(rng, cfg.channels, cfg.heads * cfg.attn_head_dim),
        heads(cfg.heads) {}
  Tensor<Real> operator()(const Tensor<Real>& x, const Tensor<Real>& aw) const {
    check(aw.dim(aw.ndim() - 1) == x.dim(1), "self_attention: sequence length mismatch");
    return o(merge_heads(matmul(aw, split_heads(v(x), heads))));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    v.collect(ps, p + ".v");
    o.collect(ps, p + ".o");
  }
};

// O = linear(A * attention(tanh(B) * C)) with the shared attention weights.
template <typename Real>
struct NonLinearAttention {
  LinearLayer<Real> a, b, c, out;
  int heads = 1;

  NonLinearAttention() = default;
  NonLinearAttention(Rng& rng, const ModelConfig& cfg)
      : a(rng, cfg.channels, cfg.channels),
        b(rng, cfg.channels, cfg.channels),
        c(rng, cfg.channels, cfg.channels),
        out(rng, cfg.channels, cfg.channels),
        heads(cfg.heads) {}
  Tensor<Real> operator()(const Tensor<Real>& x, const Tensor<Real>& aw) const {
    auto inner = mul(tanh_op(b(x)), c(x));
    return out(mul(a(x), apply_attention(aw, inner, heads)));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    a.collect(ps, p + ".a");
    b.collect(ps, p + ".b");
    c.collect(ps, p + ".c");
    out.collect(ps, p + ".out");
  }
};

// pointwise(C -> 2C) -> GLU -> depthwise(kernel k) -> PReLU -> pointwise.
template <typename Real>
struct ConvModule {
  LinearLayer<Real> pw1, pw2;
  Tensor<Real> dw_w, dw_b, alpha;
  int kernel = 1;

  ConvModule() = default;
  ConvModule(Rng& rng, const ModelConfig& cfg)
      : pw1(rng, 2 * cfg.channels, cfg.channels),
        pw2(rng, cfg.channels, cfg.channels),
        kernel(cfg.conv_kernel) {
    dw_w = init_uniform<Real>(rng, {cfg.channels, cfg.conv_kernel},
                              1.0 / std::sqrt(double(cfg.conv_kernel)));
    dw_b = init_const<Real>({cfg.channels}, Real(0));
    alpha = init_const<Real>({cfg.channels, 1}, Real(0.25));
  }
  Tensor<Real> operator()(const Tensor<Real>& x) const {
    const int C = x.dim(2);
    auto h = pw1(x);
    auto gated = mul(slice(h, 2, 0, C), sigmoid(slice(h, 2, C, 2 * C)));
    auto seq = permute(gated, {0, 2, 1});  // [B, C, S]
    seq = depthwise_conv1d(seq, dw_w, (kernel - 1) / 2, (kernel - 1) / 2, &dw_b);
    seq = prelu(seq, alpha);
    return pw2(permute(seq, {0, 2, 1}));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    pw1.collect(ps, p + ".pw1");
    ps.push_back({p + ".dw.w", dw_w});
    ps.push_back({p + ".dw.b", dw_b});
    ps.push_back({p + ".alpha", alpha});
    pw2.collect(ps, p + ".pw2");
  }
};

// -------------------------------------------------------------------------
// The block. Attention weights are computed once and consumed by NLA and
// both self-attention modules. Every sublayer is residual except the final
// BiasNorm, which feeds the closing bypass directly.
template <typename Real>
struct ZipformerBlock {
  FeedForward<Real> ffn1, ffn2, ffn3;
  MultiHeadAttentionWeights<Real> mhaw;
  NonLinearAttention<Real> nla;
  SelfAttention<Real> sa1, sa2;
  ConvModule<Real> conv1, conv2;
  BiasNorm<Real> norm;
  Bypass<Real> byp_mid, byp_out;

  ZipformerBlock() = default;
  ZipformerBlock(Rng& rng, const ModelConfig& cfg)
      : ffn1(rng, cfg.channels, cfg.ffn_hidden),
        ffn2(rng, cfg.channels, cfg.ffn_hidden),
        ffn3(rng, cfg.channels, cfg.ffn_hidden),
        mhaw(rng, cfg),
        nla(rng, cfg),
        sa1(rng, cfg),
        sa2(rng, cfg),
        conv1(rng, cfg),
        conv2(rng, cfg),
        norm(rng, cfg.channels),
        byp_mid(cfg.channels),
        byp_out(cfg.channels) {}

  Tensor<Real> forward(const Tensor<Real>& x0, int64_t step) const {
    auto x = add(x0, ffn1(x0));
    auto aw = mhaw(x);
    x = add(x, nla(x, aw));
    x = add(x, sa1(x, aw));
    x = add(x, conv1(x));
    x = add(x, ffn2(x));
    x = byp_mid(x0, x, step);
    x = add(x, sa2(x, aw));
    x = add(x, conv2(x));
    x = add(x, ffn3(x));
    x = norm(x);
    return byp_out(x0, x, step);
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    ffn1.collect(ps, p + ".ffn1");
    mhaw.collect(ps, p + ".mhaw");
    nla.collect(ps, p + ".nla");
    sa1.collect(ps, p + ".sa1");
    conv1.collect(ps, p + ".conv1");
    ffn2.collect(ps, p + ".ffn2");
    byp_mid.collect(ps, p + ".byp_mid");
    sa2.collect(ps, p + ".sa2");
    conv2.collect(ps, p + ".conv2");
    ffn3.collect(ps, p + ".ffn3");
    norm.collect(ps, p + ".norm");
    byp_out.collect(ps, p + ".byp_out");
  }
};

// Frequency block over F (batch and time folded), then time block over T
// (batch and frequency folded). Features are [B, T, F, C].
template <typename Real>
struct DualPathLayer {
  ZipformerBlock<Real> f_block, t_block;

  DualPathLayer() = default;
  DualPathLayer(Rng& rng, const ModelConfig& cfg) : f_block(rng, cfg), t_block(rng, cfg) {}

  Tensor<Real> forward(const Tensor<Real>& x, int64_t step) const {
    check(x.ndim() == 4, "dual_path: expected a [B, T, F, C] feature");
    const int B = x.dim(0), T = x.dim(1), F = x.dim(2), C = x.dim(3);
    auto xf = f_block.forward(reshape(x, {B * T, F, C}), step);
    auto xt = reshape(permute(reshape(xf, {B, T, F, C}), {0, 2, 1, 3}), {B * F, T, C});
    xt = t_block.forward(xt, step);
    return permute(reshape(xt, {B, F, T, C}), {0, 2, 1, 3});
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    f_block.collect(ps, p + ".f");
    t_block.collect(ps, p + ".t");
  }
};

// Down/up sampling around a dual-path layer with a bypass across the whole
// sampled sub-path. At ratio 1 the sampling modules do not exist at all.
template <typename Real>
struct DownSampleStack {
  int ratio = 1;
  Tensor<Real> w_time, w_freq;
  DualPathLayer<Real> dual;
  Bypass<Real> byp;

  DownSampleStack() = default;
  DownSampleStack(Rng& rng, const ModelConfig& cfg, int r)
      : ratio(r), dual(rng, cfg), byp(cfg.channels) {
    if (ratio > 1) {
      w_time = init_const<Real>({ratio}, Real(0));
      w_freq = init_const<Real>({ratio}, Real(0));
    }
  }

  Tensor<Real> forward(const Tensor<Real>& x, int64_t step) const {
    const int T = x.dim(1), F = x.dim(2);
    auto inner = x;
    if (ratio > 1) {
      inner = downsample(inner, 1, ratio, w_time);
      inner = downsample(inner, 2, ratio, w_freq);
    }
    inner = dual.forward(inner, step);
    if (ratio > 1) {
      inner = upsample(inner, 2, ratio, F);
      inner = upsample(inner, 1, ratio, T);
    }
    return byp(x, inner, step);
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    if (ratio > 1) {
      ps.push_back({p + ".w_time", w_time});
      ps.push_back({p + ".w_freq", w_freq});
    }
    dual.collect(ps, p + ".dual");
    byp.collect(ps, p + ".byp");
  }
};

}  // namespace zipenh
