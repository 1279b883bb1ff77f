#pragma once

// Convolutional rim around the dual-path core: an encoder that halves the
// frequency axis, and magnitude/phase decoders that restore it with
// sub-pixel upsampling. Features use the conv layout [B, C, T, F].

#include <cmath>
#include <string>
#include <vector>

#include "zipenh/conv.hpp"
#include "zipenh/ops.hpp"
#include "zipenh/params.hpp"

namespace zipenh {

template <typename Real>
struct Conv2dLayer {
  Tensor<Real> w, b;
  Conv2dSpec spec;

  Conv2dLayer() = default;
  Conv2dLayer(Rng& rng, int cout, int cin, int kh, int kw, Conv2dSpec sp) : spec(sp) {
    w = init_uniform<Real>(rng, {cout, cin, kh, kw}, 1.0 / std::sqrt(double(cin) * kh * kw));
    b = init_const<Real>({cout}, Real(0));
  }
  Tensor<Real> operator()(const Tensor<Real>& x) const { return conv2d(x, w, spec, &b); }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    ps.push_back({p + ".w", w});
    ps.push_back({p + ".b", b});
  }
};

// Per-channel, per-sample normalization over (T, F) with learnable affine.
template <typename Real>
struct InstanceNorm {
  Tensor<Real> gamma, beta;

  InstanceNorm() = default;
  explicit InstanceNorm(int channels)
      : gamma(init_const<Real>({channels}, Real(1))), beta(init_const<Real>({channels}, Real(0))) {}
  Tensor<Real> operator()(const Tensor<Real>& x) const { return instance_norm(x, gamma, beta); }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    ps.push_back({p + ".gamma", gamma});
    ps.push_back({p + ".beta", beta});
  }
};

template <typename Real>
struct ChannelPReLU {
  Tensor<Real> alpha;

  ChannelPReLU() = default;
  explicit ChannelPReLU(int channels) : alpha(init_const<Real>({channels, 1, 1}, Real(0.25))) {}
  Tensor<Real> operator()(const Tensor<Real>& x) const { return prelu(x, alpha); }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    ps.push_back({p + ".alpha", alpha});
  }
};

// Four dense-connected conv layers dilated 1, 2, 4, 8 along time. Layer i
// consumes the concatenation of the input and every earlier output
// ((i+1)*C channels), with causal time padding and symmetric frequency
// padding preserving (T, F). A final 1x1 projection folds 5C back to C.
template <typename Real>
struct DilatedDenseNet {
  std::vector<Conv2dLayer<Real>> convs;
  std::vector<InstanceNorm<Real>> norms;
  std::vector<ChannelPReLU<Real>> acts;
  Conv2dLayer<Real> proj;

  DilatedDenseNet() = default;
  DilatedDenseNet(Rng& rng, int channels) {
    for (int i = 0; i < 4; ++i) {
      const int dil = 1 << i;
      Conv2dSpec sp;
      sp.dil_h = dil;
      sp.pad_top = dil;  // kernel 2 along time, fully causal
      sp.pad_bottom = 0;
      sp.pad_left = 1;
      sp.pad_right = 1;
      convs.emplace_back(rng, channels, (i + 1) * channels, 2, 3, sp);
      norms.emplace_back(channels);
      acts.emplace_back(channels);
    }
    proj = Conv2dLayer<Real>(rng, channels, 5 * channels, 1, 1, Conv2dSpec{});
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto cat = x;
    for (size_t i = 0; i < convs.size(); ++i) {
      auto y = acts[i](norms[i](convs[i](cat)));
      cat = concat(std::vector<Tensor<Real>>{cat, y}, 1);
    }
    return proj(cat);
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    for (size_t i = 0; i < convs.size(); ++i) {
      const auto pi = p + ".l" + std::to_string(i);
      convs[i].collect(ps, pi + ".conv");
      norms[i].collect(ps, pi + ".norm");
      acts[i].collect(ps, pi + ".act");
    }
    proj.collect(ps, p + ".proj");
  }
};

// [B, 2, T, F] -> [B, C, T, F'] with F' = (F - 1) / 2 + 1.
template <typename Real>
struct Encoder {
  Conv2dLayer<Real> conv1, conv2;
  InstanceNorm<Real> norm1, norm2;
  ChannelPReLU<Real> act1, act2;
  DilatedDenseNet<Real> dense;

  Encoder() = default;
  Encoder(Rng& rng, int channels) {
    Conv2dSpec same;
    same.pad_top = same.pad_bottom = same.pad_left = same.pad_right = 1;
    conv1 = Conv2dLayer<Real>(rng, channels, 2, 3, 3, same);
    norm1 = InstanceNorm<Real>(channels);
    act1 = ChannelPReLU<Real>(channels);
    dense = DilatedDenseNet<Real>(rng, channels);
    Conv2dSpec half = same;
    half.stride_w = 2;
    conv2 = Conv2dLayer<Real>(rng, channels, channels, 3, 3, half);
    norm2 = InstanceNorm<Real>(channels);
    act2 = ChannelPReLU<Real>(channels);
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    check(x.ndim() == 4 && x.dim(1) == 2, "encode: expected a [B, 2, T, F] feature");
    check(x.dim(3) >= 3, "encode: frequency extent too small for stride-2");
    auto h = act1(norm1(conv1(x)));
    h = dense(h);
    return act2(norm2(conv2(h)));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    conv1.collect(ps, p + ".conv1");
    norm1.collect(ps, p + ".norm1");
    act1.collect(ps, p + ".act1");
    dense.collect(ps, p + ".dense");
    conv2.collect(ps, p + ".conv2");
    norm2.collect(ps, p + ".norm2");
    act2.collect(ps, p + ".act2");
  }
};

// Shared decoder trunk: densenet, then a sub-pixel conv that doubles the
// frequency extent (2F' = F + 1, trimmed by one trailing bin to F).
template <typename Real>
struct DecoderTrunk {
  DilatedDenseNet<Real> dense;
  Conv2dLayer<Real> up;
  InstanceNorm<Real> norm;
  ChannelPReLU<Real> act;

  DecoderTrunk() = default;
  DecoderTrunk(Rng& rng, int channels) : dense(rng, channels) {
    Conv2dSpec sp;
    sp.pad_left = 1;
    sp.pad_right = 1;
    up = Conv2dLayer<Real>(rng, 2 * channels, channels, 1, 3, sp);
    norm = InstanceNorm<Real>(channels);
    act = ChannelPReLU<Real>(channels);
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    const int full_bins = 2 * x.dim(3) - 1;
    auto h = sub_pixel(up(dense(x)), 2, 2);  // axis 2 of (C,H,W): the W = frequency axis
    h = slice(h, 3, 0, full_bins);
    return act(norm(h));
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    dense.collect(ps, p + ".dense");
    up.collect(ps, p + ".up");
    norm.collect(ps, p + ".norm");
    act.collect(ps, p + ".act");
  }
};

// [B, C, T, F'] -> compressed magnitude estimate [B, T, F], unbounded.
template <typename Real>
struct MagnitudeDecoder {
  DecoderTrunk<Real> trunk;
  Conv2dLayer<Real> head;

  MagnitudeDecoder() = default;
  MagnitudeDecoder(Rng& rng, int channels)
      : trunk(rng, channels), head(rng, 1, channels, 1, 1, Conv2dSpec{}) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto h = head(trunk(x));  // [B, 1, T, F]
    return reshape(h, {h.dim(0), h.dim(2), h.dim(3)});
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    trunk.collect(ps, p + ".trunk");
    head.collect(ps, p + ".head");
  }
};

// [B, C, T, F'] -> wrapped phase [B, T, F] via two parallel heads and atan2.
template <typename Real>
struct PhaseDecoder {
  DecoderTrunk<Real> trunk;
  Conv2dLayer<Real> head_r, head_i;

  PhaseDecoder() = default;
  PhaseDecoder(Rng& rng, int channels)
      : trunk(rng, channels),
        head_r(rng, 1, channels, 1, 1, Conv2dSpec{}),
        head_i(rng, 1, channels, 1, 1, Conv2dSpec{}) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    auto h = trunk(x);
    auto ph = atan2_op(head_i(h), head_r(h));
    return reshape(ph, {ph.dim(0), ph.dim(2), ph.dim(3)});
  }
  void collect(ParamList<Real>& ps, const std::string& p) const {
    trunk.collect(ps, p + ".trunk");
    head_r.collect(ps, p + ".head_r");
    head_i.collect(ps, p + ".head_i");
  }
};

}  // namespace zipenh
