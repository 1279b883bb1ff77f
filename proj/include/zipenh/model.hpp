#pragma once

// Full enhancement model: encoder, N sampling stacks, two decoders, and the
// waveform-to-waveform entry point.

#include <string>
#include <utility>
#include <vector>

#include "zipenh/codec.hpp"
#include "zipenh/spectral.hpp"
#include "zipenh/stft.hpp"
#include "zipenh/zipblocks.hpp"

namespace zipenh {

template <typename Real>
struct ZipEnhancer {
  ModelConfig cfg;
  StftConfig stft_cfg;
  Encoder<Real> encoder;
  std::vector<DownSampleStack<Real>> stacks;
  MagnitudeDecoder<Real> mag_dec;
  PhaseDecoder<Real> phase_dec;

  ZipEnhancer() = default;
  ZipEnhancer(Rng& rng, const ModelConfig& mc, const StftConfig& sc) : cfg(mc), stft_cfg(sc) {
    cfg.validate();
    stft_cfg.validate();
    encoder = Encoder<Real>(rng, cfg.channels);
    for (int i = 0; i < cfg.n_stacks; ++i) stacks.emplace_back(rng, cfg, cfg.ratios[size_t(i)]);
    mag_dec = MagnitudeDecoder<Real>(rng, cfg.channels);
    phase_dec = PhaseDecoder<Real>(rng, cfg.channels);
  }

  // [B, 2, T, F] -> (compressed magnitude [B, T, F], phase [B, T, F])
  std::pair<Tensor<Real>, Tensor<Real>> forward_spec(const Tensor<Real>& feat,
                                                     int64_t step) const {
    auto h = encoder(feat);
    auto seq = permute(h, {0, 2, 3, 1});  // [B, T, F', C]
    for (const auto& st : stacks) seq = st.forward(seq, step);
    auto core = permute(seq, {0, 3, 1, 2});  // back to [B, C, T, F']
    return {mag_dec(core), phase_dec(core)};
  }

  void collect(ParamList<Real>& ps) const {
    encoder.collect(ps, "enc");
    for (size_t i = 0; i < stacks.size(); ++i)
      stacks[i].collect(ps, "stack" + std::to_string(i));
    mag_dec.collect(ps, "mag");
    phase_dec.collect(ps, "pha");
  }
};

// Inference: analyze, estimate, resynthesize at the input length.
template <typename Real>
Waveform<Real> enhance(const ZipEnhancer<Real>& model, const Waveform<Real>& noisy,
                       int64_t step = 1 << 20) {
  auto spec = stft(noisy, model.stft_cfg);
  auto feat = reshape(stack_input(spec), {1, 2, spec.frames, spec.bins});
  auto [mag_c, phase] = model.forward_spec(feat, step);
  Spectrum<Real> est = spec;
  for (size_t i = 0; i < est.magnitude.size(); ++i) {
    est.magnitude[i] = decompress_magnitude(mag_c.data()[i], est.config.compression_c);
    est.phase[i] = phase.data()[i];
  }
  return istft(est);
}

}  // namespace zipenh
