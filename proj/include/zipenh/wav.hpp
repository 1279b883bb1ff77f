// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "zipenh/common.hpp"

namespace zipenh {

template <typename Real>
struct Waveform {
  std::vector<Real> samples;
  int sample_rate = 16000;
};

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}
inline uint16_t read_u16(const unsigned char* p) {
  return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}
inline void put_u32(std::vector<unsigned char>& b, uint32_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 24) & 0xff);
}
inline void put_u16(std::vector<unsigned char>& b, uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back((v >> 8) & 0xff);
}

}  // namespace detail

// RIFF/WAVE, mono, PCM16 (format 1) or IEEE float32 (format 3).
// PCM16 samples are scaled by 1/32768 on read.
template <typename Real>
Waveform<Real> read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  check(bytes.size() >= 44, "read_wav: file too small for a WAV header");
  check(std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
            std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
        "read_wav: not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint32_t chunk_len = detail::read_u32(&bytes[pos + 4]);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      check(chunk_len >= 16 && pos + 8 + 16 <= bytes.size(),
            "read_wav: malformed fmt chunk");
      format = detail::read_u16(&bytes[pos + 8]);
      channels = detail::read_u16(&bytes[pos + 10]);
      sample_rate = detail::read_u32(&bytes[pos + 12]);
      bits = detail::read_u16(&bytes[pos + 22]);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data_off = pos + 8;
      data_len = std::min<size_t>(chunk_len, bytes.size() - data_off);
    }
    pos += 8 + chunk_len + (chunk_len & 1);
  }
  check(format != 0 && data_off != 0, "read_wav: missing fmt or data chunk");
  check(channels == 1, "read_wav: only mono input is supported");
  const bool pcm16 = (format == 1 && bits == 16);
  const bool f32 = (format == 3 && bits == 32);
  check(pcm16 || f32, "read_wav: unsupported encoding (need PCM16 or float32)");
  if (sample_rate != 16000)
    zlog(LogLevel::info) << "read_wav: sample rate " << sample_rate
                         << " Hz (16000 expected); no resampling applied";

  Waveform<Real> w;
  w.sample_rate = int(sample_rate);
  if (pcm16) {
    const size_t n = data_len / 2;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const int16_t v = int16_t(detail::read_u16(&bytes[data_off + 2 * i]));
      w.samples[i] = Real(v) / Real(32768);
    }
  } else {
    const size_t n = data_len / 4;
    w.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      uint32_t u = detail::read_u32(&bytes[data_off + 4 * i]);
      float v;
      std::memcpy(&v, &u, 4);
      w.samples[i] = Real(v);
    }
  }
  return w;
}

// Writes PCM16 with saturating clip to [-1, 1].
template <typename Real>
void write_wav(const std::string& path, const Waveform<Real>& w) {
  const uint32_t n = uint32_t(w.samples.size());
  std::vector<unsigned char> b;
  b.reserve(44 + 2 * n);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(b, 16);
  detail::put_u16(b, 1);  // PCM
  detail::put_u16(b, 1);  // mono
  detail::put_u32(b, uint32_t(w.sample_rate));
  detail::put_u32(b, uint32_t(w.sample_rate) * 2);  // byte rate
  detail::put_u16(b, 2);                            // block align
  detail::put_u16(b, 16);                           // bits
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(b, 2 * n);
  for (uint32_t i = 0; i < n; ++i) {
    double v = double(w.samples[i]) * 32768.0;
    if (v > 32767.0) v = 32767.0;
    if (v < -32768.0) v = -32768.0;
    detail::put_u16(b, uint16_t(int16_t(std::lround(v))));
  }
  std::ofstream f(path, std::ios::binary);
  check(bool(f), "write_wav: cannot open " + path);
  f.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
  check(bool(f), "write_wav: write failed for " + path);
}

}  // namespace zipenh
