#pragma once

// Checkpoint container: magic + version header, the full effective run
// configuration as text, the global step, every named parameter tensor, and
// (optionally) the optimizer moments. Payloads are little-endian; tensors
// are stored as float32 by default or float64 when full precision must
// survive a save/load/resume round trip. Files appear atomically: content is
// staged to a sibling temp file and renamed into place, so a failed save
// never leaves a partial checkpoint behind.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "zipenh/optim.hpp"
#include "zipenh/params.hpp"
#include "zipenh/tensor.hpp"

namespace zipenh {

inline constexpr char kCheckpointMagic[4] = {'Z', 'E', 'N', 'H'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct TensorBlob {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct OptimizerBlob {
  std::string name;
  std::vector<double> m, v;
  double scale_m = 0, scale_v = 0;
};

struct CheckpointData {
  uint32_t version = kCheckpointVersion;
  bool f64 = false;
  std::string config_text;
  int64_t global_step = 0;
  std::vector<TensorBlob> tensors;
  bool has_optimizer = false;
  int64_t optimizer_step_count = 0;
  std::vector<OptimizerBlob> optimizer;
};

namespace detail {

inline void put_bytes(std::string& out, const void* p, size_t n) {
  out.append(reinterpret_cast<const char*>(p), n);
}
inline void put_u32(std::string& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  put_bytes(out, b, 4);
}
inline void put_u64(std::string& out, uint64_t v) {
  put_u32(out, uint32_t(v));
  put_u32(out, uint32_t(v >> 32));
}
inline void put_real(std::string& out, double v, bool f64) {
  if (f64) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(out, u);
  } else {
    const float f = float(v);
    uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
}
inline void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out.append(s);
}

struct Cursor {
  const std::string& buf;
  size_t pos = 0;
  void need(size_t n) const {
    check(pos + n <= buf.size(), "checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | uint32_t(uint8_t(buf[pos + size_t(i)]));
    pos += 4;
    return v;
  }
  uint64_t u64() {
    const uint64_t lo = u32();
    const uint64_t hi = u32();
    return lo | (hi << 32);
  }
  double real(bool f64) {
    if (f64) {
      const uint64_t u = u64();
      double v;
      std::memcpy(&v, &u, 8);
      return v;
    }
    const uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return double(f);
  }
  std::string str() {
    const uint64_t n = u64();
    need(size_t(n));
    std::string s = buf.substr(pos, size_t(n));
    pos += size_t(n);
    return s;
  }
};

inline std::string shape_text(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace detail

// Serializes parameters (and optimizer state when given) to `path`.
template <typename Real>
void save_checkpoint(const std::string& path, const std::string& config_text,
                     int64_t global_step, const ParamList<Real>& params,
                     const ScaleAdam<Real>* opt = nullptr, bool f64 = false) {
  using detail::put_bytes;
  using detail::put_real;
  using detail::put_string;
  using detail::put_u32;
  using detail::put_u64;
  if (opt)
    check(opt->slots.size() == params.size(),
          "checkpoint: optimizer state does not match the parameter list");

  std::string out;
  put_bytes(out, kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  out.push_back(f64 ? char(1) : char(0));
  put_string(out, config_text);
  put_u64(out, uint64_t(global_step));
  put_u32(out, uint32_t(params.size()));
  for (const auto& p : params) {
    put_string(out, p.name);
    const auto& shape = p.tensor.shape();
    put_u32(out, uint32_t(shape.size()));
    for (int d : shape) put_u64(out, uint64_t(d));
    const auto& data = p.tensor.data();
    put_u64(out, data.size());
    for (Real v : data) put_real(out, double(v), f64);
  }
  out.push_back(opt ? char(1) : char(0));
  if (opt) {
    put_u64(out, uint64_t(opt->step_count));
    for (size_t k = 0; k < params.size(); ++k) {
      put_string(out, params[k].name);
      const auto& slot = opt->slots[k];
      put_u64(out, slot.m.size());
      for (Real v : slot.m) put_real(out, double(v), f64);
      for (Real v : slot.v) put_real(out, double(v), f64);
      put_real(out, slot.scale_m, true);
      put_real(out, slot.scale_v, true);
    }
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    check(bool(f), "checkpoint: cannot open '" + tmp + "' for writing");
    f.write(out.data(), std::streamsize(out.size()));
    check(bool(f), "checkpoint: write failed for '" + tmp + "'");
  }
  check(std::rename(tmp.c_str(), path.c_str()) == 0,
        "checkpoint: cannot move '" + tmp + "' into place");
}

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  detail::Cursor cur{buf};
  cur.need(5);
  check(std::memcmp(buf.data(), kCheckpointMagic, 4) == 0,
        "checkpoint: '" + path + "' is not a checkpoint file");
  cur.pos = 4;

  CheckpointData data;
  data.version = cur.u32();
  check(data.version == kCheckpointVersion,
        "checkpoint: unsupported version " + std::to_string(data.version));
  cur.need(1);
  data.f64 = buf[cur.pos++] != 0;
  data.config_text = cur.str();
  data.global_step = int64_t(cur.u64());

  const uint32_t n_tensors = cur.u32();
  data.tensors.resize(n_tensors);
  for (auto& t : data.tensors) {
    t.name = cur.str();
    const uint32_t nd = cur.u32();
    t.shape.resize(nd);
    int64_t numel = 1;
    for (auto& d : t.shape) {
      d = int(cur.u64());
      numel *= d;
    }
    const uint64_t n = cur.u64();
    check(int64_t(n) == numel, "checkpoint: corrupt extent for tensor " + t.name);
    t.data.resize(size_t(n));
    for (auto& v : t.data) v = cur.real(data.f64);
  }

  cur.need(1);
  data.has_optimizer = buf[cur.pos++] != 0;
  if (data.has_optimizer) {
    data.optimizer_step_count = int64_t(cur.u64());
    data.optimizer.resize(n_tensors);
    for (auto& o : data.optimizer) {
      o.name = cur.str();
      const uint64_t n = cur.u64();
      o.m.resize(size_t(n));
      o.v.resize(size_t(n));
      for (auto& v : o.m) v = cur.real(data.f64);
      for (auto& v : o.v) v = cur.real(data.f64);
      o.scale_m = cur.real(true);
      o.scale_v = cur.real(true);
    }
  }
  check(cur.pos == buf.size(), "checkpoint: trailing bytes after payload");
  return data;
}

// Copies stored tensors (and optimizer state when requested) into a model's
// parameter list. Every stored tensor must match a parameter by name and
// shape; the first mismatch is reported by tensor name.
template <typename Real>
void apply_checkpoint(const CheckpointData& data, const ParamList<Real>& params,
                      ScaleAdam<Real>* opt = nullptr) {
  check(data.tensors.size() == params.size(),
        "checkpoint: stores " + std::to_string(data.tensors.size()) + " tensors but the model has " +
            std::to_string(params.size()));
  for (size_t k = 0; k < params.size(); ++k) {
    const auto& blob = data.tensors[k];
    const auto& p = params[k];
    check(blob.name == p.name, "checkpoint: tensor order mismatch: file has " + blob.name +
                                   " where the model has " + p.name);
    check(blob.shape == p.tensor.shape(),
          "checkpoint: shape mismatch for " + blob.name + ": file " +
              detail::shape_text(blob.shape) + " vs model " + detail::shape_text(p.tensor.shape()));
    auto tensor = p.tensor;
    auto& dst = tensor.data();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = Real(blob.data[i]);
  }
  if (!opt) return;
  check(data.has_optimizer, "checkpoint: file carries no optimizer state");
  opt->init(params);
  opt->step_count = data.optimizer_step_count;
  for (size_t k = 0; k < params.size(); ++k) {
    const auto& blob = data.optimizer[k];
    check(blob.name == params[k].name,
          "checkpoint: optimizer state order mismatch at " + blob.name);
    check(blob.m.size() == opt->slots[k].m.size(),
          "checkpoint: optimizer extent mismatch for " + blob.name);
    for (size_t i = 0; i < blob.m.size(); ++i) {
      opt->slots[k].m[i] = Real(blob.m[i]);
      opt->slots[k].v[i] = Real(blob.v[i]);
    }
    opt->slots[k].scale_m = blob.scale_m;
    opt->slots[k].scale_v = blob.scale_v;
  }
}

}  // namespace zipenh
