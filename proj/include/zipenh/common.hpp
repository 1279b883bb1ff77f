// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

// Force-inline for register-tiled kernel panels, where call overhead is
// comparable to the panel body at small K.
#if defined(__GNUC__) || defined(__clang__)
#define ZIPENH_ALWAYS_INLINE inline __attribute__((always_inline))
#else
#define ZIPENH_ALWAYS_INLINE inline
#endif

namespace zipenh {

// Throws std::runtime_error; every reportable failure funnels through here.
inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

// Literal-message overload: no std::string construction on the success path.
inline void check(bool cond, const char* msg) {
  if (!cond) throw std::runtime_error(msg);
}

// ---------------------------------------------------------------------------
// Deterministic RNG: splitmix64 seeding + xoshiro256++ core.
// Bit-identical streams across platforms; no libc rand, no std::mt19937.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Derives an independent stream for (seed, stream_id), e.g. per-step
  // sampling that must not depend on how many draws earlier steps made.
  Rng(uint64_t seed, uint64_t stream_id) {
    uint64_t sm = seed;
    uint64_t a = splitmix64(sm);
    sm = stream_id ^ 0xd2b74407b1ce6e93ULL;
    uint64_t b = splitmix64(sm);
    sm = a ^ b;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n > 0. Multiply-shift; bias < 2^-64.
  uint64_t uniform_int(uint64_t n) {
    return uint64_t((__uint128_t(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// ---------------------------------------------------------------------------
// Logging: ZIPENH_LOG = error | info | debug (default info), to stderr.
// ---------------------------------------------------------------------------

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("ZIPENH_LOG");
    if (!env) return LogLevel::info;
    const std::string v(env);
    if (v == "error") return LogLevel::error;
    if (v == "debug") return LogLevel::debug;
    return LogLevel::info;
  }();
  return level;
}

class LogLine {
 public:
  explicit LogLine(bool enabled) : enabled_(enabled) {}
  ~LogLine() {
    if (enabled_) std::cerr << stream_.str() << '\n';
  }
  template <typename T>
  LogLine& operator<<(const T& v) {
    if (enabled_) stream_ << v;
    return *this;
  }

 private:
  bool enabled_;
  std::ostringstream stream_;
};

inline LogLine zlog(LogLevel level) {
  return LogLine(int(level) <= int(log_level()));
}

// ---------------------------------------------------------------------------
// Deterministic parallel_for: index range split into contiguous chunks, one
// chunk per thread, each index touched exactly once. Results are independent
// of scheduling because no two threads write the same output element.
// ---------------------------------------------------------------------------

inline int& thread_count() {
  static int n = 1;
  return n;
}

template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
  const int nt = std::min<int64_t>(thread_count(), n);
  if (nt <= 1) {
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(nt);
  const int64_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const int64_t begin = t * chunk, end = std::min(n, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([begin, end, &fn] {
      for (int64_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace zipenh
