// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <unordered_map>
#include <vector>

#include "zipenh/common.hpp"

namespace zipenh {

// Forward DFT convention: X[k] = sum_n x[n] * exp(-2*pi*i*n*k/N), no
// normalization. Inverse applies 1/N. Sizes must be >= 1; any composite or
// prime size works (prime factors combine in O(N*p) per level).

template <typename Real>
const std::vector<std::complex<Real>>& fft_twiddles(int n) {
  thread_local std::unordered_map<int, std::vector<std::complex<Real>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<Real>> tw(n);
  for (int k = 0; k < n; ++k) {
    const double a = -6.283185307179586476925286766559 * k / n;
    tw[k] = std::complex<Real>(Real(std::cos(a)), Real(std::sin(a)));
  }
  return cache.emplace(n, std::move(tw)).first->second;
}

namespace detail {

inline int smallest_factor(int n) {
  for (int p = 2; p * p <= n; ++p)
    if (n % p == 0) return p;
  return n;
}

// Iterative radix-2 with bit-reversal permutation; data size is a power of 2.
template <typename Real>
void fft_pow2(std::complex<Real>* data, int n,
              const std::vector<std::complex<Real>>& tw) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (int len = 2; len <= n; len <<= 1) {
    const int step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int k = 0; k < len / 2; ++k) {
        const auto w = tw[size_t(k) * step];
        const auto u = data[i + k];
        const auto v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
      }
    }
  }
}

// Recursive mixed-radix: n = p * m, p the smallest prime factor. `mul` maps
// local twiddle exponents onto the root-size table.
template <typename Real>
void fft_rec(const std::complex<Real>* in, std::complex<Real>* out, int n,
             int stride, int mul, const std::vector<std::complex<Real>>& tw) {
  if (n == 1) {
    out[0] = in[0];
    return;
  }
  const int p = smallest_factor(n);
  const int m = n / p;
  for (int j = 0; j < p; ++j)
    fft_rec(in + size_t(j) * stride, out + size_t(j) * m, m, stride * p,
            mul * p, tw);
  std::vector<std::complex<Real>> scratch(n);
  const int root = int(tw.size());
  for (int k = 0; k < n; ++k) {
    std::complex<Real> acc(0, 0);
    for (int j = 0; j < p; ++j) {
      const size_t e = (size_t(j) * k * mul) % root;
      acc += tw[e] * out[size_t(j) * m + (k % m)];
    }
    scratch[k] = acc;
  }
  for (int k = 0; k < n; ++k) out[k] = scratch[k];
}

}  // namespace detail

template <typename Real>
void fft(std::vector<std::complex<Real>>& data) {
  const int n = int(data.size());
  check(n >= 1, "fft: size must be >= 1");
  if (n == 1) return;
  const auto& tw = fft_twiddles<Real>(n);
  if ((n & (n - 1)) == 0) {
    detail::fft_pow2(data.data(), n, tw);
    return;
  }
  std::vector<std::complex<Real>> in(data);
  detail::fft_rec(in.data(), data.data(), n, 1, 1, tw);
}

template <typename Real>
void ifft(std::vector<std::complex<Real>>& data) {
  for (auto& v : data) v = std::conj(v);
  fft(data);
  const Real inv = Real(1) / Real(data.size());
  for (auto& v : data) v = std::conj(v) * inv;
}

// Real input -> one-sided spectrum of n/2+1 bins (n even) or (n+1)/2 bins
// (n odd).
template <typename Real>
std::vector<std::complex<Real>> rfft(const std::vector<Real>& x) {
  const int n = int(x.size());
  std::vector<std::complex<Real>> full(n);
  for (int i = 0; i < n; ++i) full[i] = std::complex<Real>(x[i], 0);
  fft(full);
  full.resize(size_t(n / 2) + 1);
  return full;
}

// One-sided spectrum -> real signal of length n, assuming Hermitian symmetry.
template <typename Real>
std::vector<Real> irfft(const std::vector<std::complex<Real>>& spec, int n) {
  check(int(spec.size()) == n / 2 + 1, "irfft: spectrum size mismatch");
  std::vector<std::complex<Real>> full(n);
  for (int k = 0; k < int(spec.size()); ++k) full[k] = spec[k];
  for (int k = int(spec.size()); k < n; ++k) full[k] = std::conj(spec[n - k]);
  ifft(full);
  std::vector<Real> out(n);
  for (int i = 0; i < n; ++i) out[i] = full[i].real();
  return out;
}

}  // namespace zipenh
