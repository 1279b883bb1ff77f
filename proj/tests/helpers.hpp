// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "zipenh/common.hpp"
#include "zipenh/tensor.hpp"

namespace test_helpers {

using zipenh::Graph;
using zipenh::GraphScope;
using zipenh::Rng;
using zipenh::Tensor;

inline void fill_uniform(Tensor<double>& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
}

// Central finite differences (h = 1e-5, 64-bit) against the recorded-tape
// gradients of a scalar loss. Returns the max relative error over up to
// `coords_per_leaf` coordinates per leaf; coordinates where both analytic and
// numeric gradients are ~0 are skipped (|analytic| <= 1e-8 gate).
//
// `atol` skips coordinates whose absolute disagreement is below it. Deep
// compositions need this: central differences carry roundoff of order
// eps * |loss| / h, which turns meaninglessly small absolute errors into
// large relative ones wherever the true gradient sits near that floor. A
// systematically wrong backward formula produces absolute errors at the
// scale of the gradients themselves, far above any sensible atol.
inline double gradcheck(std::vector<Tensor<double>> leaves,
                        const std::function<Tensor<double>()>& loss_fn,
                        double h = 1e-5, int64_t coords_per_leaf = 64,
                        uint64_t seed = 1234, double atol = 0.0) {
  for (auto& t : leaves) t.zero_grad();
  Graph<double> g;
  {
    GraphScope<double> scope(&g);
    auto loss = loss_fn();
    zipenh::backward(loss, g);
  }
  Rng rng(seed);
  double max_rel = 0;
  for (auto& leaf : leaves) {
    auto& data = leaf.data();
    const auto& grad = leaf.grad();
    const int64_t n = leaf.numel();
    const int64_t m = std::min(n, coords_per_leaf);
    for (int64_t j = 0; j < m; ++j) {
      const int64_t i = (n <= coords_per_leaf) ? j : int64_t(rng.uniform_int(uint64_t(n)));
      const double keep = data[size_t(i)];
      data[size_t(i)] = keep + h;
      const double lp = loss_fn().item();
      data[size_t(i)] = keep - h;
      const double lm = loss_fn().item();
      data[size_t(i)] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double an = grad[size_t(i)];
      if (std::abs(an) <= 1e-8 && std::abs(fd) <= 1e-6) continue;
      if (std::abs(fd - an) <= atol) continue;
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace test_helpers
