#pragma once

// Named parameter registry and weight initialization.
//
// Modules expose collect(list, prefix) so the optimizer, the checkpoint
// writer, and the parameter counter all walk one flat list in a stable
// order. Names are hierarchical ("enc.conv1.w") purely for diagnostics.

#include <string>
#include <vector>

#include "zipenh/common.hpp"
#include "zipenh/tensor.hpp"

namespace zipenh {

template <typename Real>
struct NamedParam {
  std::string name;
  Tensor<Real> tensor;
};

template <typename Real>
using ParamList = std::vector<NamedParam<Real>>;

template <typename Real>
int64_t param_count(const ParamList<Real>& ps) {
  int64_t n = 0;
  for (const auto& p : ps) n += p.tensor.numel();
  return n;
}

// Uniform(-bound, bound), the fan-in rule used for every weight matrix.
template <typename Real>
Tensor<Real> init_uniform(Rng& rng, Shape shape, double bound) {
  Tensor<Real> t(std::move(shape), true);
  for (auto& v : t.data()) v = Real(rng.uniform(-bound, bound));
  return t;
}

template <typename Real>
Tensor<Real> init_const(Shape shape, Real value) {
  Tensor<Real> t(std::move(shape), true);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

}  // namespace zipenh
