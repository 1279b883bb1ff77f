// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "zipenh/common.hpp"

namespace zipenh {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

namespace detail {

// Thread-local recycler for tensor storage. Graph-scoped tensors churn large
// buffers every step; reusing them keeps pages warm and avoids the allocator
// round trip. Buffers come back with unspecified contents.
template <typename Real>
class BufferPool {
 public:
  // Smallest free buffer with capacity >= n, or a fresh allocation.
  std::vector<Real> get(size_t n) {
    size_t best = free_.size();
    for (size_t i = 0; i < free_.size(); ++i) {
      const size_t c = free_[i].capacity();
      if (c >= n && (best == free_.size() || c < free_[best].capacity())) best = i;
    }
    if (best == free_.size()) return std::vector<Real>(n);
    std::vector<Real> v = std::move(free_[best]);
    free_[best] = std::move(free_.back());
    free_.pop_back();
    bytes_ -= v.capacity() * sizeof(Real);
    v.resize(n);
    return v;
  }

  std::vector<Real> get_zeroed(size_t n) {
    std::vector<Real> v = get(n);
    std::fill(v.begin(), v.end(), Real(0));
    return v;
  }

  void put(std::vector<Real>&& v) {
    const size_t cap = v.capacity();
    if (cap < kMinElems) return;
    if (bytes_ + cap * sizeof(Real) > kMaxBytes || free_.size() >= kMaxBuffers) return;
    bytes_ += cap * sizeof(Real);
    free_.push_back(std::move(v));
  }

 private:
  static constexpr size_t kMinElems = 1024;
  static constexpr size_t kMaxBuffers = 512;
  static constexpr size_t kMaxBytes = size_t(1536) << 20;
  std::vector<std::vector<Real>> free_;
  size_t bytes_ = 0;
};

// Leaked on purpose: tensors with static storage duration may be destroyed
// after a thread_local pool object would be, so the pool must outlive them.
template <typename Real>
BufferPool<Real>& buffer_pool() {
  thread_local BufferPool<Real>* pool = new BufferPool<Real>();
  return *pool;
}

}  // namespace detail

template <typename Real>
struct TensorData {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // same size as data when requires_grad
  bool requires_grad = false;

  TensorData() = default;
  ~TensorData() {
    detail::buffer_pool<Real>().put(std::move(data));
    detail::buffer_pool<Real>().put(std::move(grad));
  }
  TensorData(const TensorData&) = delete;
  TensorData& operator=(const TensorData&) = delete;
};

// Reverse-mode tape: closures run in reverse execution order. One backward
// pass per recorded graph; a second backward on the same graph is an error.
template <typename Real>
struct Graph {
  std::vector<std::function<void()>> tape;
  bool consumed = false;
};

template <typename Real>
inline Graph<Real>*& active_graph() {
  thread_local Graph<Real>* g = nullptr;
  return g;
}

// RAII scope making `g` the recording target for ops on this thread.
template <typename Real>
class GraphScope {
 public:
  explicit GraphScope(Graph<Real>* g) : prev_(active_graph<Real>()) {
    active_graph<Real>() = g;
  }
  ~GraphScope() { active_graph<Real>() = prev_; }
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph<Real>* prev_;
};

// Value-semantic handle; copies share the underlying buffer.
template <typename Real>
class Tensor {
 public:
  Tensor() : p_(std::make_shared<TensorData<Real>>()) {}

  explicit Tensor(Shape shape, bool requires_grad = false)
      : p_(std::make_shared<TensorData<Real>>()) {
    for (int e : shape)
      if (e <= 0) check(false, "Tensor: extents must be positive, got " + shape_str(shape));
    p_->shape = std::move(shape);
    p_->data = detail::buffer_pool<Real>().get_zeroed(size_t(shape_numel(p_->shape)));
    set_requires_grad(requires_grad);
  }

  // Storage with unspecified contents; every element must be written before
  // it is read. For op outputs that are fully overwritten.
  static Tensor uninit(Shape shape) {
    Tensor t;
    for (int e : shape)
      if (e <= 0) check(false, "Tensor: extents must be positive, got " + shape_str(shape));
    t.p_->shape = std::move(shape);
    t.p_->data = detail::buffer_pool<Real>().get(size_t(shape_numel(t.p_->shape)));
    return t;
  }

  static Tensor from(Shape shape, std::vector<Real> values) {
    Tensor t;
    check(shape_numel(shape) == int64_t(values.size()), "Tensor::from: size mismatch");
    t.p_->shape = std::move(shape);
    t.p_->data = std::move(values);
    return t;
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  static Tensor full(Shape shape, Real v) {
    Tensor t(std::move(shape));
    std::fill(t.data().begin(), t.data().end(), v);
    return t;
  }

  const Shape& shape() const { return p_->shape; }
  int dim(int i) const { return p_->shape[size_t(i)]; }
  int ndim() const { return int(p_->shape.size()); }
  int64_t numel() const { return int64_t(p_->data.size()); }

  std::vector<Real>& data() { return p_->data; }
  const std::vector<Real>& data() const { return p_->data; }
  std::vector<Real>& grad() { return p_->grad; }
  const std::vector<Real>& grad() const { return p_->grad; }

  bool requires_grad() const { return p_->requires_grad; }
  void set_requires_grad(bool v) {
    p_->requires_grad = v;
    if (v) {
      if (p_->grad.size() == p_->data.size())
        std::fill(p_->grad.begin(), p_->grad.end(), Real(0));
      else
        p_->grad = detail::buffer_pool<Real>().get_zeroed(p_->data.size());
    } else {
      detail::buffer_pool<Real>().put(std::move(p_->grad));
      p_->grad.clear();
    }
  }
  void zero_grad() {
    std::fill(p_->grad.begin(), p_->grad.end(), Real(0));
  }

  Real item() const {
    check(numel() == 1, "item: tensor is not scalar");
    return p_->data[0];
  }

  std::shared_ptr<TensorData<Real>> ptr() const { return p_; }

 private:
  std::shared_ptr<TensorData<Real>> p_;
};

// ---------------------------------------------------------------------------
// Op-recording helpers, shared by every differentiable op in the library.
// ---------------------------------------------------------------------------

template <typename Real>
bool grad_enabled() {
  return active_graph<Real>() != nullptr;
}

// An op output participates in the graph iff recording is on and any input
// requires grad. Ops that write every output element pass zero_init = false;
// ops that accumulate into the output (overlap-add, padding, scatter) rely on
// the zeroed default.
template <typename Real>
Tensor<Real> make_output(Shape shape, bool any_input_grad, bool zero_init = true) {
  Tensor<Real> out =
      zero_init ? Tensor<Real>(std::move(shape)) : Tensor<Real>::uninit(std::move(shape));
  if (grad_enabled<Real>() && any_input_grad) out.set_requires_grad(true);
  return out;
}

template <typename Real, typename Fn>
void record_backward(const Tensor<Real>& out, Fn&& fn) {
  if (out.requires_grad() && grad_enabled<Real>())
    active_graph<Real>()->tape.emplace_back(std::forward<Fn>(fn));
}

// Finite-value guard: forward ops on finite inputs must produce finite values.
// NaN and Inf both propagate through the |x| sum, so one final test covers the
// whole buffer and the loop vectorizes.
template <typename Real>
void check_finite(const Tensor<Real>& t, const char* op) {
  const Real* p = t.data().data();
  const int64_t n = int64_t(t.data().size());
  Real acc(0);
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(p[i]);
  if (!std::isfinite(double(acc)))
    throw std::runtime_error(std::string(op) + ": non-finite value produced");
}

template <typename Real>
void backward(const Tensor<Real>& loss, Graph<Real>& g) {
  check(loss.numel() == 1, "backward: loss must be scalar");
  check(!g.consumed, "backward: graph already consumed");
  check(!g.tape.empty(), "backward: no recorded graph");
  check(loss.requires_grad(), "backward: loss does not require grad");
  loss.ptr()->grad[0] = Real(1);
  for (auto it = g.tape.rbegin(); it != g.tape.rend(); ++it) (*it)();
  g.consumed = true;
  g.tape.clear();  // frees closures and the tensors they keep alive
}

// ---------------------------------------------------------------------------
// Broadcasting: trailing-dimension alignment, size-1 axes stretch.
// ---------------------------------------------------------------------------

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const int nd = std::max(int(a.size()), int(b.size()));
  Shape out(size_t(nd), 0);
  for (int i = 0; i < nd; ++i) {
    const int ea = i < nd - int(a.size()) ? 1 : a[size_t(i - (nd - int(a.size())))];
    const int eb = i < nd - int(b.size()) ? 1 : b[size_t(i - (nd - int(b.size())))];
    check(ea == eb || ea == 1 || eb == 1,
          "broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    out[size_t(i)] = std::max(ea, eb);
  }
  return out;
}

// Row-major strides padded to `nd` dims, with 0 stride on stretched axes.
inline std::vector<int64_t> broadcast_strides(const Shape& s, const Shape& out) {
  const int nd = int(out.size());
  const int off = nd - int(s.size());
  std::vector<int64_t> st(size_t(nd), 0);
  int64_t acc = 1;
  for (int i = int(s.size()) - 1; i >= 0; --i) {
    st[size_t(i + off)] = (s[size_t(i)] == 1) ? 0 : acc;
    acc *= s[size_t(i)];
  }
  return st;
}

namespace detail {

// Recursive loop nest over `out` with input strides; innermost loop is tight.
template <typename Real, typename Fn>
void bcast_apply(const Shape& out, const std::vector<int64_t>& sa,
                 const std::vector<int64_t>& sb, const Real* a, const Real* b,
                 Real* o, int d, int64_t ia, int64_t ib, int64_t io, Fn&& f) {
  const int nd = int(out.size());
  if (d == nd - 1) {
    const int n = out[size_t(d)];
    const int64_t da = sa[size_t(d)], db = sb[size_t(d)];
    for (int i = 0; i < n; ++i) o[io + i] = f(a[ia + i * da], b[ib + i * db]);
    return;
  }
  const int n = out[size_t(d)];
  int64_t block = 1;
  for (int i = d + 1; i < nd; ++i) block *= out[size_t(i)];
  for (int i = 0; i < n; ++i)
    bcast_apply(out, sa, sb, a, b, o, d + 1, ia + i * sa[size_t(d)],
                ib + i * sb[size_t(d)], io + i * block, std::forward<Fn>(f));
}

// Accumulates `src` (shaped like `out`) into `dst` (original input shape),
// summing over axes the input had stretched. Used by broadcast backward.
template <typename Real>
void bcast_reduce(const Shape& out, const std::vector<int64_t>& sd,
                  const Real* src, Real* dst, int d, int64_t is, int64_t id) {
  const int nd = int(out.size());
  if (d == nd - 1) {
    const int n = out[size_t(d)];
    const int64_t dd = sd[size_t(d)];
    for (int i = 0; i < n; ++i) dst[id + i * dd] += src[is + i];
    return;
  }
  const int n = out[size_t(d)];
  int64_t block = 1;
  for (int i = d + 1; i < nd; ++i) block *= out[size_t(i)];
  for (int i = 0; i < n; ++i)
    bcast_reduce(out, sd, src, dst, d + 1, is + i * block, id + i * sd[size_t(d)]);
}

}  // namespace detail

// Generic broadcast binary op. fwd(a,b) -> value; dfa/dfb give local partials
// as functions of (a, b, out).
template <typename Real, typename F, typename Dfa, typename Dfb>
Tensor<Real> binary_op(const char* name, const Tensor<Real>& a, const Tensor<Real>& b,
                       F&& fwd, Dfa&& dfa, Dfb&& dfb) {
  const Shape os = broadcast_shape(a.shape(), b.shape());
  auto out = make_output<Real>(os, a.requires_grad() || b.requires_grad(), false);
  const auto sa = broadcast_strides(a.shape(), os);
  const auto sb = broadcast_strides(b.shape(), os);
  if (out.numel() > 0)
    detail::bcast_apply(os, sa, sb, a.data().data(), b.data().data(),
                        out.data().data(), 0, 0, 0, 0, fwd);
  check_finite(out, name);
  const bool asame = a.shape() == os, bsame = b.shape() == os;
  record_backward(out, [ap = a.ptr(), bp = b.ptr(), op = out.ptr(), os, sa, sb,
                        dfa, dfb, asame, bsame]() {
    const int64_t n = int64_t(op->data.size());
    const bool ag = ap->requires_grad, bg = bp->requires_grad;
    // No stretched axes: accumulate both partials in one flat pass.
    if (asame && bsame) {
      const Real* av = ap->data.data();
      const Real* bv = bp->data.data();
      const Real* ov = op->data.data();
      const Real* g = op->grad.data();
      Real* da = ag ? ap->grad.data() : nullptr;
      Real* db = bg ? bp->grad.data() : nullptr;
      for (int64_t i = 0; i < n; ++i) {
        if (da) da[i] += dfa(av[i], bv[i], ov[i]) * g[i];
        if (db) db[i] += dfb(av[i], bv[i], ov[i]) * g[i];
      }
      return;
    }
    if (ag) {
      std::vector<Real> tmp = detail::buffer_pool<Real>().get(size_t(n));
      int64_t idx = 0;
      detail::bcast_apply(os, sa, sb, ap->data.data(), bp->data.data(),
                          tmp.data(), 0, 0, 0, 0, [&](Real av, Real bv) {
                            const Real g = op->grad[size_t(idx)];
                            const Real o = op->data[size_t(idx)];
                            ++idx;
                            return dfa(av, bv, o) * g;
                          });
      detail::bcast_reduce(os, broadcast_strides(ap->shape, os), tmp.data(),
                           ap->grad.data(), 0, 0, 0);
      detail::buffer_pool<Real>().put(std::move(tmp));
    }
    if (bg) {
      std::vector<Real> tmp = detail::buffer_pool<Real>().get(size_t(n));
      int64_t idx = 0;
      detail::bcast_apply(os, sa, sb, ap->data.data(), bp->data.data(),
                          tmp.data(), 0, 0, 0, 0, [&](Real av, Real bv) {
                            const Real g = op->grad[size_t(idx)];
                            const Real o = op->data[size_t(idx)];
                            ++idx;
                            return dfb(av, bv, o) * g;
                          });
      detail::bcast_reduce(os, broadcast_strides(bp->shape, os), tmp.data(),
                           bp->grad.data(), 0, 0, 0);
      detail::buffer_pool<Real>().put(std::move(tmp));
    }
  });
  return out;
}

// Generic elementwise unary op; dfx gives the local partial from (x, out).
template <typename Real, typename F, typename Dfx>
Tensor<Real> unary_op(const char* name, const Tensor<Real>& x, F&& fwd, Dfx&& dfx) {
  auto out = make_output<Real>(x.shape(), x.requires_grad(), false);
  const int64_t n = x.numel();
  const Real* xd = x.data().data();
  Real* od = out.data().data();
  for (int64_t i = 0; i < n; ++i) od[i] = fwd(xd[i]);
  check_finite(out, name);
  record_backward(out, [xp = x.ptr(), op = out.ptr(), dfx]() {
    const int64_t n2 = int64_t(xp->data.size());
    for (int64_t i = 0; i < n2; ++i)
      xp->grad[size_t(i)] += dfx(xp->data[size_t(i)], op->data[size_t(i)]) * op->grad[size_t(i)];
  });
  return out;
}

}  // namespace zipenh
