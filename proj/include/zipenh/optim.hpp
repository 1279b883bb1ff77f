#pragma once

// Training-rate schedule and the scale-aware Adam variant. The schedule
// decays as ((x/k)^2 + 1)^(-1/4) in both step and epoch with a linear
// warmup from half rate; the optimizer sizes elementwise updates by each
// tensor's RMS and adds a learned scalar rescaling channel per tensor.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "zipenh/params.hpp"

namespace zipenh {

struct EdenConfig {
  double alpha_base = 0.04;
  int64_t t_warmup = 4000;
  double alpha_step = 2500;
  double alpha_epoch = 24;
  int64_t steps_per_epoch = 1000;  // desk-scale epoch over an unbounded stream

  void validate() const {
    check(alpha_base > 0 && t_warmup > 0 && alpha_step > 0 && alpha_epoch > 0 &&
              steps_per_epoch > 0,
          "eden config: all fields must be positive");
  }
};

inline double eden_lr(int64_t step, const EdenConfig& cfg) {
  cfg.validate();
  const double s = double(step);
  const double epoch = s / double(cfg.steps_per_epoch);
  const double qs = s / cfg.alpha_step;
  const double qe = epoch / cfg.alpha_epoch;
  const double step_factor = std::pow(qs * qs + 1.0, -0.25);
  const double epoch_factor = std::pow(qe * qe + 1.0, -0.25);
  const double warm =
      step >= cfg.t_warmup ? 1.0 : 0.5 + 0.5 * s / double(cfg.t_warmup);
  return cfg.alpha_base * step_factor * epoch_factor * warm;
}

// One optimizer step updates parameter p with gradient g in two channels:
//   main:  param_rms = max(RMS(p), eps_rms); elementwise Adam moments on g,
//          bias-corrected to n_hat; delta = -lr * param_rms * n_hat
//   scale: scalar h = sum(g * p) / (numel * param_rms); scalar Adam moments
//          on h, bias-corrected to h_hat; delta = -lr * h_hat * p
// Gradients are never clipped; a non-finite gradient is an error.
template <typename Real>
struct ScaleAdam {
  double beta1 = 0.9, beta2 = 0.98, eps = 1e-8, eps_rms = 1e-5;
  int64_t step_count = 0;

  struct Slot {
    std::vector<Real> m, v;
    double scale_m = 0, scale_v = 0;
  };
  std::vector<Slot> slots;

  void init(const ParamList<Real>& ps) {
    slots.assign(ps.size(), Slot{});
    for (size_t i = 0; i < ps.size(); ++i) {
      slots[i].m.assign(size_t(ps[i].tensor.numel()), Real(0));
      slots[i].v.assign(size_t(ps[i].tensor.numel()), Real(0));
    }
    step_count = 0;
  }

  struct Update {
    std::vector<Real> delta_main, delta_scale;
  };

  // Channel-separated update for one tensor, after moments were advanced at
  // bias-correction step t. Exposed so the two channels stay testable.
  Update compute_update(const Slot& slot, const std::vector<Real>& p, double lr,
                        int64_t t) const {
    const double bc1 = 1.0 - std::pow(beta1, double(t));
    const double bc2 = 1.0 - std::pow(beta2, double(t));
    double sum_sq = 0;
    for (Real x : p) sum_sq += double(x) * double(x);
    const double param_rms = std::max(std::sqrt(sum_sq / double(p.size())), eps_rms);

    Update u;
    u.delta_main.resize(p.size());
    u.delta_scale.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
      const double mhat = double(slot.m[i]) / bc1;
      const double vhat = double(slot.v[i]) / bc2;
      u.delta_main[i] = Real(-lr * param_rms * (mhat / (std::sqrt(vhat) + eps)));
    }
    const double shat_m = slot.scale_m / bc1;
    const double shat_v = slot.scale_v / bc2;
    const double h_hat = shat_m / (std::sqrt(shat_v) + eps);
    for (size_t i = 0; i < p.size(); ++i) u.delta_scale[i] = Real(-lr * h_hat * double(p[i]));
    return u;
  }

  void step(const ParamList<Real>& ps, double lr) {
    check(slots.size() == ps.size(), "scale_adam: state does not match parameter list");
    ++step_count;
    for (size_t k = 0; k < ps.size(); ++k) {
      auto tensor = ps[k].tensor;
      auto& p = tensor.data();
      const auto& g = tensor.grad();
      if (g.size() != p.size())
        check(false, "scale_adam: missing gradient for " + ps[k].name);
      Real gabs(0);
      for (Real gv : g) gabs += std::fabs(gv);
      if (!std::isfinite(double(gabs)))
        check(false, "scale_adam: non-finite gradient in " + ps[k].name);

      auto& slot = slots[k];
      double sum_sq = 0, sum_gp = 0;
      for (size_t i = 0; i < p.size(); ++i) {
        sum_sq += double(p[i]) * double(p[i]);
        sum_gp += double(g[i]) * double(p[i]);
      }
      const double param_rms = std::max(std::sqrt(sum_sq / double(p.size())), eps_rms);
      const double h = sum_gp / (double(p.size()) * param_rms);

      for (size_t i = 0; i < p.size(); ++i) {
        slot.m[i] = Real(beta1 * double(slot.m[i]) + (1.0 - beta1) * double(g[i]));
        slot.v[i] = Real(beta2 * double(slot.v[i]) + (1.0 - beta2) * double(g[i]) * double(g[i]));
      }
      slot.scale_m = beta1 * slot.scale_m + (1.0 - beta1) * h;
      slot.scale_v = beta2 * slot.scale_v + (1.0 - beta2) * h * h;

      const auto u = compute_update(slot, p, lr, step_count);
      for (size_t i = 0; i < p.size(); ++i)
        p[i] += u.delta_main[i] + u.delta_scale[i];
    }
  }
};

}  // namespace zipenh
