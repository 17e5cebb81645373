#include "qcbf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qcbf/errors.hpp"

namespace qcbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvPhi = 0.6180339887498949;

bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

double sqdist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double sqnorm(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

// argmax_u rq(u); ties toward the control closest to 0, then lexicographic.
// Matches fallback_action's selection rule.
template <class RQ>
std::pair<Vec, double> best_effort_action(const std::vector<Vec>& u_disc, const RQ& rq) {
  Vec best_u;
  double best_v = -kInf;
  double best_norm = kInf;
  for (const Vec& u : u_disc) {
    const double v = rq(u);
    const double n = sqnorm(u);
    if (v > best_v ||
        (v == best_v && (n < best_norm || (n == best_norm && lex_less(u, best_u))))) {
      best_v = v;
      best_u = u;
      best_norm = n;
    }
  }
  return {best_u, best_v};
}

// Comparison threshold; linear maps extend to negative margins for
// diagnostics, the induced map extends by the identity below zero.
double beta_threshold(const ClassKMap& beta, double r) {
  if (beta.kind() == ClassKMap::Kind::kLinear || r >= 0.0) return beta.apply(r);
  return r;
}

}  // namespace

QcbfFilter::QcbfFilter(const ScalarField* V, const BlackBoxSystem* sys, ClassKMap beta,
                       int control_points, int dstb_points, bool refine,
                       double refine_resolution)
    : V_(V),
      sys_(sys),
      beta_(beta),
      refine_(refine),
      refine_resolution_(refine_resolution) {
  if (!V_ || !sys_) throw ContractError("qcbf filter: null field or system");
  if (!beta_.one_step_valid())
    throw ConfigError("qcbf filter: beta must be a valid one-step class-K map");
  if (!(refine_resolution_ > 0.0))
    throw ConfigError("qcbf filter: refine resolution must be positive");
  u_disc_ = discretize_box(sys_->control_box(), control_points);
  d_disc_ = discretize_box(sys_->dstb_box(), dstb_points);
  dstb_degenerate_ = d_disc_.size() == 1;
}

FilterOutput QcbfFilter::filter(const Vec& x, const Vec& u_task) const {
  return dstb_degenerate_ ? filter_certain(x, u_task) : filter_robust(x, u_task);
}

FilterOutput QcbfFilter::filter_robust(const Vec& x, const Vec& u_task) const {
  return run(x, u_task,
             [&](const Vec& u) { return robust_q(*V_, *sys_, x, u, d_disc_).value; });
}

FilterOutput QcbfFilter::filter_certain(const Vec& x, const Vec& u_task) const {
  const Vec& d0 = d_disc_.front();
  return run(x, u_task, [&](const Vec& u) { return q_value(*V_, *sys_, x, u, d0); });
}

template <class RQ>
FilterOutput QcbfFilter::run(const Vec& x, const Vec& u_task, const RQ& rq) const {
  FilterOutput out;
  const double vx = V_->interpolate(x);
  const double thr = beta_threshold(beta_, vx);

  if (vx < 0.0) {
    auto [u_fb, v_fb] = best_effort_action(u_disc_, rq);
    out.u_exec = u_fb;
    out.intervened = u_fb != u_task;
    out.constraint_margin = v_fb - thr;
    out.feasible = false;
    out.fallback_used = true;
    out.outside_certificate = true;
    return out;
  }

  const double v_task = rq(u_task);
  if (v_task >= thr) {
    out.u_exec = u_task;
    out.constraint_margin = v_task - thr;
    return out;
  }

  Vec best_u;
  double best_v = 0.0;
  double best_d2 = kInf;
  bool found = false;
  for (const Vec& u : u_disc_) {
    const double v = rq(u);
    if (v < thr) continue;
    const double d2 = sqdist(u, u_task);
    if (!found || d2 < best_d2 || (d2 == best_d2 && lex_less(u, best_u))) {
      found = true;
      best_u = u;
      best_v = v;
      best_d2 = d2;
    }
  }

  if (!found) {
    auto [u_fb, v_fb] = best_effort_action(u_disc_, rq);
    out.u_exec = u_fb;
    out.intervened = u_fb != u_task;
    out.constraint_margin = v_fb - thr;
    out.feasible = false;
    out.fallback_used = true;
    return out;
  }

  if (refine_ && u_disc_[0].size() == 1 && u_task.size() == 1 &&
      u_task[0] != best_u[0]) {
    // Walk the bracket between the selected control and its infeasible
    // neighbor on the task side; golden-ratio probes keep the feasible end.
    const double spacing = u_disc_.size() > 1 ? u_disc_[1][0] - u_disc_[0][0]
                                              : 0.0;
    const double dir = u_task[0] > best_u[0] ? 1.0 : -1.0;
    double a = best_u[0] + dir * spacing;
    a = dir > 0.0 ? std::min(a, u_task[0]) : std::max(a, u_task[0]);
    double b = best_u[0];
    if (spacing > 0.0) {
      Vec probe(1);
      while (std::fabs(b - a) > refine_resolution_) {
        probe[0] = b + kInvPhi * (a - b);
        const double v = rq(probe);
        if (v >= thr) {
          b = probe[0];
          best_v = v;
        } else {
          a = probe[0];
        }
      }
      best_u[0] = b;
    }
  }

  out.u_exec = best_u;
  out.intervened = true;
  out.constraint_margin = best_v - thr;
  return out;
}

LrsfFilter::LrsfFilter(const ScalarField* V, const BlackBoxSystem* sys,
                       int control_points, int dstb_points)
    : V_(V), sys_(sys) {
  if (!V_ || !sys_) throw ContractError("lrsf filter: null field or system");
  u_disc_ = discretize_box(sys_->control_box(), control_points);
  d_disc_ = discretize_box(sys_->dstb_box(), dstb_points);
  dstb_degenerate_ = d_disc_.size() == 1;
}

FilterOutput LrsfFilter::filter(const Vec& x, const Vec& u_task) const {
  return dstb_degenerate_ ? filter_certain(x, u_task) : filter_robust(x, u_task);
}

FilterOutput LrsfFilter::filter_robust(const Vec& x, const Vec& u_task) const {
  const auto monitor = [&](const Vec& u) {
    double m = kInf;
    for (const Vec& d : d_disc_) {
      bool clamped = false;
      const double v = V_->interpolate(sys_->step(x, u, d), clamped);
      if (v < m) m = v;
    }
    return m;
  };
  return run(x, u_task, monitor,
             [&](const Vec& u) { return robust_q(*V_, *sys_, x, u, d_disc_).value; });
}

FilterOutput LrsfFilter::filter_certain(const Vec& x, const Vec& u_task) const {
  const Vec& d0 = d_disc_.front();
  const auto monitor = [&](const Vec& u) {
    bool clamped = false;
    return V_->interpolate(sys_->step(x, u, d0), clamped);
  };
  return run(x, u_task, monitor,
             [&](const Vec& u) { return q_value(*V_, *sys_, x, u, d0); });
}

template <class Monitor, class RQ>
FilterOutput LrsfFilter::run(const Vec& x, const Vec& u_task, const Monitor& monitor,
                             const RQ& rq) const {
  FilterOutput out;
  const double vx = V_->interpolate(x);

  if (vx < 0.0) {
    auto [u_fb, v_fb] = best_effort_action(u_disc_, rq);
    (void)v_fb;
    out.u_exec = u_fb;
    out.intervened = u_fb != u_task;
    out.constraint_margin = monitor(u_fb);
    out.feasible = out.constraint_margin >= 0.0;
    out.fallback_used = true;
    out.outside_certificate = true;
    return out;
  }

  const double m_task = monitor(u_task);
  if (m_task >= 0.0) {
    out.u_exec = u_task;
    out.constraint_margin = m_task;
    return out;
  }

  auto [u_fb, v_fb] = best_effort_action(u_disc_, rq);
  (void)v_fb;
  out.u_exec = u_fb;
  out.intervened = u_fb != u_task;
  out.constraint_margin = monitor(u_fb);
  out.feasible = out.constraint_margin >= 0.0;
  out.fallback_used = true;
  return out;
}

ContinuousBarrier::ContinuousBarrier(BarrierKind kind, ClassKMap alpha)
    : kind_(kind), alpha_(alpha) {
  const double s3 = std::sqrt(3.0);
  c_ = s3 / (2.0 * (19.0 - 10.0 * s3));
}

double ContinuousBarrier::value(const Vec& x) const {
  if (x.size() != 2) throw ContractError("barrier: state dimension mismatch");
  const double th = x[0], w = x[1];
  if (kind_ == BarrierKind::kHeuristic)
    return 1.0 - 16.0 * th * th - 8.0 * th * w - 4.0 * w * w;
  return std::cos(th) - 0.5 - c_ * w * w;
}

Vec ContinuousBarrier::gradient(const Vec& x) const {
  if (x.size() != 2) throw ContractError("barrier: state dimension mismatch");
  const double th = x[0], w = x[1];
  if (kind_ == BarrierKind::kHeuristic)
    return {-32.0 * th - 8.0 * w, -8.0 * th - 8.0 * w};
  return {-std::sin(th), -2.0 * c_ * w};
}

CtCbfFilter::CtCbfFilter(ContinuousBarrier barrier, Box control_box, double dstb_bound)
    : barrier_(std::move(barrier)),
      control_box_(std::move(control_box)),
      dstb_bound_(dstb_bound) {
  if (control_box_.dim() != 1) throw ContractError("ct filter: control must be scalar");
  if (dstb_bound_ < 0.0) throw ConfigError("ct filter: negative disturbance bound");
}

FilterOutput CtCbfFilter::filter(const Vec& x, const Vec& u_task) const {
  if (x.size() != 2 || u_task.size() != 1)
    throw ContractError("ct filter: dimension mismatch");
  if (!control_box_.contains(u_task))
    throw ContractError("ct filter: task control outside the control box");
  FilterOutput out;
  const double lo = control_box_.lower[0];
  const double hi = control_box_.upper[0];
  const double h = barrier_.value(x);
  const Vec gh = barrier_.gradient(x);
  // Worst-case dh/dt = gh0*w + gh1*(10 sin th + u/2) - (Fmax/2)|gh1 cos th|;
  // the constraint dh/dt >= -alpha(h) reads a*u + b >= 0.
  const double a = 0.5 * gh[1];
  const double b = gh[0] * x[1] + gh[1] * 10.0 * std::sin(x[0]) -
                   0.5 * dstb_bound_ * std::fabs(gh[1] * std::cos(x[0])) +
                   barrier_.alpha(h);

  const auto value_at = [&](double u) { return a * u + b; };

  if (value_at(u_task[0]) >= 0.0) {
    out.u_exec = u_task;
    out.constraint_margin = value_at(u_task[0]);
    return out;
  }

  double u_exec;
  if (a > 0.0) {
    const double u0 = -b / a;
    if (u0 <= hi) {
      u_exec = std::max(lo, u0);
    } else {
      u_exec = hi;
      out.feasible = false;
    }
  } else if (a < 0.0) {
    const double u0 = -b / a;
    if (u0 >= lo) {
      u_exec = std::min(hi, u0);
    } else {
      u_exec = lo;
      out.feasible = false;
    }
  } else {
    // No control authority over the constraint and it is violated; both
    // endpoints tie, keep the one nearest the task control (lower on a tie).
    out.feasible = false;
    const double dl = std::fabs(lo - u_task[0]);
    const double dh = std::fabs(hi - u_task[0]);
    u_exec = dl <= dh ? lo : hi;
  }
  out.u_exec = {u_exec};
  out.intervened = u_exec != u_task[0];
  out.constraint_margin = value_at(u_exec);
  out.fallback_used = !out.feasible;
  return out;
}

Vec PdController::operator()(const Vec& x) const {
  if (x.size() != 2) throw ContractError("pd controller: state dimension mismatch");
  const double u = -kp * x[0] - kd * x[1];
  return control_box.clamp({u});
}

}  // namespace qcbf
