#pragma once

#include "qcbf/classk.hpp"
#include "qcbf/isaacs.hpp"

namespace qcbf {

struct FilterOutput {
  Vec u_exec;
  bool intervened = false;         // u_exec != u_task
  double constraint_margin = 0.0;  // attained constraint value minus threshold
  bool feasible = true;
  bool fallback_used = false;
  // The state sat outside the certified set (V(x) < 0); the filter returned
  // the fallback action as a diagnostic, not a guarantee.
  bool outside_certificate = false;
};

// Enforces min_d Q(x, u, d) >= beta(V(x)) while staying as close to the task
// control as possible. Candidate controls come from a discretization of the
// control box; with a scalar control a golden-section pass then sharpens the
// choice to refine_resolution, re-checking the constraint at every probe.
class QcbfFilter {
 public:
  QcbfFilter(const ScalarField* V, const BlackBoxSystem* sys, ClassKMap beta,
             int control_points, int dstb_points, bool refine = true,
             double refine_resolution = 1e-4);

  // Dispatches to the robust or the dedicated uncertainty-free path based on
  // whether the disturbance box is degenerate.
  FilterOutput filter(const Vec& x, const Vec& u_task) const;

  // Both paths are callable directly so their equivalence on a degenerate
  // box stays testable.
  FilterOutput filter_robust(const Vec& x, const Vec& u_task) const;
  FilterOutput filter_certain(const Vec& x, const Vec& u_task) const;

  const std::vector<Vec>& u_disc() const { return u_disc_; }
  const std::vector<Vec>& d_disc() const { return d_disc_; }

 private:
  template <class RQ>
  FilterOutput run(const Vec& x, const Vec& u_task, const RQ& rq) const;

  const ScalarField* V_;
  const BlackBoxSystem* sys_;
  ClassKMap beta_;
  std::vector<Vec> u_disc_, d_disc_;
  bool refine_;
  double refine_resolution_;
  bool dstb_degenerate_;
};

// Passes the task control through when even the worst-case disturbance keeps
// the next state inside the certified set; otherwise switches to the
// fallback policy.
class LrsfFilter {
 public:
  LrsfFilter(const ScalarField* V, const BlackBoxSystem* sys, int control_points,
             int dstb_points);

  FilterOutput filter(const Vec& x, const Vec& u_task) const;
  FilterOutput filter_robust(const Vec& x, const Vec& u_task) const;
  FilterOutput filter_certain(const Vec& x, const Vec& u_task) const;

 private:
  template <class Monitor, class RQ>
  FilterOutput run(const Vec& x, const Vec& u_task, const Monitor& monitor,
                   const RQ& rq) const;

  const ScalarField* V_;
  const BlackBoxSystem* sys_;
  std::vector<Vec> u_disc_, d_disc_;
  bool dstb_degenerate_;
};

enum class BarrierKind { kHeuristic, kAnalytic };

// Hand-written pendulum barriers used by the continuous-time baselines.
//   heuristic: 1 - 16 th^2 - 8 th w - 4 w^2
//   analytic:  cos(th) - 1/2 - sqrt(3) / (2 (19 - 10 sqrt(3))) * w^2
class ContinuousBarrier {
 public:
  ContinuousBarrier(BarrierKind kind, ClassKMap alpha);

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  double alpha(double h) const { return alpha_.apply(h); }
  BarrierKind kind() const { return kind_; }
  double omega_coefficient() const { return c_; }

 private:
  BarrierKind kind_;
  ClassKMap alpha_;
  double c_;
};

// Model-based baseline: enforces worst-case dh/dt >= -alpha(h) for the
// pendulum, where the disturbance enters affinely and is resolved in closed
// form. The constraint is affine in u, so the admissible set is a half-line
// intersected with the control box.
class CtCbfFilter {
 public:
  CtCbfFilter(ContinuousBarrier barrier, Box control_box, double dstb_bound);

  FilterOutput filter(const Vec& x, const Vec& u_task) const;
  const ContinuousBarrier& barrier() const { return barrier_; }

 private:
  ContinuousBarrier barrier_;
  Box control_box_;
  double dstb_bound_;
};

// Task controller: u = clamp(-kp*theta - kd*omega).
struct PdController {
  double kp = 32.0;
  double kd = 8.0;
  Box control_box;

  Vec operator()(const Vec& x) const;
};

}  // namespace qcbf
