#pragma once

#include <vector>

#include "qcbf/scalar_field.hpp"
#include "qcbf/system.hpp"

namespace qcbf {

enum class SolveMode { kUndiscounted, kDiscounted };

struct SolveConfig {
  SolveMode mode = SolveMode::kUndiscounted;
  double gamma_env = 0.9;  // discounted mode only
  double tolerance = 1e-6;
  int max_iterations = 2000;
  int control_points = 41;  // per control dimension (1 on degenerate dims)
  int dstb_points = 21;     // per disturbance dimension
  // Engine knobs; results are identical either way. The reference engine is
  // a plain single-thread full-enumeration sweep kept for testing and
  // benchmarking against the OpenMP kernel.
  bool serial_reference = false;
  int threads = 0;  // 0 = runtime default
  size_t max_table_bytes = size_t(1600) << 20;
};

struct SolveDiagnostics {
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;  // max-norm change per sweep
  // Clamped successor evaluations of the final field over the full
  // discretization; engine-independent.
  long long clamp_events = 0;
  // False when any node with V >= 0 leaves the hull under its own optimal
  // play (the saddle pair whose Q equals the node's value); the certificate
  // cannot be trusted at such nodes.
  bool valid = true;
  size_t safe_node_count = 0;
  double wall_seconds = 0.0;  // never serialized: reruns stay byte-identical
};

struct SolveResult {
  ScalarField field;
  SolveDiagnostics diagnostics;
};

// Per-dimension linspace with exact endpoints, cartesian product in
// row-major order (lexicographic, last dimension fastest). Degenerate box
// dimensions contribute exactly one point regardless of points_per_dim.
std::vector<Vec> discretize_box(const Box& box, int points_per_dim);

// One Isaacs backup at an arbitrary state: the disturbance minimizes after
// seeing the control.
//   undiscounted: min{ g(x), max_u min_d V(f(x,u,d)) }
//   discounted:   (1-gamma)*g(x) + gamma*min{ g(x), max_u min_d V(f(x,u,d)) }
double bellman_backup(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
                      const SolveConfig& cfg);

// Jacobi value iteration from V0 = g on grid nodes. Throws
// NonConvergenceError when the residual does not reach tolerance.
SolveResult solve(const BlackBoxSystem& sys, const Grid& grid, const SolveConfig& cfg);

// Q(x,u,d) = min{ g(x), V(f(x,u,d)) }
double q_value(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
               const Vec& u, const Vec& d);

struct RobustQ {
  double value = 0.0;
  Vec argmin_d;  // ties resolve to the lexicographically smallest point
};
RobustQ robust_q(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
                 const Vec& u, const std::vector<Vec>& d_disc);

struct FallbackAction {
  Vec u;  // ties resolve toward the control closest to 0, then lexicographic
  double value = 0.0;
};
FallbackAction fallback_action(const ScalarField& V, const BlackBoxSystem& sys,
                               const Vec& x, const std::vector<Vec>& u_disc,
                               const std::vector<Vec>& d_disc);

struct ResidualStats {
  double max_abs = 0.0;
  double mean_abs = 0.0;
};
// |V(x) - bellman_backup(V, x)| over the given states.
ResidualStats bellman_residual(const ScalarField& V, const BlackBoxSystem& sys,
                               const std::vector<Vec>& states, const SolveConfig& cfg);

}  // namespace qcbf
