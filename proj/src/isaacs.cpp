#include "qcbf/isaacs.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "qcbf/errors.hpp"

namespace qcbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Flattened point list for allocation-free sweeps.
struct Disc {
  std::vector<double> pts;
  size_t n = 0;
  size_t dim = 0;
  const double* at(size_t i) const { return pts.data() + i * dim; }
};

Disc flatten(const std::vector<Vec>& points) {
  Disc d;
  d.n = points.size();
  d.dim = points.empty() ? 0 : points[0].size();
  d.pts.resize(d.n * d.dim);
  for (size_t i = 0; i < d.n; ++i)
    std::copy(points[i].begin(), points[i].end(), d.pts.begin() + i * d.dim);
  return d;
}

inline double finalize_backup(SolveMode mode, double gamma, double g, double inner) {
  const double capped = std::min(g, inner);
  if (mode == SolveMode::kUndiscounted) return capped;
  return (1.0 - gamma) * g + gamma * capped;
}

// max_u min_d V(f(x,u,d)), full enumeration in point order.
double inner_game_full(const Grid& grid, const double* values, const BlackBoxSystem& sys,
                       const double* x, const Disc& U, const Disc& D, double* succ) {
  double best = -kInf;
  for (size_t ui = 0; ui < U.n; ++ui) {
    double m = kInf;
    for (size_t di = 0; di < D.n; ++di) {
      sys.step_raw(x, U.at(ui), D.at(di), succ);
      bool clamped = false;
      const double v = interpolate_raw(grid, values, succ, clamped);
      if (v < m) m = v;
    }
    if (m > best) best = m;
  }
  return best;
}

// Interpolation stencils precomputed per (node, u, d): low-corner flat index,
// per-axis fractions, and whether the successor left the hull. Successors are
// fixed across sweeps, so locating them once removes all divisions from the
// sweep kernel; corner_sum keeps the arithmetic bit-identical to
// interpolate_raw.
struct StencilTable {
  std::vector<uint32_t> base;
  std::vector<double> frac;
  std::vector<uint8_t> clamp;
};

// Same value as inner_game_full. Starts each scan at the previous sweep's
// maximizer/minimizer and abandons a control as soon as its partial min over
// disturbances drops strictly below the best full min seen, which cannot
// change the max. `sb_row`/`sf_row` hold precomputed stencils when non-null.
double inner_game_pruned(const Grid& grid, const double* values, const BlackBoxSystem& sys,
                         const double* x, const Disc& U, const Disc& D,
                         const uint32_t* sb_row, const double* sf_row, size_t sdim,
                         double* succ, int& u_hint, int& d_hint) {
  double best = -kInf;
  int best_u = u_hint;
  int best_d = d_hint;
  const size_t uh = static_cast<size_t>(u_hint);
  const size_t dh = static_cast<size_t>(d_hint);
  for (size_t uk = 0; uk < U.n; ++uk) {
    const size_t ui = uk == 0 ? uh : (uk <= uh ? uk - 1 : uk);
    double m = kInf;
    int md = -1;
    bool pruned = false;
    for (size_t dk = 0; dk < D.n; ++dk) {
      const size_t di = dk == 0 ? dh : (dk <= dh ? dk - 1 : dk);
      double v;
      if (sb_row) {
        const size_t e = ui * D.n + di;
        v = corner_sum(grid, values, sb_row[e], sf_row + e * sdim);
      } else {
        sys.step_raw(x, U.at(ui), D.at(di), succ);
        bool clamped = false;
        v = interpolate_raw(grid, values, succ, clamped);
      }
      if (v < m) {
        m = v;
        md = static_cast<int>(di);
      }
      if (m < best) {
        pruned = true;
        break;
      }
    }
    if (!pruned && m > best) {
      best = m;
      best_u = static_cast<int>(ui);
      best_d = md;
    }
  }
  u_hint = best_u;
  d_hint = best_d;
  return best;
}

// Chebyshev dilation of a node mask by per-axis radii, one separable OR pass
// per axis.
void dilate_mask(const Grid& grid, std::vector<uint8_t>& mask,
                 std::vector<uint8_t>& scratch, const std::vector<int>& radius) {
  const size_t N = grid.node_count();
  for (size_t ax = 0; ax < grid.dim(); ++ax) {
    const size_t st = grid.stride(ax);
    const int cnt = grid.count(ax);
    const int r = radius[ax];
    for (size_t idx = 0; idx < N; ++idx) {
      const int ci = static_cast<int>((idx / st) % static_cast<size_t>(cnt));
      const size_t line = idx - static_cast<size_t>(ci) * st;
      const int lo = ci - r < 0 ? 0 : ci - r;
      const int hi = ci + r > cnt - 1 ? cnt - 1 : ci + r;
      uint8_t v = 0;
      for (int j = lo; j <= hi && !v; ++j) v = mask[line + static_cast<size_t>(j) * st];
      scratch[idx] = v;
    }
    mask.swap(scratch);
  }
}

bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

double sqnorm(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

void validate_solve_config(const BlackBoxSystem& sys, const Grid& grid,
                           const SolveConfig& cfg) {
  if (grid.dim() != sys.state_dim())
    throw ContractError("solve: grid dimension does not match the system");
  if (!(cfg.tolerance > 0.0)) throw ConfigError("solve: tolerance must be positive");
  if (cfg.max_iterations < 1) throw ConfigError("solve: max_iterations must be at least 1");
  if (cfg.mode == SolveMode::kDiscounted && !(cfg.gamma_env > 0.0 && cfg.gamma_env < 1.0))
    throw ConfigError("solve: discounted mode needs gamma_env in (0, 1)");
}

}  // namespace

std::vector<Vec> discretize_box(const Box& box, int points_per_dim) {
  const size_t dim = box.dim();
  std::vector<std::vector<double>> axes(dim);
  for (size_t i = 0; i < dim; ++i) {
    if (box.degenerate(i)) {
      axes[i] = {box.lower[i]};
    } else {
      if (points_per_dim < 2)
        throw ConfigError("discretize_box: need at least 2 points per non-degenerate dimension");
      axes[i].resize(points_per_dim);
      const double h = (box.upper[i] - box.lower[i]) / (points_per_dim - 1);
      for (int j = 0; j < points_per_dim; ++j) axes[i][j] = box.lower[i] + j * h;
      axes[i].back() = box.upper[i];
    }
  }
  size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  std::vector<Vec> out;
  out.reserve(total);
  Vec p(dim);
  std::vector<size_t> idx(dim, 0);
  for (size_t k = 0; k < total; ++k) {
    for (size_t i = 0; i < dim; ++i) p[i] = axes[i][idx[i]];
    out.push_back(p);
    for (size_t i = dim; i-- > 0;) {
      if (++idx[i] < axes[i].size()) break;
      idx[i] = 0;
    }
  }
  return out;
}

double bellman_backup(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
                      const SolveConfig& cfg) {
  validate_solve_config(sys, V.grid(), cfg);
  if (x.size() != sys.state_dim()) throw ContractError("bellman_backup: state dimension mismatch");
  const Disc U = flatten(discretize_box(sys.control_box(), cfg.control_points));
  const Disc D = flatten(discretize_box(sys.dstb_box(), cfg.dstb_points));
  double succ[8];
  const double inner =
      inner_game_full(V.grid(), V.values().data(), sys, x.data(), U, D, succ);
  return finalize_backup(cfg.mode, cfg.gamma_env, sys.margin(x), inner);
}

SolveResult solve(const BlackBoxSystem& sys, const Grid& grid, const SolveConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  validate_solve_config(sys, grid, cfg);
  const Disc U = flatten(discretize_box(sys.control_box(), cfg.control_points));
  const Disc D = flatten(discretize_box(sys.dstb_box(), cfg.dstb_points));
  const size_t N = grid.node_count();
  const size_t sdim = grid.dim();
  const size_t npairs = U.n * D.n;
  const int nt = cfg.serial_reference ? 1 : (cfg.threads > 0 ? cfg.threads : omp_get_max_threads());

  std::vector<double> coords(N * sdim), g(N), vold(N), vnew(N);
#pragma omp parallel for schedule(static) num_threads(nt)
  for (size_t node = 0; node < N; ++node) {
    grid.node_ptr(node, &coords[node * sdim]);
    g[node] = sys.margin_raw(&coords[node * sdim]);
    vold[node] = g[node];
  }

  const bool use_table =
      !cfg.serial_reference && N <= static_cast<size_t>(UINT32_MAX) &&
      N * npairs * (sizeof(uint32_t) + sdim * sizeof(double) + 1) <= cfg.max_table_bytes;
  StencilTable table;
  std::vector<double> maxdelta(sdim, 0.0);
  if (use_table) {
    table.base.resize(N * npairs);
    table.frac.resize(N * npairs * sdim);
    table.clamp.resize(N * npairs);
  }
  if (!cfg.serial_reference) {
    // One pass over every (node, u, d) transition: fill the stencils when
    // they fit, and record per-axis step extents either way — those bound
    // how far a node's value can propagate in one sweep.
#pragma omp parallel num_threads(nt)
    {
      std::vector<double> local(sdim, 0.0);
#pragma omp for schedule(static)
      for (size_t node = 0; node < N; ++node) {
        const double* x = &coords[node * sdim];
        double s[8];
        for (size_t ui = 0; ui < U.n; ++ui) {
          for (size_t di = 0; di < D.n; ++di) {
            sys.step_raw(x, U.at(ui), D.at(di), s);
            const size_t e = node * npairs + ui * D.n + di;
            uint32_t b = 0;
            uint8_t any = 0;
            for (size_t i = 0; i < sdim; ++i) {
              const double d = std::fabs(s[i] - x[i]);
              if (d > local[i]) local[i] = d;
              if (use_table) {
                int c;
                double f;
                bool cl = false;
                grid.locate(i, s[i], c, f, cl);
                b += static_cast<uint32_t>(grid.stride(i)) * static_cast<uint32_t>(c);
                table.frac[e * sdim + i] = f;
                any |= cl ? 1 : 0;
              }
            }
            if (use_table) {
              table.base[e] = b;
              table.clamp[e] = any;
            }
          }
        }
      }
#pragma omp critical
      for (size_t i = 0; i < sdim; ++i) maxdelta[i] = std::max(maxdelta[i], local[i]);
    }
  }

  std::vector<int> u_hint, d_hint;
  std::vector<uint8_t> dirty, changed, scratch;
  std::vector<int> radius;
  if (!cfg.serial_reference) {
    u_hint.assign(N, 0);
    d_hint.assign(N, 0);
    // A node's backup can change only if a value within these index radii
    // changed in the previous sweep; anything further cannot reach it through
    // any successor's interpolation cell. Skipped nodes keep their value,
    // which equals what a full recompute would produce.
    dirty.assign(N, 1);
    changed.assign(N, 0);
    scratch.assign(N, 0);
    radius.resize(sdim);
    for (size_t i = 0; i < sdim; ++i)
      radius[i] = static_cast<int>(std::floor(maxdelta[i] / grid.spacing(i))) + 2;
  }

  SolveDiagnostics diag;
  diag.residual_history.reserve(std::min(cfg.max_iterations, 100000));
  for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
    double maxres = 0.0;
    if (cfg.serial_reference) {
      double succ[8];
      for (size_t node = 0; node < N; ++node) {
        const double inner =
            inner_game_full(grid, vold.data(), sys, &coords[node * sdim], U, D, succ);
        vnew[node] = finalize_backup(cfg.mode, cfg.gamma_env, g[node], inner);
        maxres = std::max(maxres, std::fabs(vnew[node] - vold[node]));
      }
    } else {
#pragma omp parallel for schedule(static) num_threads(nt) reduction(max : maxres)
      for (size_t node = 0; node < N; ++node) {
        if (!dirty[node]) {
          vnew[node] = vold[node];
          changed[node] = 0;
          continue;
        }
        double succ[8];
        const uint32_t* sb = use_table ? &table.base[node * npairs] : nullptr;
        const double* sf = use_table ? &table.frac[node * npairs * sdim] : nullptr;
        const double inner =
            inner_game_pruned(grid, vold.data(), sys, &coords[node * sdim], U, D, sb,
                              sf, sdim, succ, u_hint[node], d_hint[node]);
        vnew[node] = finalize_backup(cfg.mode, cfg.gamma_env, g[node], inner);
        changed[node] = vnew[node] != vold[node] ? 1 : 0;
        maxres = std::max(maxres, std::fabs(vnew[node] - vold[node]));
      }
    }
    if (!std::isfinite(maxres))
      throw NumericalError("solve: non-finite residual at sweep " + std::to_string(iter));
    diag.residual_history.push_back(maxres);
    diag.iterations = iter;
    diag.final_residual = maxres;
    vold.swap(vnew);
    if (maxres <= cfg.tolerance) {
      diag.converged = true;
      break;
    }
    if (!cfg.serial_reference && iter < cfg.max_iterations) {
      dirty = changed;
      dilate_mask(grid, dirty, scratch, radius);
    }
  }
  if (!diag.converged) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "solve: residual %.3e above tolerance after %d sweeps",
                  diag.final_residual, diag.iterations);
    throw NonConvergenceError(buf, diag.iterations, diag.final_residual);
  }

  nlohmann::json params;
  params["solver"] = {
      {"mode", cfg.mode == SolveMode::kUndiscounted ? "undiscounted" : "discounted"},
      {"tolerance", cfg.tolerance},
      {"max_iterations", cfg.max_iterations},
      {"control_points", cfg.control_points},
      {"dstb_points", cfg.dstb_points},
  };
  if (cfg.mode == SolveMode::kDiscounted) params["solver"]["gamma_env"] = cfg.gamma_env;
  params["iterations"] = diag.iterations;
  params["final_residual"] = diag.final_residual;
  ScalarField field(grid, std::move(vold), "V", std::move(params));

  // Post-solve audit. Clamp events count every successor of the full
  // discretization that leaves the hull. A certified node (V >= 0) is only
  // trusted when its own optimal play stays inside the hull: the value there
  // equals the Q at the realized saddle pair, so that one evaluation is what
  // must be extrapolation-free. Off-optimal excursions merely lose the
  // comparison and are reported through the event count instead.
  const std::vector<Vec> u_disc = discretize_box(sys.control_box(), cfg.control_points);
  const std::vector<Vec> d_disc = discretize_box(sys.dstb_box(), cfg.dstb_points);
  long long clamps = 0;
  long long invalid_nodes = 0;
  size_t safe_nodes = 0;
#pragma omp parallel for schedule(static) num_threads(nt) \
    reduction(+ : clamps, invalid_nodes, safe_nodes)
  for (size_t node = 0; node < N; ++node) {
    double succ[8];
    for (size_t ui = 0; ui < U.n; ++ui) {
      for (size_t di = 0; di < D.n; ++di) {
        bool out;
        if (use_table) {
          out = table.clamp[node * npairs + ui * D.n + di] != 0;
        } else {
          sys.step_raw(&coords[node * sdim], U.at(ui), D.at(di), succ);
          out = false;
          for (size_t i = 0; i < sdim; ++i) {
            const GridDim& gd = grid.dims()[i];
            if (succ[i] < gd.min || succ[i] > gd.max) {
              out = true;
              break;
            }
          }
        }
        if (out) ++clamps;
      }
    }
    if (field.at(node) >= 0.0) {
      ++safe_nodes;
      const Vec x = grid.node(node);
      const FallbackAction best = fallback_action(field, sys, x, u_disc, d_disc);
      const RobustQ worst = robust_q(field, sys, x, best.u, d_disc);
      bool clamped = false;
      const Vec next = sys.step(x, best.u, worst.argmin_d);
      field.interpolate(next, clamped);
      if (clamped) ++invalid_nodes;
    }
  }
  diag.clamp_events = clamps;
  diag.valid = invalid_nodes == 0;
  diag.safe_node_count = safe_nodes;
  diag.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  return SolveResult{std::move(field), std::move(diag)};
}

double q_value(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
               const Vec& u, const Vec& d) {
  const double g = sys.margin(x);
  const Vec next = sys.step(x, u, d);
  bool clamped = false;
  return std::min(g, V.interpolate(next, clamped));
}

RobustQ robust_q(const ScalarField& V, const BlackBoxSystem& sys, const Vec& x,
                 const Vec& u, const std::vector<Vec>& d_disc) {
  if (d_disc.empty()) throw ConfigError("robust_q: empty disturbance discretization");
  RobustQ best;
  best.value = kInf;
  for (const Vec& d : d_disc) {
    const double q = q_value(V, sys, x, u, d);
    if (q < best.value || (q == best.value && lex_less(d, best.argmin_d))) {
      best.value = q;
      best.argmin_d = d;
    }
  }
  return best;
}

FallbackAction fallback_action(const ScalarField& V, const BlackBoxSystem& sys,
                               const Vec& x, const std::vector<Vec>& u_disc,
                               const std::vector<Vec>& d_disc) {
  if (u_disc.empty()) throw ConfigError("fallback_action: empty control discretization");
  FallbackAction best;
  best.value = -kInf;
  double best_norm = kInf;
  for (const Vec& u : u_disc) {
    const double v = robust_q(V, sys, x, u, d_disc).value;
    const double n = sqnorm(u);
    const bool better =
        v > best.value ||
        (v == best.value && (n < best_norm || (n == best_norm && lex_less(u, best.u))));
    if (better) {
      best.value = v;
      best.u = u;
      best_norm = n;
    }
  }
  return best;
}

ResidualStats bellman_residual(const ScalarField& V, const BlackBoxSystem& sys,
                               const std::vector<Vec>& states, const SolveConfig& cfg) {
  validate_solve_config(sys, V.grid(), cfg);
  if (states.empty()) throw ContractError("bellman_residual: no states");
  const Disc U = flatten(discretize_box(sys.control_box(), cfg.control_points));
  const Disc D = flatten(discretize_box(sys.dstb_box(), cfg.dstb_points));
  ResidualStats stats;
  double sum = 0.0;
  double succ[8];
  for (const Vec& x : states) {
    const double inner =
        inner_game_full(V.grid(), V.values().data(), sys, x.data(), U, D, succ);
    const double backed = finalize_backup(cfg.mode, cfg.gamma_env, sys.margin(x), inner);
    bool clamped = false;
    const double r = std::fabs(V.interpolate(x, clamped) - backed);
    stats.max_abs = std::max(stats.max_abs, r);
    sum += r;
  }
  stats.mean_abs = sum / static_cast<double>(states.size());
  return stats;
}

}  // namespace qcbf
