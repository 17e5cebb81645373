#include "qcbf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "qcbf/errors.hpp"
#include "qcbf/isaacs.hpp"

namespace qcbf {

Trajectory rollout(const BlackBoxSystem& sys, const SafetyFilter& filter,
                   const TaskController& task, const DisturbancePolicy& dstb,
                   const Vec& x0, int horizon, const ScalarField* V) {
  if (horizon < 1) throw ContractError("rollout: horizon must be >= 1");
  Trajectory traj;
  traj.states.push_back(x0);
  traj.margins.push_back(sys.margin(x0));
  traj.values.push_back(V ? V->interpolate(x0) : std::numeric_limits<double>::quiet_NaN());
  traj.min_margin = traj.margins[0];

  Vec x = x0;
  for (int t = 0; t < horizon; ++t) {
    if (traj.margins.back() < 0.0) break;
    Vec u_task = task(x);
    FilterOutput out = filter(x, u_task);
    Vec d = dstb(x, out.u_exec);
    Vec xn = sys.step(x, out.u_exec, d);

    traj.u_task.push_back(std::move(u_task));
    traj.u_exec.push_back(out.u_exec);
    traj.d_applied.push_back(std::move(d));
    if (out.intervened) ++traj.interventions;
    traj.filter_outputs.push_back(std::move(out));

    x = std::move(xn);
    traj.states.push_back(x);
    double m = sys.margin(x);
    traj.margins.push_back(m);
    traj.values.push_back(V ? V->interpolate(x) : std::numeric_limits<double>::quiet_NaN());
    traj.min_margin = std::min(traj.min_margin, m);
  }
  traj.safe = traj.min_margin >= 0.0;
  return traj;
}

std::vector<Vec> sample_boundary_states(const std::function<double(const Vec&)>& score,
                                        const Box& hull, int n, double band, Rng& rng,
                                        long max_proposals) {
  if (n < 1) throw ContractError("sample_boundary_states: n must be >= 1");
  if (band <= 0.0) throw ContractError("sample_boundary_states: band must be positive");
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(n));
  const size_t dim = hull.lower.size();
  long proposals = 0;
  Vec x(dim);
  while (out.size() < static_cast<size_t>(n)) {
    if (proposals >= max_proposals) {
      throw ConfigError("sample_boundary_states: exhausted " + std::to_string(max_proposals) +
                        " proposals with score band [0, " + std::to_string(band) +
                        "]; the band may select an empty or negligible region");
    }
    ++proposals;
    for (size_t i = 0; i < dim; ++i)
      x[i] = hull.lower[i] + (hull.upper[i] - hull.lower[i]) * rng.uniform();
    double s = score(x);
    if (s >= 0.0 && s <= band) out.push_back(x);
  }
  return out;
}

DisturbancePolicy frozen_best_response(const ScalarField& V, const BlackBoxSystem& sys,
                                       int dstb_points) {
  auto d_grid = discretize_box(sys.dstb_box(), dstb_points);
  // Copy the field so the policy owns its data.
  auto field = std::make_shared<ScalarField>(V);
  const BlackBoxSystem* s = &sys;
  return [field, s, d_grid](const Vec& x, const Vec& u_exec) -> Vec {
    double best = std::numeric_limits<double>::infinity();
    size_t best_i = 0;
    for (size_t i = 0; i < d_grid.size(); ++i) {
      double v = field->interpolate(s->step(x, u_exec, d_grid[i]));
      if (v < best) {  // strict: first minimizer wins, lexicographic order
        best = v;
        best_i = i;
      }
    }
    return d_grid[best_i];
  };
}

DisturbancePolicy zero_disturbance(const BlackBoxSystem& sys) {
  const Box box = sys.dstb_box();
  Vec d = box.center();
  for (size_t i = 0; i < d.size(); ++i)
    if (box.lower[i] <= 0.0 && 0.0 <= box.upper[i]) d[i] = 0.0;
  return [d](const Vec&, const Vec&) { return d; };
}

DisturbancePolicy random_disturbance(const BlackBoxSystem& sys, Rng rng) {
  const Box box = sys.dstb_box();
  auto state = std::make_shared<Rng>(rng);
  return [box, state](const Vec&, const Vec&) {
    Vec d(box.lower.size());
    for (size_t i = 0; i < d.size(); ++i)
      d[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * state->uniform();
    return d;
  };
}

SetMetrics compute_set_metrics(const std::vector<SetEntry>& sets, const Grid& grid) {
  SetMetrics m;
  const size_t k = sets.size();
  const size_t n = grid.node_count();
  const double cell = grid.cell_volume();
  std::vector<std::vector<bool>> member(k, std::vector<bool>(n));
  Vec x(grid.dim());
  for (size_t i = 0; i < n; ++i) {
    grid.node_ptr(i, x.data());
    for (size_t j = 0; j < k; ++j) member[j][i] = sets[j].score(x) >= 0.0;
  }
  m.labels.resize(k);
  m.areas.resize(k);
  m.node_counts.resize(k);
  m.violations.assign(k, std::vector<size_t>(k, 0));
  for (size_t j = 0; j < k; ++j) {
    m.labels[j] = sets[j].label;
    size_t c = 0;
    for (size_t i = 0; i < n; ++i) c += member[j][i] ? 1 : 0;
    m.node_counts[j] = c;
    m.areas[j] = static_cast<double>(c) * cell;
  }
  for (size_t a = 0; a < k; ++a)
    for (size_t b = 0; b < k; ++b) {
      size_t v = 0;
      for (size_t i = 0; i < n; ++i)
        if (member[a][i] && !member[b][i]) ++v;
      m.violations[a][b] = v;
    }
  return m;
}

DeviationStats deviation_stats(const std::vector<Trajectory>& trajs, double hist_max) {
  if (hist_max <= 0.0) throw ContractError("deviation_stats: hist_max must be positive");
  DeviationStats st;
  st.hist_max = hist_max;
  st.histogram.assign(64, 0);
  std::vector<double> devs;
  for (const auto& tr : trajs) {
    for (size_t t = 0; t < tr.u_exec.size(); ++t) {
      double d2 = 0.0;
      for (size_t i = 0; i < tr.u_exec[t].size(); ++i) {
        double d = tr.u_task[t][i] - tr.u_exec[t][i];
        d2 += d * d;
      }
      devs.push_back(d2);
    }
  }
  st.count = devs.size();
  if (devs.empty()) return st;
  double sum = 0.0;
  for (double d : devs) {
    sum += d;
    st.max = std::max(st.max, d);
    size_t bin = static_cast<size_t>(std::min(63.0, std::floor(d / hist_max * 64.0)));
    ++st.histogram[bin];
  }
  st.mean = sum / static_cast<double>(devs.size());
  std::sort(devs.begin(), devs.end());
  size_t n = devs.size();
  st.median = (n % 2 == 1) ? devs[n / 2] : 0.5 * (devs[n / 2 - 1] + devs[n / 2]);
  return st;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw ConfigError("cannot open trajectory output: " + path);
  const size_t sd = traj.states.empty() ? 0 : traj.states[0].size();
  const size_t ud = traj.u_task.empty() ? 0 : traj.u_task[0].size();
  const size_t dd = traj.d_applied.empty() ? 0 : traj.d_applied[0].size();
  std::fprintf(f, "t");
  for (size_t i = 0; i < sd; ++i) std::fprintf(f, ",x%zu", i);
  for (size_t i = 0; i < ud; ++i) std::fprintf(f, ",u_task%zu", i);
  for (size_t i = 0; i < ud; ++i) std::fprintf(f, ",u_exec%zu", i);
  for (size_t i = 0; i < dd; ++i) std::fprintf(f, ",d%zu", i);
  std::fprintf(f, ",margin,value\n");
  for (size_t t = 0; t < traj.states.size(); ++t) {
    std::fprintf(f, "%zu", t);
    for (size_t i = 0; i < sd; ++i) std::fprintf(f, ",%.17g", traj.states[t][i]);
    const bool has_u = t < traj.u_task.size();
    for (size_t i = 0; i < ud; ++i)
      has_u ? std::fprintf(f, ",%.17g", traj.u_task[t][i]) : std::fprintf(f, ",nan");
    for (size_t i = 0; i < ud; ++i)
      has_u ? std::fprintf(f, ",%.17g", traj.u_exec[t][i]) : std::fprintf(f, ",nan");
    for (size_t i = 0; i < dd; ++i)
      has_u ? std::fprintf(f, ",%.17g", traj.d_applied[t][i]) : std::fprintf(f, ",nan");
    std::fprintf(f, ",%.17g,%.17g\n", traj.margins[t], traj.values[t]);
  }
  std::fclose(f);
}

}  // namespace qcbf
