#pragma once

#include <functional>
#include <string>

#include "qcbf/filters.hpp"
#include "qcbf/rng.hpp"

namespace qcbf {

using TaskController = std::function<Vec(const Vec& x)>;
using SafetyFilter = std::function<FilterOutput(const Vec& x, const Vec& u_task)>;
// Receives the executed control so best-response policies do not have to
// re-run the filter; equivalent to freezing the disturbance per state.
using DisturbancePolicy = std::function<Vec(const Vec& x, const Vec& u_exec)>;

struct Trajectory {
  std::vector<Vec> states;     // x_0 .. x_T
  std::vector<double> margins; // g(x_t), same length as states
  std::vector<double> values;  // certificate value at x_t (NaN without one)
  std::vector<Vec> u_task, u_exec, d_applied;  // length T
  std::vector<FilterOutput> filter_outputs;    // length T
  bool safe = false;      // min margin >= 0
  double min_margin = 0.0;
  int interventions = 0;
};

// Steps until the horizon or until the post-step margin goes negative.
// The value field is optional and only feeds the recorded V column.
Trajectory rollout(const BlackBoxSystem& sys, const SafetyFilter& filter,
                   const TaskController& task, const DisturbancePolicy& dstb,
                   const Vec& x0, int horizon, const ScalarField* V = nullptr);

// Rejection-samples states whose score lies in [0, band]; scores come from
// a certificate (interpolated field or barrier). Proposals are uniform over
// the hull; throws ConfigError after max_proposals misses.
std::vector<Vec> sample_boundary_states(const std::function<double(const Vec&)>& score,
                                        const Box& hull, int n, double band, Rng& rng,
                                        long max_proposals = 1000000);

// Worst-case disturbance against a frozen value field: picks the discretized
// d minimizing V(f(x, u_exec, d)). Lazily evaluated at visited states.
DisturbancePolicy frozen_best_response(const ScalarField& V, const BlackBoxSystem& sys,
                                       int dstb_points);

DisturbancePolicy zero_disturbance(const BlackBoxSystem& sys);
DisturbancePolicy random_disturbance(const BlackBoxSystem& sys, Rng rng);

struct SetEntry {
  std::string label;
  std::function<double(const Vec&)> score;
};

struct SetMetrics {
  std::vector<std::string> labels;
  std::vector<double> areas;         // node count * cell volume
  std::vector<size_t> node_counts;
  // violations[i][j] = nodes where set i holds but set j does not
  std::vector<std::vector<size_t>> violations;
};

SetMetrics compute_set_metrics(const std::vector<SetEntry>& sets, const Grid& grid);

struct DeviationStats {
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  size_t count = 0;
  std::vector<size_t> histogram;  // 64 bins over [0, hist_max]
  double hist_max = 0.0;
};

// Squared deviation ||u_task - u_exec||^2 pooled over the trajectories.
// hist_max defaults to the worst possible squared deviation (2*u_max)^2.
DeviationStats deviation_stats(const std::vector<Trajectory>& trajs, double hist_max);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace qcbf
