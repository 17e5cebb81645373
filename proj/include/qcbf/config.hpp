#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "qcbf/classk.hpp"
#include "qcbf/grid.hpp"
#include "qcbf/isaacs.hpp"
#include "qcbf/pendulum.hpp"
#include "qcbf/train.hpp"

namespace qcbf {

struct FilterSettings {
  std::string beta_type = "linear";  // linear | induced
  double beta_slope = 0.9;
  double beta_rate = 1.0;  // induced maps integrate dy/dt = -rate*y over dt
  int beta_substeps = 20;
  int control_points = 41;
  int dstb_points = 21;
  bool refine = true;
  double refine_resolution = 1e-4;
  double ct_alpha = 1.0;  // class-K slope for the continuous-time baselines

  ClassKMap make_beta(double dt) const;
};

struct RolloutSettings {
  int n = 20;
  double band = 0.02 * (kPi / 3.0);
  int horizon = 500;
  std::vector<std::string> filters = {"qcbf"};  // none|qcbf|lrsf|ct-ana|ct-heu
  std::vector<std::string> dstb_modes = {"best-response-grid"};
  std::string start = "boundary";  // boundary | equilibrium | uniform
  double pd_kp = 32.0;
  double pd_kd = 8.0;
  std::string br_checkpoint;  // best-response-neural mode reads {critic,dstb}
  bool write_trajectories = true;
};

// One experiment file drives every command; unknown keys anywhere are
// configuration errors so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  uint64_t seed = 1;
  PendulumConfig system;
  std::vector<GridDim> grid_dims{{-1.2, 1.2, 161}, {-5.0, 5.0, 161}};
  SolveConfig solve;
  FilterSettings filter;
  TrainConfig train;  // domain defaults to the grid hull; seed from the top
  RolloutSettings rollout;

  Grid make_grid() const { return Grid(grid_dims); }

  // Canonical JSON with every default filled; the execution-only knobs
  // (thread count) never appear, so reruns hash identically.
  nlohmann::json resolved() const;
  std::string hash() const;  // FNV-1a 64-bit over resolved().dump()
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

}  // namespace qcbf
