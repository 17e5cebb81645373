#include "qcbf/config.hpp"

#include <fstream>
#include <set>

#include "qcbf/errors.hpp"

namespace qcbf {

namespace {

using nlohmann::json;

// Wraps one JSON object, tracks which keys were consumed, and reports
// leftovers (with their section path) as errors.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    if (j_.contains(key)) {
      seen_.insert(key);
      return true;
    }
    return false;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(path_ + ": unknown key \"" + it.key() + "\"");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_system(const json& j, PendulumConfig& out) {
  Section s(j, "system");
  std::string kind = "pendulum";
  s.get("kind", kind);
  if (kind != "pendulum") throw ConfigError("system.kind: only \"pendulum\" is available");
  s.get("dt", out.dt);
  s.get("substeps", out.substeps);
  s.get("theta_failure", out.theta_failure);
  s.get("control_bound", out.control_bound);
  s.get("dstb_bound", out.dstb_bound);
  s.finish();
  if (out.dt <= 0.0) throw ConfigError("system.dt: must be positive");
  if (out.substeps < 1) throw ConfigError("system.substeps: must be >= 1");
  if (out.theta_failure <= 0.0) throw ConfigError("system.theta_failure: must be positive");
  if (out.control_bound <= 0.0) throw ConfigError("system.control_bound: must be positive");
  if (out.dstb_bound < 0.0) throw ConfigError("system.dstb_bound: must be >= 0");
}

void parse_grid(const json& j, std::vector<GridDim>& out) {
  Section s(j, "grid");
  if (s.has("dims")) {
    const json& dims = s.raw("dims");
    if (!dims.is_array() || dims.empty()) throw ConfigError("grid.dims: expected a non-empty array");
    out.clear();
    size_t i = 0;
    for (const auto& dj : dims) {
      Section d(dj, "grid.dims[" + std::to_string(i++) + "]");
      GridDim g;
      d.get("min", g.min);
      d.get("max", g.max);
      d.get("count", g.count);
      d.finish();
      out.push_back(g);
    }
  }
  s.finish();
  try {
    (void)Grid(out);
  } catch (const ContractError& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

void parse_solve(const json& j, SolveConfig& out) {
  Section s(j, "solve");
  std::string mode = "undiscounted";
  s.get("mode", mode);
  if (mode == "undiscounted")
    out.mode = SolveMode::kUndiscounted;
  else if (mode == "discounted")
    out.mode = SolveMode::kDiscounted;
  else
    throw ConfigError("solve.mode: expected \"undiscounted\" or \"discounted\"");
  s.get("gamma_env", out.gamma_env);
  s.get("tolerance", out.tolerance);
  s.get("max_iterations", out.max_iterations);
  s.get("control_points", out.control_points);
  s.get("dstb_points", out.dstb_points);
  s.get("serial_reference", out.serial_reference);
  double table_mb = static_cast<double>(out.max_table_bytes) / (1024.0 * 1024.0);
  s.get("max_table_mb", table_mb);
  s.finish();
  if (table_mb < 0.0) throw ConfigError("solve.max_table_mb: must be >= 0");
  out.max_table_bytes = static_cast<size_t>(table_mb * 1024.0 * 1024.0);
  if (out.gamma_env <= 0.0 || out.gamma_env >= 1.0)
    throw ConfigError("solve.gamma_env: must lie in (0,1)");
  if (out.tolerance <= 0.0) throw ConfigError("solve.tolerance: must be positive");
  if (out.max_iterations < 1) throw ConfigError("solve.max_iterations: must be >= 1");
  if (out.control_points < 2) throw ConfigError("solve.control_points: must be >= 2");
  if (out.dstb_points < 2) throw ConfigError("solve.dstb_points: must be >= 2");
}

void parse_filter(const json& j, FilterSettings& out) {
  Section s(j, "filter");
  if (s.has("beta")) {
    Section b(s.raw("beta"), "filter.beta");
    b.get("type", out.beta_type);
    b.get("slope", out.beta_slope);
    b.get("rate", out.beta_rate);
    b.get("substeps", out.beta_substeps);
    b.finish();
    if (out.beta_type != "linear" && out.beta_type != "induced")
      throw ConfigError("filter.beta.type: expected \"linear\" or \"induced\"");
  }
  s.get("control_points", out.control_points);
  s.get("dstb_points", out.dstb_points);
  s.get("refine", out.refine);
  s.get("refine_resolution", out.refine_resolution);
  s.get("ct_alpha", out.ct_alpha);
  s.finish();
  if (out.control_points < 2) throw ConfigError("filter.control_points: must be >= 2");
  if (out.dstb_points < 1) throw ConfigError("filter.dstb_points: must be >= 1");
  if (out.refine_resolution <= 0.0)
    throw ConfigError("filter.refine_resolution: must be positive");
  if (out.ct_alpha <= 0.0) throw ConfigError("filter.ct_alpha: must be positive");
}

void parse_train(const json& j, TrainConfig& out) {
  Section s(j, "train");
  s.get("gamma_initial", out.gamma.initial);
  s.get("gamma_final", out.gamma.final_value);
  s.get("gamma_anneal_steps", out.gamma.anneal_steps);
  s.get("lr_critic", out.lr_critic);
  s.get("lr_ctrl", out.lr_ctrl);
  s.get("timescale_ratio", out.timescale_ratio);
  s.get("tau", out.tau);
  s.get("explore_noise", out.explore_noise);
  s.get("batch_size", out.batch_size);
  s.get("total_steps", out.total_steps);
  s.get("eval_interval", out.eval_interval);
  s.get("buffer_capacity", out.buffer_capacity);
  s.get("warmup_steps", out.warmup_steps);
  s.get("episode_horizon", out.episode_horizon);
  s.get("hidden", out.hidden);
  s.get("eval_rollouts", out.eval_rollouts);
  s.get("eval_horizon", out.eval_horizon);
  if (s.has("domain")) {
    const json& d = s.raw("domain");
    if (!d.is_array()) throw ConfigError("train.domain: expected [[lo,hi],...]");
    Vec lo, hi;
    for (const auto& pair : d) {
      if (!pair.is_array() || pair.size() != 2)
        throw ConfigError("train.domain: expected [[lo,hi],...]");
      lo.push_back(pair[0].get<double>());
      hi.push_back(pair[1].get<double>());
    }
    out.domain = Box{lo, hi};
  }
  s.finish();
}

void parse_rollout(const json& j, RolloutSettings& out) {
  static const std::set<std::string> kFilters{"none", "qcbf", "lrsf", "ct-ana", "ct-heu"};
  static const std::set<std::string> kModes{"best-response-grid", "best-response-neural",
                                            "zero", "random"};
  Section s(j, "rollout");
  s.get("n", out.n);
  s.get("band", out.band);
  s.get("horizon", out.horizon);
  s.get("filters", out.filters);
  s.get("dstb_modes", out.dstb_modes);
  s.get("start", out.start);
  s.get("pd_kp", out.pd_kp);
  s.get("pd_kd", out.pd_kd);
  s.get("br_checkpoint", out.br_checkpoint);
  s.get("write_trajectories", out.write_trajectories);
  s.finish();
  if (out.n < 1) throw ConfigError("rollout.n: must be >= 1");
  if (out.band <= 0.0) throw ConfigError("rollout.band: must be positive");
  if (out.horizon < 1) throw ConfigError("rollout.horizon: must be >= 1");
  if (out.filters.empty()) throw ConfigError("rollout.filters: must name at least one filter");
  if (out.dstb_modes.empty())
    throw ConfigError("rollout.dstb_modes: must name at least one mode");
  for (const auto& f : out.filters)
    if (!kFilters.count(f)) throw ConfigError("rollout.filters: unknown filter \"" + f + "\"");
  for (const auto& m : out.dstb_modes)
    if (!kModes.count(m)) throw ConfigError("rollout.dstb_modes: unknown mode \"" + m + "\"");
  if (out.start != "boundary" && out.start != "equilibrium" && out.start != "uniform")
    throw ConfigError("rollout.start: expected boundary, equilibrium, or uniform");
}

}  // namespace

ClassKMap FilterSettings::make_beta(double dt) const {
  if (beta_type == "linear") return ClassKMap::linear(beta_slope);
  return ClassKMap::induced(beta_rate, dt, beta_substeps);
}

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  Section top(j, "config");
  int schema = 0;
  top.get("schema", schema);
  if (schema != 1) throw ConfigError("config.schema: expected 1");
  top.get("seed", cfg.seed);
  if (top.has("system")) parse_system(top.raw("system"), cfg.system);
  if (top.has("grid")) parse_grid(top.raw("grid"), cfg.grid_dims);
  if (top.has("solve")) parse_solve(top.raw("solve"), cfg.solve);
  if (top.has("filter")) parse_filter(top.raw("filter"), cfg.filter);
  if (top.has("train")) parse_train(top.raw("train"), cfg.train);
  if (top.has("rollout")) parse_rollout(top.raw("rollout"), cfg.rollout);
  top.finish();

  cfg.train.seed = cfg.seed;
  if (cfg.train.domain.lower.empty()) cfg.train.domain = Grid(cfg.grid_dims).hull();
  try {
    cfg.train.resolved().validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  if (cfg.rollout.br_checkpoint.empty()) {
    for (const auto& m : cfg.rollout.dstb_modes)
      if (m == "best-response-neural")
        throw ConfigError("rollout.br_checkpoint: required for best-response-neural mode");
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("bad config " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::json ExperimentConfig::resolved() const {
  const TrainConfig tr = train.resolved();
  json j;
  j["schema"] = 1;
  j["seed"] = seed;
  j["system"] = {{"kind", "pendulum"},
                 {"dt", system.dt},
                 {"substeps", system.substeps},
                 {"theta_failure", system.theta_failure},
                 {"control_bound", system.control_bound},
                 {"dstb_bound", system.dstb_bound}};
  json dims = json::array();
  for (const GridDim& d : grid_dims)
    dims.push_back({{"min", d.min}, {"max", d.max}, {"count", d.count}});
  j["grid"] = {{"dims", dims}};
  j["solve"] = {
      {"mode", solve.mode == SolveMode::kUndiscounted ? "undiscounted" : "discounted"},
      {"gamma_env", solve.gamma_env},
      {"tolerance", solve.tolerance},
      {"max_iterations", solve.max_iterations},
      {"control_points", solve.control_points},
      {"dstb_points", solve.dstb_points},
      {"serial_reference", solve.serial_reference},
      {"max_table_mb", static_cast<double>(solve.max_table_bytes) / (1024.0 * 1024.0)}};
  json beta = {{"type", filter.beta_type}};
  if (filter.beta_type == "linear") {
    beta["slope"] = filter.beta_slope;
  } else {
    beta["rate"] = filter.beta_rate;
    beta["substeps"] = filter.beta_substeps;
  }
  j["filter"] = {{"beta", beta},
                 {"control_points", filter.control_points},
                 {"dstb_points", filter.dstb_points},
                 {"refine", filter.refine},
                 {"refine_resolution", filter.refine_resolution},
                 {"ct_alpha", filter.ct_alpha}};
  json domain = json::array();
  for (size_t i = 0; i < tr.domain.lower.size(); ++i)
    domain.push_back({tr.domain.lower[i], tr.domain.upper[i]});
  j["train"] = {{"gamma_initial", tr.gamma.initial},
                {"gamma_final", tr.gamma.final_value},
                {"gamma_anneal_steps", tr.gamma.anneal_steps},
                {"lr_critic", tr.lr_critic},
                {"lr_ctrl", tr.lr_ctrl},
                {"timescale_ratio", tr.timescale_ratio},
                {"tau", tr.tau},
                {"explore_noise", tr.explore_noise},
                {"batch_size", tr.batch_size},
                {"total_steps", tr.total_steps},
                {"eval_interval", tr.eval_interval},
                {"buffer_capacity", tr.buffer_capacity},
                {"warmup_steps", tr.warmup_steps},
                {"episode_horizon", tr.episode_horizon},
                {"hidden", tr.hidden},
                {"eval_rollouts", tr.eval_rollouts},
                {"eval_horizon", tr.eval_horizon},
                {"domain", domain}};
  j["rollout"] = {{"n", rollout.n},
                  {"band", rollout.band},
                  {"horizon", rollout.horizon},
                  {"filters", rollout.filters},
                  {"dstb_modes", rollout.dstb_modes},
                  {"start", rollout.start},
                  {"pd_kp", rollout.pd_kp},
                  {"pd_kd", rollout.pd_kd},
                  {"br_checkpoint", rollout.br_checkpoint},
                  {"write_trajectories", rollout.write_trajectories}};
  return j;
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
  static const char* hex = "0123456789abcdef";
  uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string ExperimentConfig::hash() const { return fnv1a64_hex(resolved().dump()); }

}  // namespace qcbf
