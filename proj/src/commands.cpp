#include "qcbf/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include "qcbf/errors.hpp"
#include "qcbf/filters.hpp"
#include "qcbf/harness.hpp"
#include "qcbf/isaacs.hpp"

namespace qcbf {

namespace {

using nlohmann::json;

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

json diagnostics_json(const SolveDiagnostics& d) {
  // wall time deliberately absent: output files must be byte-identical
  // across reruns and thread counts
  return json{{"converged", d.converged},
              {"iterations", d.iterations},
              {"final_residual", d.final_residual},
              {"residual_history", d.residual_history},
              {"clamp_events", d.clamp_events},
              {"valid", d.valid},
              {"safe_node_count", d.safe_node_count}};
}

struct FilterBundle {
  SafetyFilter fn;
  std::function<double(const Vec&)> boundary_score;  // null when undefined
};

FilterBundle build_filter(const std::string& name, const ExperimentConfig& cfg,
                          const BlackBoxSystem& sys, const ScalarField* V) {
  const FilterSettings& fs = cfg.filter;
  if (name == "none") {
    return {[](const Vec&, const Vec& u_task) {
              FilterOutput out;
              out.u_exec = u_task;
              out.feasible = true;
              return out;
            },
            nullptr};
  }
  if (name == "qcbf" || name == "lrsf") {
    if (!V) throw ConfigError("filter \"" + name + "\" needs a value field (--field)");
    std::function<double(const Vec&)> score = [V](const Vec& x) { return V->interpolate(x); };
    if (name == "qcbf") {
      auto f = std::make_shared<QcbfFilter>(V, &sys, fs.make_beta(cfg.system.dt),
                                            fs.control_points, fs.dstb_points, fs.refine,
                                            fs.refine_resolution);
      return {[f](const Vec& x, const Vec& u) { return f->filter(x, u); }, score};
    }
    auto f = std::make_shared<LrsfFilter>(V, &sys, fs.control_points, fs.dstb_points);
    return {[f](const Vec& x, const Vec& u) { return f->filter(x, u); }, score};
  }
  if (name == "ct-ana" || name == "ct-heu") {
    const BarrierKind kind = name == "ct-ana" ? BarrierKind::kAnalytic : BarrierKind::kHeuristic;
    ContinuousBarrier barrier(kind, ClassKMap::linear(fs.ct_alpha, /*one_step_valid=*/false));
    auto f = std::make_shared<CtCbfFilter>(barrier, sys.control_box(), cfg.system.dstb_bound);
    return {[f](const Vec& x, const Vec& u) { return f->filter(x, u); },
            [f](const Vec& x) { return f->barrier().value(x); }};
  }
  throw ConfigError("unknown filter \"" + name + "\"");
}

DisturbancePolicy build_dstb(const std::string& mode, const ExperimentConfig& cfg,
                             const BlackBoxSystem& sys, const ScalarField* V, Rng rng) {
  if (mode == "zero") return zero_disturbance(sys);
  if (mode == "random") return random_disturbance(sys, rng);
  if (mode == "best-response-grid") {
    if (!V) throw ConfigError("best-response-grid disturbance needs a value field (--field)");
    return frozen_best_response(*V, sys, cfg.filter.dstb_points);
  }
  if (mode == "best-response-neural") {
    Checkpoint ck = load_checkpoint(cfg.rollout.br_checkpoint);
    const Mlp* critic = ck.find("critic");
    const Mlp* dstb = ck.find("dstb");
    if (!dstb)
      throw ConfigError("checkpoint " + cfg.rollout.br_checkpoint + " has no disturbance net");
    (void)critic;
    auto net = std::make_shared<Mlp>(*dstb);
    auto ws = std::make_shared<Mlp::Workspace>(net->make_workspace());
    return [net, ws](const Vec& x, const Vec& u_exec) {
      Vec in;
      in.reserve(x.size() + u_exec.size());
      in.insert(in.end(), x.begin(), x.end());
      in.insert(in.end(), u_exec.begin(), u_exec.end());
      net->forward(in.data(), *ws);
      return net->output(*ws);
    };
  }
  throw ConfigError("unknown disturbance mode \"" + mode + "\"");
}

std::vector<Vec> start_states(const ExperimentConfig& cfg, const BlackBoxSystem& sys,
                              const std::function<double(const Vec&)>& boundary_score,
                              const std::string& filter_name, Rng& rng) {
  const Grid grid = cfg.make_grid();
  const Box hull = grid.hull();
  const RolloutSettings& rs = cfg.rollout;
  if (rs.start == "equilibrium") {
    Vec x0(grid.dim(), 0.0);
    if (!hull.contains(x0))
      throw ConfigError("rollout.start: equilibrium lies outside the grid hull");
    return std::vector<Vec>(static_cast<size_t>(rs.n), x0);
  }
  if (rs.start == "uniform") {
    // uniform over the hull, restricted to margin-nonnegative states
    auto margin = [&sys](const Vec& x) { return sys.margin(x); };
    return sample_boundary_states(margin, hull, rs.n, 1e30, rng);
  }
  if (!boundary_score)
    throw ConfigError("rollout.start=boundary needs a certificate; filter \"" + filter_name +
                      "\" has none");
  return sample_boundary_states(boundary_score, hull, rs.n, rs.band, rng);
}

json deviation_json(const DeviationStats& d) {
  return json{{"mean", d.mean},     {"median", d.median},       {"max", d.max},
              {"count", d.count},   {"hist_max", d.hist_max},   {"histogram", d.histogram}};
}

}  // namespace

ExperimentConfig prepare_run(const CommandArgs& args) {
  if (args.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed_override) {
    cfg.seed = args.seed;
    cfg.train.seed = args.seed;
  }
  if (args.threads < 0) throw ConfigError("--threads must be >= 0");
  cfg.solve.threads = args.threads;

  std::error_code ec;
  std::filesystem::create_directories(args.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + args.out_dir);

  json echo = cfg.resolved();
  echo["config_hash"] = cfg.hash();
  write_json(join(args.out_dir, "resolved_config.json"), echo);
  std::printf("config %s hash %s\n", args.config_path.c_str(), cfg.hash().c_str());
  return cfg;
}

int cmd_solve(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  PendulumSystem sys(cfg.system);
  const Grid grid = cfg.make_grid();
  SolveResult res = solve(sys, grid, cfg.solve);
  save_field(res.field, join(args.out_dir, "value_field.json"));
  json diag = diagnostics_json(res.diagnostics);
  diag["config_hash"] = cfg.hash();
  write_json(join(args.out_dir, "solve_diagnostics.json"), diag);
  std::printf("solve: converged in %d sweeps, residual %.3e, safe nodes %zu/%zu\n",
              res.diagnostics.iterations, res.diagnostics.final_residual,
              res.diagnostics.safe_node_count, grid.node_count());
  return kExitOk;
}

int cmd_sets(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  if (args.field_path.empty()) throw ConfigError("sets: --field is required");
  PendulumSystem sys(cfg.system);
  const ScalarField V = load_field(args.field_path);
  const Grid& grid = V.grid();

  ContinuousBarrier h_heu(BarrierKind::kHeuristic, ClassKMap::linear(cfg.filter.ct_alpha, false));
  ContinuousBarrier h_ana(BarrierKind::kAnalytic, ClassKMap::linear(cfg.filter.ct_alpha, false));

  std::vector<SetEntry> sets;
  sets.push_back({"V", [&V](const Vec& x) { return V.interpolate(x); }});
  sets.push_back({"h_heu", [&h_heu](const Vec& x) { return h_heu.value(x); }});
  sets.push_back({"h_ana", [&h_ana](const Vec& x) { return h_ana.value(x); }});

  std::optional<Checkpoint> ck;
  std::vector<Vec> u_disc, d_disc;
  if (!args.checkpoint_path.empty()) {
    ck = load_checkpoint(args.checkpoint_path);
    const Mlp* critic = ck->find("critic");
    if (!critic) throw ConfigError("checkpoint has no critic net: " + args.checkpoint_path);
    u_disc = discretize_box(sys.control_box(), cfg.filter.control_points);
    d_disc = discretize_box(sys.dstb_box(), cfg.filter.dstb_points);
    sets.push_back({"neural", [&, critic](const Vec& x) {
                      return neural_max_min(*critic, x, u_disc, d_disc);
                    }});
  }

  const SetMetrics m = compute_set_metrics(sets, grid);
  json mj;
  mj["labels"] = m.labels;
  mj["node_counts"] = m.node_counts;
  mj["areas"] = m.areas;
  mj["violations"] = m.violations;
  mj["config_hash"] = cfg.hash();
  write_json(join(args.out_dir, "set_metrics.json"), mj);

  std::FILE* f = std::fopen(join(args.out_dir, "set_nodes.csv").c_str(), "wb");
  if (!f) throw ConfigError("cannot write set_nodes.csv");
  std::fprintf(f, "x0,x1");
  for (const auto& s : m.labels) std::fprintf(f, ",%s", s.c_str());
  std::fprintf(f, "\n");
  Vec x(grid.dim());
  for (size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_ptr(i, x.data());
    std::fprintf(f, "%.17g,%.17g", x[0], grid.dim() > 1 ? x[1] : 0.0);
    for (const auto& s : sets) std::fprintf(f, ",%.17g", s.score(x));
    std::fprintf(f, "\n");
  }
  std::fclose(f);

  for (size_t i = 0; i < m.labels.size(); ++i)
    std::printf("set %-7s nodes %7zu area %.6f\n", m.labels[i].c_str(), m.node_counts[i],
                m.areas[i]);
  return kExitOk;
}

int cmd_rollout(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  PendulumSystem sys(cfg.system);
  const RolloutSettings& rs = cfg.rollout;

  bool needs_field = false;
  for (const auto& f : rs.filters)
    if (f == "qcbf" || f == "lrsf") needs_field = true;
  for (const auto& m : rs.dstb_modes)
    if (m == "best-response-grid") needs_field = true;
  std::optional<ScalarField> V;
  if (!args.field_path.empty()) V.emplace(load_field(args.field_path));
  if (needs_field && !V)
    throw ConfigError("rollout: --field is required for the configured filters/modes");
  const ScalarField* Vp = V ? &*V : nullptr;

  PdController task{rs.pd_kp, rs.pd_kd, sys.control_box()};
  const double u_span = sys.control_box().upper[0] - sys.control_box().lower[0];

  Rng root(cfg.seed);
  json results = json::array();
  std::printf("%-8s %-22s %-9s %s\n", "filter", "disturbance", "safe", "interventions");

  uint64_t combo = 0;
  for (const auto& fname : rs.filters) {
    FilterBundle bundle = build_filter(fname, cfg, sys, Vp);
    for (const auto& mode : rs.dstb_modes) {
      ++combo;
      Rng rng = root.fork(100 + combo);
      const std::vector<Vec> x0s = start_states(cfg, sys, bundle.boundary_score, fname, rng);
      DisturbancePolicy dstb = build_dstb(mode, cfg, sys, Vp, rng.fork(1));

      std::vector<Trajectory> trajs;
      trajs.reserve(x0s.size());
      int safe = 0;
      long long interventions = 0;
      for (size_t k = 0; k < x0s.size(); ++k) {
        Trajectory tr =
            rollout(sys, bundle.fn, [&task](const Vec& x) { return task(x); }, dstb, x0s[k],
                    rs.horizon, Vp);
        if (tr.safe) ++safe;
        interventions += tr.interventions;
        if (rs.write_trajectories) {
          write_trajectory_csv(tr, join(args.out_dir, "traj_" + fname + "_" + mode + "_" +
                                                          std::to_string(k) + ".csv"));
        }
        trajs.push_back(std::move(tr));
      }
      const DeviationStats dev = deviation_stats(trajs, u_span * u_span);
      const double safe_rate = static_cast<double>(safe) / x0s.size();

      json r;
      r["filter"] = fname;
      r["dstb_mode"] = mode;
      r["n"] = rs.n;
      r["horizon"] = rs.horizon;
      r["band"] = rs.band;
      r["start"] = rs.start;
      r["safe_count"] = safe;
      r["safe_rate"] = safe_rate;
      r["interventions_total"] = interventions;
      r["deviation"] = deviation_json(dev);
      results.push_back(r);
      std::printf("%-8s %-22s %3d/%-5zu %lld\n", fname.c_str(), mode.c_str(), safe,
                  x0s.size(), interventions);
    }
  }

  json summary;
  summary["results"] = results;
  summary["config_hash"] = cfg.hash();
  summary["seed"] = cfg.seed;
  write_json(join(args.out_dir, "rollout_summary.json"), summary);
  return kExitOk;
}

int cmd_train(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  PendulumSystem sys(cfg.system);
  try {
    TrainResult res = train_isaacs(sys, cfg.train);
    const Agents& a = res.agents;
    for (const CheckpointSnapshot& snap : res.checkpoints) {
      std::vector<NamedNet> nets;
      nets.push_back({"critic", Mlp(a.critic.spec(), snap.critic)});
      nets.push_back({"ctrl", Mlp(a.ctrl.spec(), snap.ctrl)});
      nets.push_back({"dstb", Mlp(a.dstb.spec(), snap.dstb)});
      save_checkpoint(join(args.out_dir, "checkpoint_" + std::to_string(snap.step) + ".json"),
                      nets, snap.step, cfg.train.seed, cfg.hash());
    }
    std::FILE* f = std::fopen(join(args.out_dir, "train_log.csv").c_str(), "wb");
    if (!f) throw ConfigError("cannot write train_log.csv");
    std::fprintf(f, "step,critic_loss,mean_q,safe_rate\n");
    for (const EvalPoint& e : res.log)
      std::fprintf(f, "%d,%.17g,%.17g,%.17g\n", e.step, e.critic_loss, e.mean_q, e.safe_rate);
    std::fclose(f);
    if (!res.log.empty())
      std::printf("train: %zu checkpoints, final critic loss %.3e, eval safe rate %.2f\n",
                  res.checkpoints.size(), res.log.back().critic_loss, res.log.back().safe_rate);
    return kExitOk;
  } catch (const NumericalError& e) {
    const std::string payload = join(args.out_dir, "train_abort.json");
    write_json(payload, json{{"error", e.what()}, {"config_hash", cfg.hash()}});
    std::fprintf(stderr, "numerical abort: %s (diagnostics: %s)\n", e.what(), payload.c_str());
    return kExitNumerical;
  }
}

int cmd_train_br(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  PendulumSystem sys(cfg.system);
  if (args.checkpoint_path.empty())
    throw ConfigError("train-br: --checkpoint (critic source) is required");
  if (args.library.empty()) throw ConfigError("train-br: at least one --library is required");

  Checkpoint critic_ck = load_checkpoint(args.checkpoint_path);
  const Mlp* critic = critic_ck.find("critic");
  if (!critic) throw ConfigError("checkpoint has no critic net: " + args.checkpoint_path);

  std::vector<Mlp> library;
  for (const std::string& p : args.library) {
    Checkpoint ck = load_checkpoint(p);
    const Mlp* ctrl = ck.find("ctrl");
    if (!ctrl) throw ConfigError("checkpoint has no ctrl net: " + p);
    library.push_back(*ctrl);
  }

  try {
    std::vector<EvalPoint> log;
    Mlp dstb = train_best_response(*critic, library, sys, cfg.train, &log);
    std::vector<NamedNet> nets;
    nets.push_back({"critic", *critic});
    nets.push_back({"dstb", std::move(dstb)});
    save_checkpoint(join(args.out_dir, "br_checkpoint.json"), nets, cfg.train.total_steps,
                    cfg.train.seed, cfg.hash());
    std::FILE* f = std::fopen(join(args.out_dir, "train_br_log.csv").c_str(), "wb");
    if (!f) throw ConfigError("cannot write train_br_log.csv");
    std::fprintf(f, "step,mean_critic_value\n");
    for (const EvalPoint& e : log) std::fprintf(f, "%d,%.17g\n", e.step, e.mean_q);
    std::fclose(f);
    std::printf("train-br: %zu library controllers, final mean critic value %.4f\n",
                library.size(), log.empty() ? 0.0 : log.back().mean_q);
    return kExitOk;
  } catch (const NumericalError& e) {
    const std::string payload = join(args.out_dir, "train_abort.json");
    write_json(payload, json{{"error", e.what()}, {"config_hash", cfg.hash()}});
    std::fprintf(stderr, "numerical abort: %s (diagnostics: %s)\n", e.what(), payload.c_str());
    return kExitNumerical;
  }
}

int cmd_eval_critic(const CommandArgs& args) {
  ExperimentConfig cfg = prepare_run(args);
  PendulumSystem sys(cfg.system);
  if (args.checkpoint_path.empty()) throw ConfigError("eval-critic: --checkpoint is required");
  if (args.field_path.empty()) throw ConfigError("eval-critic: --field is required");

  Checkpoint ck = load_checkpoint(args.checkpoint_path);
  const Mlp* critic = ck.find("critic");
  if (!critic) throw ConfigError("checkpoint has no critic net: " + args.checkpoint_path);
  const ScalarField V = load_field(args.field_path);

  const CriticEval ev = eval_critic_field(*critic, V, sys, cfg.filter.control_points,
                                          cfg.filter.dstb_points);
  std::printf("eval-critic: sign agreement %.4f on %zu nodes, MAE %.6f\n", ev.sign_agreement,
              ev.sign_nodes, ev.mae);

  json out;
  out["sign_agreement"] = ev.sign_agreement;
  out["sign_nodes"] = ev.sign_nodes;
  out["mae"] = ev.mae;
  out["config_hash"] = cfg.hash();

  if (const Mlp* dstb = ck.find("dstb")) {
    Rng rng = Rng(cfg.seed).fork(777);
    std::vector<std::pair<Vec, Vec>> samples;
    const Box hull = cfg.make_grid().hull();
    const Box& U = sys.control_box();
    for (int i = 0; i < 256; ++i) {
      Vec x(hull.lower.size()), u(U.lower.size());
      for (size_t k = 0; k < x.size(); ++k)
        x[k] = hull.lower[k] + (hull.upper[k] - hull.lower[k]) * rng.uniform();
      for (size_t k = 0; k < u.size(); ++k)
        u[k] = U.lower[k] + (U.upper[k] - U.lower[k]) * rng.uniform();
      samples.emplace_back(std::move(x), std::move(u));
    }
    json ladder = json::array();
    for (double rho : {1e-4, 1e-3, 1e-2, 1e-1}) {
      Rng prng = rng.fork(static_cast<uint64_t>(rho * 1e6));
      const ProbeReport rep = local_optimality_probe(*dstb, *critic, samples, rho, 64, prng);
      ladder.push_back(json{{"rho", rep.rho},
                            {"violation_fraction", rep.violation_fraction},
                            {"worst_drop", rep.worst_drop},
                            {"tolerance", rep.tolerance},
                            {"n_samples", rep.n_samples},
                            {"n_perturbations", rep.n_perturbations}});
      std::printf("probe rho %.0e violation fraction %.4f worst drop %.3e\n", rep.rho,
                  rep.violation_fraction, rep.worst_drop);
    }
    out["probe"] = ladder;
  }
  write_json(join(args.out_dir, "critic_eval.json"), out);
  return kExitOk;
}

}  // namespace qcbf
