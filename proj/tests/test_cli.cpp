// Tests for the command-line layer: config parsing with unknown-key
// rejection, the resolved-config echo and hash, each subcommand run
// in-process against its output files, and the installed binary's exit-code
// contract exercised through subprocesses.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "json.hpp"
#include "qcbf/commands.hpp"
#include "qcbf/config.hpp"
#include "qcbf/errors.hpp"
#include "qcbf/harness.hpp"
#include "qcbf/isaacs.hpp"
#include "qcbf/pendulum.hpp"
#include "qcbf/train.hpp"

using namespace qcbf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// All file outputs embed SOURCE_DATE_EPOCH-controlled timestamps; pin one so
// byte-identity checks compare real content.
struct EpochPin {
  EpochPin() { setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }
};
const EpochPin epoch_pin;

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("qcbf_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << body;
}

// A quick config: coarse grid and discretization so command round-trips run
// in milliseconds. Training knobs sized to finish in well under a second.
json small_config() {
  json j;
  j["schema"] = 1;
  j["seed"] = 3;
  j["grid"] = {{"dims", json::array({json{{"min", -1.2}, {"max", 1.2}, {"count", 41}},
                                     json{{"min", -5.0}, {"max", 5.0}, {"count", 41}}})}};
  j["solve"] = {{"tolerance", 1e-4}, {"max_iterations", 5000},
                {"control_points", 11}, {"dstb_points", 5}};
  j["train"] = {{"hidden", json::array({4, 4})}, {"batch_size", 16},
                {"total_steps", 120},  {"eval_interval", 60},
                {"buffer_capacity", 500}, {"warmup_steps", 32},
                {"episode_horizon", 20}, {"eval_rollouts", 0}};
  j["rollout"] = {{"n", 3}, {"horizon", 50}, {"filters", json::array({"none"})},
                  {"dstb_modes", json::array({"zero"})}, {"start", "equilibrium"}};
  return j;
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::path p = dir / "config.json";
  spit(p, j.dump(2));
  return p;
}

CommandArgs make_args(const fs::path& config, const fs::path& out) {
  CommandArgs a;
  a.config_path = config.string();
  a.out_dir = out.string();
  return a;
}

int run_cli(const std::string& tail, std::string* output = nullptr) {
  const char* bin = QCBF_CLI_BIN;
  const fs::path log = fs::temp_directory_path() / "qcbf_cli_run.log";
  const std::string cmd = "SOURCE_DATE_EPOCH=1700000000 " + std::string(bin) + " " + tail +
                          " >" + log.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) *output = slurp(log);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("experiment config fills defaults and rejects unknown or invalid keys") {
  // defaults: the canonical experiment appears with no sections specified
  const ExperimentConfig def = parse_experiment_config(json{{"schema", 1}});
  CHECK(def.seed == 1);
  CHECK(def.grid_dims.size() == 2);
  CHECK(def.grid_dims[0].count == 161);
  CHECK(def.grid_dims[1].count == 161);
  CHECK(def.solve.control_points == 41);
  CHECK(def.solve.dstb_points == 21);
  CHECK(def.solve.tolerance == 1e-6);
  CHECK(def.system.dt == 0.01);
  CHECK(def.filter.control_points == 41);
  CHECK(def.rollout.n == 20);
  CHECK(def.rollout.horizon == 500);
  CHECK(def.rollout.band == 0.02 * (kPi / 3.0));
  CHECK(def.train.domain.lower.size() == 2);  // defaulted to the grid hull
  CHECK(def.train.domain.upper[1] == 5.0);

  // schema gate
  CHECK_THROWS_AS(parse_experiment_config(json::object()), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(json{{"schema", 2}}), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(json::array()), ConfigError);

  // unknown keys are errors at every level, with the section in the message
  try {
    parse_experiment_config(json{{"schema", 1}, {"extra", true}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("extra") != std::string::npos);
  }
  try {
    parse_experiment_config(json{{"schema", 1}, {"solve", {{"tolerancee", 1e-6}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("solve") != std::string::npos);
    CHECK(msg.find("tolerancee") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_experiment_config(json{{"schema", 1}, {"system", {{"mass", 1.0}}}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(json{{"schema", 1}, {"rollout", {{"bandd", 0.1}}}}),
                  ConfigError);

  // value validation
  auto bad = [](const char* section, json body) {
    json j{{"schema", 1}};
    j[section] = std::move(body);
    return j;
  };
  CHECK_THROWS_AS(parse_experiment_config(bad("system", {{"dt", 0.0}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("system", {{"substeps", 0}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("system", {{"kind", "cartpole"}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("solve", {{"tolerance", 0.0}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("solve", {{"mode", "both"}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("solve", {{"control_points", 1}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("filter", {{"beta", {{"type", "cubic"}}}})),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("filter", {{"refine_resolution", 0.0}})),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("rollout", {{"n", 0}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("rollout", {{"filters", json::array({"qp"})}})),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(bad("rollout", {{"dstb_modes", json::array({"storm"})}})),
      ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("rollout", {{"start", "corner"}})), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(bad("rollout", {{"dstb_modes", json::array({"best-response-neural"})}})),
      ConfigError);  // needs br_checkpoint
  CHECK_THROWS_AS(parse_experiment_config(bad("train", {{"lr_critic", 0.0}})), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(bad("train", {{"domain", json::array({1.0})}})),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config(bad("grid", {{"dims", json::array({json{{"min", 1.0}, {"max", 0.0}, {"count", 5}}})}})),
      ConfigError);

  // the top-level seed flows into training
  const ExperimentConfig seeded = parse_experiment_config(json{{"schema", 1}, {"seed", 77}});
  CHECK(seeded.train.seed == 77);
}

TEST_CASE("resolved config and hash are canonical and thread-independent") {
  const ExperimentConfig a = parse_experiment_config(json{{"schema", 1}});
  const ExperimentConfig b = parse_experiment_config(json{{"schema", 1}});
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);  // 64-bit hex

  // every section appears fully filled in the echo
  const json r = a.resolved();
  for (const char* key : {"schema", "seed", "system", "grid", "solve", "filter", "train", "rollout"})
    CHECK(r.contains(key));
  CHECK(r["solve"]["tolerance"] == 1e-6);
  CHECK(r["train"]["hidden"].size() > 0);
  CHECK(!r["solve"].contains("threads"));  // execution knob, never hashed

  // the echo round-trips through the parser to the same hash (canonical form)
  const ExperimentConfig rt = parse_experiment_config([&] {
    json c = r;
    return c;
  }());
  CHECK(rt.hash() == a.hash());

  // semantic changes move the hash
  ExperimentConfig c = a;
  c.seed = 2;
  CHECK(c.hash() != a.hash());
  ExperimentConfig d = a;
  d.solve.threads = 7;  // execution-only
  CHECK(d.hash() == a.hash());

  // reference vectors for the hash primitive
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
  CHECK(fnv1a64_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("prepare_run echoes the resolved config before any work") {
  const fs::path dir = fresh_dir("prepare");
  const fs::path cfg_path = write_config(dir, small_config());

  CommandArgs args = make_args(cfg_path, dir / "out");
  args.seed_override = true;
  args.seed = 99;
  const ExperimentConfig cfg = prepare_run(args);
  CHECK(cfg.seed == 99);
  CHECK(cfg.train.seed == 99);

  const json echo = json::parse(slurp(dir / "out" / "resolved_config.json"));
  CHECK(echo["seed"] == 99);
  CHECK(echo["config_hash"] == cfg.hash());

  CommandArgs missing;
  missing.out_dir = (dir / "out2").string();
  CHECK_THROWS_AS(prepare_run(missing), ConfigError);

  CommandArgs bad_threads = make_args(cfg_path, dir / "out3");
  bad_threads.threads = -1;
  CHECK_THROWS_AS(prepare_run(bad_threads), ConfigError);
}

TEST_CASE("solve command writes the field and identical bytes on rerun") {
  const fs::path dir = fresh_dir("solve");
  const fs::path cfg = write_config(dir, small_config());

  CHECK(cmd_solve(make_args(cfg, dir / "a")) == kExitOk);
  CHECK(fs::exists(dir / "a" / "value_field.json"));
  const json diag = json::parse(slurp(dir / "a" / "solve_diagnostics.json"));
  CHECK(diag["converged"] == true);
  CHECK(diag["final_residual"].get<double>() <= 1e-4);
  CHECK(diag["safe_node_count"].get<size_t>() > 0);

  // the field loads back onto the configured grid
  const ScalarField V = load_field((dir / "a" / "value_field.json").string());
  CHECK(V.grid().node_count() == 41 * 41);

  // rerun: byte-identical outputs (criterion-9 semantics, in-process)
  CHECK(cmd_solve(make_args(cfg, dir / "b")) == kExitOk);
  for (const char* f : {"value_field.json", "solve_diagnostics.json", "resolved_config.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  // thread-count invariance of every output byte
  CommandArgs threaded = make_args(cfg, dir / "c");
  threaded.threads = 3;
  CHECK(cmd_solve(threaded) == kExitOk);
  for (const char* f : {"value_field.json", "solve_diagnostics.json", "resolved_config.json"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "c" / f));

  // serial reference engine: same bytes again
  json jcfg = small_config();
  jcfg["solve"]["serial_reference"] = true;
  const fs::path cfg_serial = dir / "config_serial.json";
  spit(cfg_serial, jcfg.dump(2));
  CHECK(cmd_solve(make_args(cfg_serial, dir / "d")) == kExitOk);
  CHECK(slurp(dir / "a" / "value_field.json") == slurp(dir / "d" / "value_field.json"));

  // forced non-convergence surfaces the residual in the error
  json j1 = small_config();
  j1["solve"]["max_iterations"] = 1;
  const fs::path cfg1 = dir / "config_iter1.json";
  spit(cfg1, j1.dump(2));
  try {
    cmd_solve(make_args(cfg1, dir / "e"));
    FAIL("expected NonConvergenceError");
  } catch (const NonConvergenceError& e) {
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}

TEST_CASE("sets command reports areas and containment for all certificates") {
  const fs::path dir = fresh_dir("sets");
  const fs::path cfg = write_config(dir, small_config());
  REQUIRE(cmd_solve(make_args(cfg, dir / "solve")) == kExitOk);

  CommandArgs args = make_args(cfg, dir / "out");
  args.field_path = (dir / "solve" / "value_field.json").string();
  CHECK(cmd_sets(args) == kExitOk);

  const json m = json::parse(slurp(dir / "out" / "set_metrics.json"));
  const std::vector<std::string> labels = m["labels"].get<std::vector<std::string>>();
  REQUIRE(labels == std::vector<std::string>{"V", "h_heu", "h_ana"});
  const std::vector<double> areas = m["areas"].get<std::vector<double>>();
  CHECK(areas[0] > areas[2]);          // grid set strictly larger than analytic
  CHECK(areas[0] / areas[2] > 1.0);
  CHECK(m["violations"][0][0] == 0);   // self-containment
  CHECK(m["violations"][1][1] == 0);
  CHECK(m["violations"][2][2] == 0);

  // node CSV: header + one row per node
  std::istringstream csv(slurp(dir / "out" / "set_nodes.csv"));
  std::string line;
  size_t rows = 0;
  std::getline(csv, line);
  CHECK(line == "x0,x1,V,h_heu,h_ana");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 41 * 41);

  CommandArgs no_field = make_args(cfg, dir / "out2");
  CHECK_THROWS_AS(cmd_sets(no_field), ConfigError);
}

TEST_CASE("rollout command: equilibrium pass-through is fully safe") {
  const fs::path dir = fresh_dir("rollout");
  const fs::path cfg = write_config(dir, small_config());

  CHECK(cmd_rollout(make_args(cfg, dir / "out")) == kExitOk);
  const json summary = json::parse(slurp(dir / "out" / "rollout_summary.json"));
  REQUIRE(summary["results"].size() == 1);
  const json& r = summary["results"][0];
  CHECK(r["filter"] == "none");
  CHECK(r["dstb_mode"] == "zero");
  CHECK(r["safe_rate"] == 1.0);
  CHECK(r["safe_count"] == 3);
  CHECK(r["interventions_total"] == 0);
  CHECK(r["deviation"]["mean"] == 0.0);
  CHECK(fs::exists(dir / "out" / "traj_none_zero_0.csv"));
  CHECK(fs::exists(dir / "out" / "traj_none_zero_2.csv"));

  // a certificate filter without --field is a configuration error
  json needs = small_config();
  needs["rollout"]["filters"] = json::array({"qcbf"});
  const fs::path cfg2 = dir / "config_needs_field.json";
  spit(cfg2, needs.dump(2));
  CHECK_THROWS_AS(cmd_rollout(make_args(cfg2, dir / "out2")), ConfigError);
}

TEST_CASE("rollout command: with D={0} both grid filters execute the slack task unchanged") {
  const fs::path dir = fresh_dir("rollout_d0");
  json j = small_config();
  j["system"] = {{"dstb_bound", 0.0}};
  j["rollout"] = {{"n", 2}, {"horizon", 100},
                  {"filters", json::array({"qcbf", "lrsf"})},
                  {"dstb_modes", json::array({"zero"})}, {"start", "equilibrium"}};
  const fs::path cfg = write_config(dir, j);
  REQUIRE(cmd_solve(make_args(cfg, dir / "solve")) == kExitOk);

  CommandArgs args = make_args(cfg, dir / "out");
  args.field_path = (dir / "solve" / "value_field.json").string();
  CHECK(cmd_rollout(args) == kExitOk);

  const json summary = json::parse(slurp(dir / "out" / "rollout_summary.json"));
  REQUIRE(summary["results"].size() == 2);
  for (const json& r : summary["results"]) {
    CHECK(r["safe_rate"] == 1.0);
    CHECK(r["interventions_total"] == 0);  // the PD task is slack at equilibrium
    CHECK(r["deviation"]["mean"] == 0.0);
  }
  // identical executed trajectories whenever the monitor passes
  CHECK(slurp(dir / "out" / "traj_qcbf_zero_0.csv") ==
        slurp(dir / "out" / "traj_lrsf_zero_0.csv"));
  CHECK(slurp(dir / "out" / "traj_qcbf_zero_1.csv") ==
        slurp(dir / "out" / "traj_lrsf_zero_1.csv"));
}

TEST_CASE("train, train-br, and eval-critic round-trip through checkpoint files") {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_config(dir, small_config());
  REQUIRE(cmd_solve(make_args(cfg, dir / "solve")) == kExitOk);
  const std::string field = (dir / "solve" / "value_field.json").string();

  CHECK(cmd_train(make_args(cfg, dir / "a")) == kExitOk);
  CHECK(fs::exists(dir / "a" / "checkpoint_60.json"));
  CHECK(fs::exists(dir / "a" / "checkpoint_120.json"));
  {
    std::istringstream log(slurp(dir / "a" / "train_log.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == "step,critic_loss,mean_q,safe_rate");
    size_t rows = 0;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 2);
  }

  // identical rerun: every artifact byte-for-byte
  CHECK(cmd_train(make_args(cfg, dir / "b")) == kExitOk);
  for (const char* f : {"checkpoint_120.json", "checkpoint_120.bin", "train_log.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  // the checkpoint reloads with all three nets
  const Checkpoint ck = load_checkpoint((dir / "a" / "checkpoint_120.json").string());
  CHECK(ck.step == 120);
  CHECK(ck.find("critic") != nullptr);
  CHECK(ck.find("ctrl") != nullptr);
  CHECK(ck.find("dstb") != nullptr);

  // eval-critic against the solved field: smoke + artifact with probe ladder
  CommandArgs ev = make_args(cfg, dir / "eval");
  ev.checkpoint_path = (dir / "a" / "checkpoint_120.json").string();
  ev.field_path = field;
  CHECK(cmd_eval_critic(ev) == kExitOk);
  const json evj = json::parse(slurp(dir / "eval" / "critic_eval.json"));
  CHECK(evj.contains("sign_agreement"));
  CHECK(evj.contains("mae"));
  CHECK(evj["probe"].size() == 4);  // rho ladder
  for (const json& p : evj["probe"]) {
    CHECK(p["violation_fraction"].get<double>() >= 0.0);
    CHECK(p["violation_fraction"].get<double>() <= 1.0);
  }

  // best-response training consumes the trained critic and a ctrl library
  CommandArgs br = make_args(cfg, dir / "br");
  br.checkpoint_path = (dir / "a" / "checkpoint_120.json").string();
  br.library = {(dir / "a" / "checkpoint_60.json").string(),
                (dir / "a" / "checkpoint_120.json").string()};
  CHECK(cmd_train_br(br) == kExitOk);
  CHECK(fs::exists(dir / "br" / "br_checkpoint.json"));
  const Checkpoint brck = load_checkpoint((dir / "br" / "br_checkpoint.json").string());
  CHECK(brck.find("critic") != nullptr);
  CHECK(brck.find("dstb") != nullptr);
  {
    std::istringstream log(slurp(dir / "br" / "train_br_log.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == "step,mean_critic_value");
  }

  // missing pieces are configuration errors
  CommandArgs br_bad = make_args(cfg, dir / "br2");
  br_bad.checkpoint_path = (dir / "a" / "checkpoint_120.json").string();
  CHECK_THROWS_AS(cmd_train_br(br_bad), ConfigError);  // no library
  CommandArgs ev_bad = make_args(cfg, dir / "eval2");
  ev_bad.checkpoint_path = ev.checkpoint_path;
  CHECK_THROWS_AS(cmd_eval_critic(ev_bad), ConfigError);  // no field
}

TEST_CASE("eval-critic is exact on a critic that replicates a constant field") {
  // A critic with zero weights and output bias c has max-min value c
  // everywhere; against the constant-c field the comparison must be exact.
  const fs::path dir = fresh_dir("evalstub");
  const fs::path cfg = write_config(dir, small_config());

  Grid grid(std::vector<GridDim>{{-1.2, 1.2, 41}, {-5.0, 5.0, 41}});
  const double c = 0.25;
  const ScalarField constant(grid, std::vector<double>(grid.node_count(), c), "constant");
  const fs::path field_path = dir / "constant_field.json";
  save_field(constant, field_path.string());

  MlpSpec spec = MlpSpec::make({4, 4, 1});  // input: state (2) + u (1) + d (1)
  Rng rng(1);
  Mlp stub(spec, rng);
  for (double& p : stub.params()) p = 0.0;
  stub.params().back() = c;  // final layer bias
  const fs::path ck_path = dir / "stub_checkpoint.json";
  save_checkpoint(ck_path.string(), {{"critic", stub}}, 0, 1, "stub");

  CommandArgs args = make_args(cfg, dir / "out");
  args.checkpoint_path = ck_path.string();
  args.field_path = field_path.string();
  CHECK(cmd_eval_critic(args) == kExitOk);

  const json evj = json::parse(slurp(dir / "out" / "critic_eval.json"));
  CHECK(evj["sign_agreement"] == 1.0);
  CHECK(evj["mae"] == 0.0);
  CHECK(evj["sign_nodes"].get<size_t>() == grid.node_count());
  CHECK(!evj.contains("probe"));  // no disturbance net in the checkpoint
}

TEST_CASE("installed binary honors the exit-code contract") {
  const fs::path dir = fresh_dir("bin");
  const fs::path cfg = write_config(dir, small_config());
  std::string out;

  // 0: success
  CHECK(run_cli("solve --config " + cfg.string() + " --out " + (dir / "ok").string(), &out) ==
        kExitOk);
  CHECK(out.find("solve: converged") != std::string::npos);
  CHECK(fs::exists(dir / "ok" / "value_field.json"));

  // 2: parse errors, missing/invalid inputs, unknown keys
  CHECK(run_cli("", &out) == kExitConfig);
  CHECK(run_cli("frobnicate", &out) == kExitConfig);
  CHECK(run_cli("solve", &out) == kExitConfig);  // --config required
  CHECK(run_cli("solve --config " + (dir / "missing.json").string(), &out) == kExitConfig);

  spit(dir / "broken.json", "{ not json");
  CHECK(run_cli("solve --config " + (dir / "broken.json").string(), &out) == kExitConfig);

  json bad_tol = small_config();
  bad_tol["solve"]["tolerance"] = 0.0;
  spit(dir / "bad_tol.json", bad_tol.dump(2));
  CHECK(run_cli("solve --config " + (dir / "bad_tol.json").string(), &out) == kExitConfig);
  CHECK(out.find("tolerance") != std::string::npos);

  json typo = small_config();
  typo["solve"]["tolerancee"] = 1e-6;
  spit(dir / "typo.json", typo.dump(2));
  CHECK(run_cli("solve --config " + (dir / "typo.json").string(), &out) == kExitConfig);
  CHECK(out.find("tolerancee") != std::string::npos);

  // 3: non-convergence, with the residual in the message
  json one_iter = small_config();
  one_iter["solve"]["max_iterations"] = 1;
  spit(dir / "one_iter.json", one_iter.dump(2));
  CHECK(run_cli("solve --config " + (dir / "one_iter.json").string() + " --out " +
                    (dir / "nc").string(),
                &out) == kExitNonConvergence);
  CHECK(out.find("residual") != std::string::npos);

  // help exits cleanly
  CHECK(run_cli("--help", &out) == 0);
  CHECK(out.find("solve") != std::string::npos);
}

TEST_CASE("installed binary produces byte-identical artifacts across reruns and threads") {
  const fs::path dir = fresh_dir("bin_detfiles");
  const fs::path cfg = write_config(dir, small_config());

  REQUIRE(run_cli("solve --config " + cfg.string() + " --out " + (dir / "r1").string()) == 0);
  REQUIRE(run_cli("solve --config " + cfg.string() + " --out " + (dir / "r2").string()) == 0);
  REQUIRE(run_cli("solve --config " + cfg.string() + " --out " + (dir / "r4").string() +
                  " --threads 4") == 0);
  for (const char* f : {"value_field.json", "solve_diagnostics.json", "resolved_config.json"}) {
    CHECK(slurp(dir / "r1" / f) == slurp(dir / "r2" / f));
    CHECK(slurp(dir / "r1" / f) == slurp(dir / "r4" / f));
  }

  // the seed override lands in the echoed config
  REQUIRE(run_cli("solve --config " + cfg.string() + " --out " + (dir / "s5").string() +
                  " --seed 5") == 0);
  const json echo = json::parse(slurp(dir / "s5" / "resolved_config.json"));
  CHECK(echo["seed"] == 5);

  // train end-to-end through the binary, twice; checkpoints match bitwise
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "t1").string()) == 0);
  REQUIRE(run_cli("train --config " + cfg.string() + " --out " + (dir / "t2").string()) == 0);
  for (const char* f : {"checkpoint_120.json", "checkpoint_120.bin", "train_log.csv"})
    CHECK(slurp(dir / "t1" / f) == slurp(dir / "t2" / f));
}
