#include <cstdio>
#include <exception>

#include "CLI11.hpp"
#include "qcbf/commands.hpp"
#include "qcbf/errors.hpp"

namespace {

void add_common(CLI::App* cmd, qcbf::CommandArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON, schema 1)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory (default ./out)");
  auto* seed = cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->parse_complete_callback([seed, &args] { args.seed_override = seed->count() > 0; });
  cmd->add_option("--threads", args.threads,
                  "solver thread count (0 = runtime default; never changes results)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust safety-certificate toolkit: grid game solver, safety "
               "filters, adversarial training, rollout studies"};
  app.require_subcommand(1);

  qcbf::CommandArgs args;
  int (*run)(const qcbf::CommandArgs&) = nullptr;

  auto* solve = app.add_subcommand("solve", "solve the grid safety game and write the value field");
  add_common(solve, args);
  solve->callback([&run] { run = qcbf::cmd_solve; });

  auto* sets = app.add_subcommand("sets", "safe-set metrics for the certificates");
  add_common(sets, args);
  sets->add_option("--field", args.field_path, "value field JSON")->required();
  sets->add_option("--checkpoint", args.checkpoint_path, "optional critic checkpoint");
  sets->callback([&run] { run = qcbf::cmd_sets; });

  auto* rollout = app.add_subcommand("rollout", "filter x disturbance rollout matrix");
  add_common(rollout, args);
  rollout->add_option("--field", args.field_path, "value field JSON");
  rollout->callback([&run] { run = qcbf::cmd_rollout; });

  auto* train = app.add_subcommand("train", "adversarial actor-critic training");
  add_common(train, args);
  train->callback([&run] { run = qcbf::cmd_train; });

  auto* trainbr = app.add_subcommand("train-br", "best-response disturbance training");
  add_common(trainbr, args);
  trainbr->add_option("--checkpoint", args.checkpoint_path, "checkpoint providing the critic")
      ->required();
  trainbr->add_option("--library", args.library, "controller checkpoint (repeatable)")
      ->required();
  trainbr->callback([&run] { run = qcbf::cmd_train_br; });

  auto* evalc = app.add_subcommand("eval-critic", "compare a critic checkpoint to a value field");
  add_common(evalc, args);
  evalc->add_option("--checkpoint", args.checkpoint_path, "checkpoint to evaluate")->required();
  evalc->add_option("--field", args.field_path, "reference value field")->required();
  evalc->callback([&run] { run = qcbf::cmd_eval_critic; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : qcbf::kExitConfig;
  }

  try {
    return run(args);
  } catch (const qcbf::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return qcbf::kExitConfig;
  } catch (const qcbf::NonConvergenceError& e) {
    std::fprintf(stderr, "non-convergence: %s\n", e.what());
    return qcbf::kExitNonConvergence;
  } catch (const qcbf::NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return qcbf::kExitNumerical;
  } catch (const qcbf::ContractError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return qcbf::kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return qcbf::kExitConfig;
  }
}
