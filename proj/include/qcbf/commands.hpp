#pragma once

#include <string>
#include <vector>

#include "qcbf/config.hpp"

namespace qcbf {

// Exit codes shared by every subcommand: 0 success, 2 configuration or
// input error, 3 non-convergence, 4 numerical abort.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNonConvergence = 3;
inline constexpr int kExitNumerical = 4;

struct CommandArgs {
  std::string config_path;
  std::string out_dir = "out";
  bool seed_override = false;
  uint64_t seed = 0;
  int threads = 0;  // 0 = runtime default; never affects results or outputs
  std::string field_path;                // sets / rollout / eval-critic
  std::string checkpoint_path;           // eval-critic / train-br critic
  std::vector<std::string> library;      // train-br controller checkpoints
};

int cmd_solve(const CommandArgs& args);
int cmd_sets(const CommandArgs& args);
int cmd_rollout(const CommandArgs& args);
int cmd_train(const CommandArgs& args);
int cmd_train_br(const CommandArgs& args);
int cmd_eval_critic(const CommandArgs& args);

// Shared by every command: loads the config, applies the seed override,
// creates the output directory, and writes resolved_config.json beside the
// future outputs before any work starts.
ExperimentConfig prepare_run(const CommandArgs& args);

}  // namespace qcbf
