#pragma once

#include <functional>
#include <string>
#include <utility>

#include "qcbf/mlp.hpp"
#include "qcbf/scalar_field.hpp"
#include "qcbf/system.hpp"

namespace qcbf {

// One replay tuple: the post-step margin g' = g(x') rides along so critic
// targets never re-query the system.
struct Transition {
  Vec x, u, d;
  double g_next = 0.0;
  Vec x_next;
};

// Bounded FIFO ring; push overwrites the oldest entry once full.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity);
  void push(Transition t);
  size_t size() const { return count_; }
  size_t capacity() const { return store_.size(); }
  const Transition& at(size_t i) const;  // i = 0 is the oldest retained
  void sample(size_t n, Rng& rng, std::vector<const Transition*>& out) const;

 private:
  std::vector<Transition> store_;
  size_t head_ = 0, count_ = 0;
};

struct GammaSchedule {
  double initial = 0.85;
  double final_value = 0.9999;
  int anneal_steps = 0;  // 0 resolves to 60% of total_steps
  double at(int step) const;
};

struct TrainConfig {
  GammaSchedule gamma;
  double lr_critic = 1e-3;
  double lr_ctrl = 2.5e-4;
  double timescale_ratio = 4.0;  // lr_dstb = ratio * lr_ctrl, must be > 1
  double tau = 0.005;            // target-critic soft update, in (0, 1]
  double explore_noise = 0.2;    // stddev as a fraction of box half-width
  int batch_size = 128;
  int total_steps = 200000;
  int eval_interval = 20000;
  int buffer_capacity = 100000;
  int warmup_steps = 2000;  // uniform-random action collection, no updates
  int episode_horizon = 200;
  std::vector<int> hidden = {64, 64};
  int eval_rollouts = 10;
  int eval_horizon = 200;
  uint64_t seed = 1;
  Box domain;  // episode reset distribution; episodes truncate on exit

  void validate() const;
  TrainConfig resolved() const;  // fills schedule defaults
};

struct Agents {
  Mlp critic, target_critic, ctrl, dstb;
};

// Freshly initialized nets sized for the system: critic (x,u,d)->R,
// controller x->U (squashed), disturbance (x,u)->D (squashed). Input scaling
// spans domain x control x disturbance; degenerate spans widen to 1 so the
// scaling stays finite.
Agents make_agents(const BlackBoxSystem& sys, const TrainConfig& cfg, Rng& rng);

using CriticFn = std::function<double(const Vec& x, const Vec& u, const Vec& d)>;
using CtrlFn = std::function<Vec(const Vec& x)>;
using DstbFn = std::function<Vec(const Vec& x, const Vec& u)>;

// Closure adapters (each owns a private workspace; not thread-safe).
CriticFn critic_fn(const Mlp& net);
CtrlFn ctrl_fn(const Mlp& net);
DstbFn dstb_fn(const Mlp& net);

// (1-gamma)*g' + gamma*min{g', target_critic(x', ctrl(x'), dstb(x', ctrl(x')))}
double critic_target(const Transition& t, const CriticFn& target_critic,
                     const CtrlFn& ctrl, const DstbFn& dstb, double gamma_env);

// Mean squared residual against constant targets.
double critic_loss(const std::vector<const Transition*>& batch, const CriticFn& critic,
                   const CriticFn& target_critic, const CtrlFn& ctrl, const DstbFn& dstb,
                   double gamma_env);

struct TrainScratch {
  Mlp::Workspace ws_critic, ws_target, ws_ctrl, ws_dstb;
  Vec grad_critic, grad_ctrl, grad_dstb;
  Vec in_critic, in_dstb, dy;
  std::vector<const Transition*> batch;
  Vec targets;
  double last_mean_q = 0.0;
};
TrainScratch make_scratch(const Agents& agents);

// Targets for a batch via the target critic and the current actors.
void critic_batch_targets(const Agents& agents, const std::vector<const Transition*>& batch,
                          double gamma_env, TrainScratch& s, Vec& out);

// Mean squared residual and its parameter gradient (both exact for the
// fixed batch/targets), written to grad.
double critic_batch_loss_grad(const Mlp& critic, const std::vector<const Transition*>& batch,
                              const Vec& targets, TrainScratch& s, Vec& grad);

// Mean over states of critic(x, ctrl(x), dstb(x, ctrl(x))). Fills the
// requested parameter gradients of that mean; the controller gradient
// includes the chain through the disturbance actor's control input.
double actor_objective_grad(const Mlp& critic, const Mlp& ctrl, const Mlp& dstb,
                            const std::vector<const Vec*>& states, TrainScratch& s,
                            Vec* grad_ctrl, Vec* grad_dstb);

// Mean critic value with (x,u) taken from stored transitions instead of the
// controller; gradient w.r.t. the disturbance parameters only.
double br_objective_grad(const Mlp& critic, const Mlp& dstb,
                         const std::vector<const Transition*>& batch, TrainScratch& s,
                         Vec& grad);

void soft_update(Vec& target, const Vec& source, double tau);

struct GdaState {
  RmsProp opt_critic, opt_ctrl, opt_dstb;
  TrainScratch scratch;
  std::vector<const Vec*> state_batch;
};
GdaState make_gda_state(const Agents& agents, const TrainConfig& cfg);

struct GdaDiagnostics {
  double critic_loss = 0.0;
  double mean_q = 0.0;   // critic on the sampled transitions
  double ctrl_obj = 0.0; // actor objective after both actor updates
  double gamma_env = 0.0;
};

// One coupled update on a sampled batch: critic regression, disturbance
// descent at timescale_ratio * lr_ctrl, controller ascent at lr_ctrl, then
// the target soft update. Throws NumericalError when a loss goes non-finite.
GdaDiagnostics gda_step(Agents& agents, GdaState& gs, const ReplayBuffer& buffer,
                        const TrainConfig& cfg, int step, Rng& rng);

struct EvalPoint {
  int step = 0;
  double critic_loss = 0.0;
  double mean_q = 0.0;
  double safe_rate = 0.0;  // noise-free actor rollouts from random resets
};

struct CheckpointSnapshot {
  int step = 0;
  Vec critic, ctrl, dstb;  // parameter vectors; architectures live in Agents
};

struct TrainResult {
  Agents agents;
  std::vector<CheckpointSnapshot> checkpoints;  // one per evaluation interval
  std::vector<EvalPoint> log;
};

TrainResult train_isaacs(const BlackBoxSystem& sys, const TrainConfig& cfg);

// Fresh disturbance net trained to minimize the frozen critic on (x,u)
// pairs generated by rolling out controllers sampled uniformly from the
// library (with exploration noise) against the in-training disturbance.
Mlp train_best_response(const Mlp& critic, const std::vector<Mlp>& library,
                        const BlackBoxSystem& sys, const TrainConfig& cfg,
                        std::vector<EvalPoint>* log = nullptr);

struct ProbeReport {
  double rho = 0.0;
  double tolerance = 0.0;
  int n_samples = 0;
  int n_perturbations = 0;
  double violation_fraction = 0.0;  // over sample x perturbation pairs
  double worst_drop = 0.0;          // largest observed critic decrease
};

// Perturbs the disturbance parameters uniformly in the radius-rho ball and
// counts (sample, perturbation) pairs where the perturbed policy beats the
// shipped one by more than the tolerance. Statistical probe, not a proof.
ProbeReport local_optimality_probe(const Mlp& dstb, const Mlp& critic,
                                   const std::vector<std::pair<Vec, Vec>>& xu_samples,
                                   double rho, int n_perturbations, Rng& rng,
                                   double tolerance = 1e-3);

// max over u_disc of min over d_disc of critic(x,u,d).
double neural_max_min(const Mlp& critic, const Vec& x, const std::vector<Vec>& u_disc,
                      const std::vector<Vec>& d_disc);

struct CriticEval {
  double sign_agreement = 0.0;  // nodes with |V| > sign_band
  size_t sign_nodes = 0;
  double mae = 0.0;  // all nodes
};
CriticEval eval_critic_field(const Mlp& critic, const ScalarField& V,
                             const BlackBoxSystem& sys, int control_points, int dstb_points,
                             double sign_band = 0.05);

struct NamedNet {
  std::string name;
  Mlp net;
};

// JSON header (architectures, step, seed, config hash, per-net offsets)
// plus one little-endian float64 parameter blob; round-trips bit-exactly.
void save_checkpoint(const std::string& path, const std::vector<NamedNet>& nets, int step,
                     uint64_t seed, const std::string& config_hash);

struct Checkpoint {
  int step = 0;
  uint64_t seed = 0;
  std::string config_hash;
  std::vector<NamedNet> nets;
  const Mlp* find(const std::string& name) const;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace qcbf
