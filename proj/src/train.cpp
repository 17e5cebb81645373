#include "qcbf/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "qcbf/errors.hpp"
#include "qcbf/isaacs.hpp"

namespace qcbf {

namespace {

Vec concat2(const Vec& a, const Vec& b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void fill_concat(Vec& out, const double* a, size_t na, const double* b, size_t nb,
                 const double* c = nullptr, size_t nc = 0) {
  out.resize(na + nb + nc);
  std::memcpy(out.data(), a, na * sizeof(double));
  std::memcpy(out.data() + na, b, nb * sizeof(double));
  if (c) std::memcpy(out.data() + na + nb, c, nc * sizeof(double));
}

Box concat_box(const Box& a, const Box& b) {
  Box out = a;
  out.lower.insert(out.lower.end(), b.lower.begin(), b.lower.end());
  out.upper.insert(out.upper.end(), b.upper.begin(), b.upper.end());
  return out;
}

// Degenerate spans widen to half-width 1 so input scaling stays finite; the
// scaled coordinate is then constant, which is what a collapsed box means.
Box widened(Box b) {
  for (size_t i = 0; i < b.lower.size(); ++i)
    if (b.upper[i] <= b.lower[i]) {
      b.lower[i] -= 1.0;
      b.upper[i] += 1.0;
    }
  return b;
}

void sample_box(const Box& box, Rng& rng, Vec& out) {
  out.resize(box.lower.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * rng.uniform();
}

// Deterministic actor output plus clipped Gaussian exploration.
void noisy_action(const Vec& mean, const Box& box, double noise, Rng& rng, Vec& out) {
  out.resize(mean.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double half = 0.5 * (box.upper[i] - box.lower[i]);
    double v = mean[i] + noise * half * rng.normal();
    out[i] = std::min(box.upper[i], std::max(box.lower[i], v));
  }
}

}  // namespace

ReplayBuffer::ReplayBuffer(size_t capacity) {
  if (capacity < 1) throw ContractError("replay buffer: capacity must be >= 1");
  store_.resize(capacity);
}

void ReplayBuffer::push(Transition t) {
  store_[head_] = std::move(t);
  head_ = (head_ + 1) % store_.size();
  if (count_ < store_.size()) ++count_;
}

const Transition& ReplayBuffer::at(size_t i) const {
  if (i >= count_) throw ContractError("replay buffer: index out of range");
  const size_t oldest = (count_ < store_.size()) ? 0 : head_;
  return store_[(oldest + i) % store_.size()];
}

void ReplayBuffer::sample(size_t n, Rng& rng, std::vector<const Transition*>& out) const {
  if (count_ == 0) throw ContractError("replay buffer: sampling from empty buffer");
  out.resize(n);
  for (size_t i = 0; i < n; ++i) out[i] = &store_[rng.index(count_)];
}

double GammaSchedule::at(int step) const {
  if (anneal_steps <= 0 || step >= anneal_steps) return final_value;
  if (step <= 0) return initial;
  return initial + (final_value - initial) * (static_cast<double>(step) / anneal_steps);
}

void TrainConfig::validate() const {
  if (gamma.initial <= 0.0 || gamma.initial >= 1.0 || gamma.final_value <= 0.0 ||
      gamma.final_value >= 1.0)
    throw ConfigError("train: gamma schedule values must lie in (0,1)");
  if (lr_critic <= 0.0 || lr_ctrl <= 0.0) throw ConfigError("train: learning rates must be positive");
  if (timescale_ratio <= 1.0)
    throw ConfigError("train: timescale_ratio must exceed 1 (disturbance learns faster)");
  if (tau <= 0.0 || tau > 1.0) throw ConfigError("train: tau must lie in (0,1]");
  if (explore_noise < 0.0) throw ConfigError("train: explore_noise must be >= 0");
  if (batch_size < 1 || total_steps < 1 || eval_interval < 1 || episode_horizon < 1 ||
      eval_horizon < 1 || eval_rollouts < 0)
    throw ConfigError("train: counts must be positive");
  if (buffer_capacity < batch_size) throw ConfigError("train: buffer smaller than a batch");
  if (warmup_steps < batch_size)
    throw ConfigError("train: warmup must fill at least one batch");
  if (hidden.empty()) throw ConfigError("train: need at least one hidden layer");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train: hidden widths must be positive");
  if (domain.lower.empty()) throw ConfigError("train: domain box is required");
  for (size_t i = 0; i < domain.lower.size(); ++i)
    if (domain.upper[i] <= domain.lower[i])
      throw ConfigError("train: domain box must be non-degenerate");
}

TrainConfig TrainConfig::resolved() const {
  TrainConfig c = *this;
  if (c.gamma.anneal_steps <= 0)
    c.gamma.anneal_steps = std::max(1, static_cast<int>(0.6 * c.total_steps));
  return c;
}

Agents make_agents(const BlackBoxSystem& sys, const TrainConfig& cfg, Rng& rng) {
  if (cfg.domain.lower.size() != sys.state_dim())
    throw ConfigError("train: domain box dimension does not match the system state");
  const Box& U = sys.control_box();
  const Box& D = sys.dstb_box();
  const int sx = static_cast<int>(sys.state_dim());
  const int su = static_cast<int>(U.lower.size());
  const int sd = static_cast<int>(D.lower.size());

  std::vector<int> critic_sizes{sx + su + sd};
  std::vector<int> ctrl_sizes{sx};
  std::vector<int> dstb_sizes{sx + su};
  for (int h : cfg.hidden) {
    critic_sizes.push_back(h);
    ctrl_sizes.push_back(h);
    dstb_sizes.push_back(h);
  }
  critic_sizes.push_back(1);
  ctrl_sizes.push_back(su);
  dstb_sizes.push_back(sd);

  const Box xu = concat_box(cfg.domain, widened(U));
  const Box xud = concat_box(xu, widened(D));

  MlpSpec critic_spec = MlpSpec::make(critic_sizes).scaled_inputs(xud);
  MlpSpec ctrl_spec = MlpSpec::make_squashed(ctrl_sizes, U).scaled_inputs(cfg.domain);
  MlpSpec dstb_spec = MlpSpec::make_squashed(dstb_sizes, D).scaled_inputs(xu);

  Rng r_critic = rng.fork(11), r_ctrl = rng.fork(12), r_dstb = rng.fork(13);
  Mlp critic(critic_spec, r_critic);
  Mlp target = critic;
  Mlp ctrl(ctrl_spec, r_ctrl);
  Mlp dstb(dstb_spec, r_dstb);
  return Agents{std::move(critic), std::move(target), std::move(ctrl), std::move(dstb)};
}

CriticFn critic_fn(const Mlp& net) {
  auto ws = std::make_shared<Mlp::Workspace>(net.make_workspace());
  const Mlp* p = &net;
  return [p, ws](const Vec& x, const Vec& u, const Vec& d) {
    Vec in = concat2(concat2(x, u), d);
    if (static_cast<int>(in.size()) != p->input_dim())
      throw ContractError("critic: input dimension mismatch");
    return p->value(in.data(), *ws);
  };
}

CtrlFn ctrl_fn(const Mlp& net) {
  auto ws = std::make_shared<Mlp::Workspace>(net.make_workspace());
  const Mlp* p = &net;
  return [p, ws](const Vec& x) {
    if (static_cast<int>(x.size()) != p->input_dim())
      throw ContractError("controller: input dimension mismatch");
    p->forward(x.data(), *ws);
    return p->output(*ws);
  };
}

DstbFn dstb_fn(const Mlp& net) {
  auto ws = std::make_shared<Mlp::Workspace>(net.make_workspace());
  const Mlp* p = &net;
  return [p, ws](const Vec& x, const Vec& u) {
    Vec in = concat2(x, u);
    if (static_cast<int>(in.size()) != p->input_dim())
      throw ContractError("disturbance: input dimension mismatch");
    p->forward(in.data(), *ws);
    return p->output(*ws);
  };
}

double critic_target(const Transition& t, const CriticFn& target_critic, const CtrlFn& ctrl,
                     const DstbFn& dstb, double gamma_env) {
  const Vec u2 = ctrl(t.x_next);
  const Vec d2 = dstb(t.x_next, u2);
  const double q = target_critic(t.x_next, u2, d2);
  return (1.0 - gamma_env) * t.g_next + gamma_env * std::min(t.g_next, q);
}

double critic_loss(const std::vector<const Transition*>& batch, const CriticFn& critic,
                   const CriticFn& target_critic, const CtrlFn& ctrl, const DstbFn& dstb,
                   double gamma_env) {
  if (batch.empty()) throw ContractError("critic_loss: empty batch");
  double sum = 0.0;
  for (const Transition* t : batch) {
    const double y = critic_target(*t, target_critic, ctrl, dstb, gamma_env);
    const double r = critic(t->x, t->u, t->d) - y;
    sum += r * r;
  }
  return sum / static_cast<double>(batch.size());
}

static TrainScratch scratch_for(const Mlp& critic, const Mlp* ctrl, const Mlp& dstb) {
  TrainScratch s;
  s.ws_critic = critic.make_workspace();
  s.ws_target = critic.make_workspace();
  if (ctrl) s.ws_ctrl = ctrl->make_workspace();
  s.ws_dstb = dstb.make_workspace();
  s.grad_critic.assign(critic.param_count(), 0.0);
  if (ctrl) s.grad_ctrl.assign(ctrl->param_count(), 0.0);
  s.grad_dstb.assign(dstb.param_count(), 0.0);
  int widest_out = std::max(critic.output_dim(), dstb.output_dim());
  if (ctrl) widest_out = std::max(widest_out, ctrl->output_dim());
  s.dy.assign(static_cast<size_t>(widest_out), 0.0);
  return s;
}

TrainScratch make_scratch(const Agents& agents) {
  return scratch_for(agents.critic, &agents.ctrl, agents.dstb);
}

void critic_batch_targets(const Agents& agents, const std::vector<const Transition*>& batch,
                          double gamma_env, TrainScratch& s, Vec& out) {
  out.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    agents.ctrl.forward(t.x_next.data(), s.ws_ctrl);
    const Vec& u2 = agents.ctrl.output(s.ws_ctrl);
    fill_concat(s.in_dstb, t.x_next.data(), t.x_next.size(), u2.data(), u2.size());
    agents.dstb.forward(s.in_dstb.data(), s.ws_dstb);
    const Vec& d2 = agents.dstb.output(s.ws_dstb);
    fill_concat(s.in_critic, t.x_next.data(), t.x_next.size(), u2.data(), u2.size(), d2.data(),
                d2.size());
    agents.target_critic.forward(s.in_critic.data(), s.ws_target);
    const double q = agents.target_critic.output(s.ws_target)[0];
    out[i] = (1.0 - gamma_env) * t.g_next + gamma_env * std::min(t.g_next, q);
  }
}

double critic_batch_loss_grad(const Mlp& critic, const std::vector<const Transition*>& batch,
                              const Vec& targets, TrainScratch& s, Vec& grad) {
  if (batch.empty() || targets.size() != batch.size())
    throw ContractError("critic_batch_loss_grad: batch/target size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0, mean_q = 0.0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    fill_concat(s.in_critic, t.x.data(), t.x.size(), t.u.data(), t.u.size(), t.d.data(),
                t.d.size());
    critic.forward(s.in_critic.data(), s.ws_critic);
    const double q = critic.output(s.ws_critic)[0];
    const double r = q - targets[i];
    loss += r * r;
    mean_q += q;
    s.dy[0] = 2.0 * r * inv;
    critic.backward(s.dy.data(), s.ws_critic, grad.data());
  }
  s.last_mean_q = mean_q * inv;
  return loss * inv;
}

double actor_objective_grad(const Mlp& critic, const Mlp& ctrl, const Mlp& dstb,
                            const std::vector<const Vec*>& states, TrainScratch& s,
                            Vec* grad_ctrl, Vec* grad_dstb) {
  if (states.empty()) throw ContractError("actor_objective_grad: empty state batch");
  if (grad_ctrl) std::fill(grad_ctrl->begin(), grad_ctrl->end(), 0.0);
  if (grad_dstb) std::fill(grad_dstb->begin(), grad_dstb->end(), 0.0);
  const size_t sx = static_cast<size_t>(ctrl.input_dim());
  const size_t su = static_cast<size_t>(ctrl.output_dim());
  const double inv = 1.0 / static_cast<double>(states.size());
  double mean = 0.0;
  for (const Vec* xp : states) {
    ctrl.forward(xp->data(), s.ws_ctrl);
    const Vec& u = ctrl.output(s.ws_ctrl);
    fill_concat(s.in_dstb, xp->data(), sx, u.data(), su);
    dstb.forward(s.in_dstb.data(), s.ws_dstb);
    const Vec& d = dstb.output(s.ws_dstb);
    fill_concat(s.in_critic, xp->data(), sx, u.data(), su, d.data(), d.size());
    critic.forward(s.in_critic.data(), s.ws_critic);
    mean += critic.output(s.ws_critic)[0];
    if (!grad_ctrl && !grad_dstb) continue;
    s.dy[0] = inv;
    critic.backward(s.dy.data(), s.ws_critic, nullptr);
    const double* dQdu = s.ws_critic.dx.data() + sx;
    const double* dQdd = dQdu + su;
    dstb.backward(dQdd, s.ws_dstb, grad_dstb ? grad_dstb->data() : nullptr);
    if (grad_ctrl) {
      // direct dQ/du plus the chain through the disturbance's control input
      for (size_t j = 0; j < su; ++j) s.dy[j] = dQdu[j] + s.ws_dstb.dx[sx + j];
      ctrl.backward(s.dy.data(), s.ws_ctrl, grad_ctrl->data());
    }
  }
  return mean * inv;
}

double br_objective_grad(const Mlp& critic, const Mlp& dstb,
                         const std::vector<const Transition*>& batch, TrainScratch& s,
                         Vec& grad) {
  if (batch.empty()) throw ContractError("br_objective_grad: empty batch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  double mean = 0.0;
  for (const Transition* t : batch) {
    fill_concat(s.in_dstb, t->x.data(), t->x.size(), t->u.data(), t->u.size());
    dstb.forward(s.in_dstb.data(), s.ws_dstb);
    const Vec& d = dstb.output(s.ws_dstb);
    fill_concat(s.in_critic, t->x.data(), t->x.size(), t->u.data(), t->u.size(), d.data(),
                d.size());
    critic.forward(s.in_critic.data(), s.ws_critic);
    mean += critic.output(s.ws_critic)[0];
    s.dy[0] = inv;
    critic.backward(s.dy.data(), s.ws_critic, nullptr);
    const double* dQdd = s.ws_critic.dx.data() + t->x.size() + t->u.size();
    dstb.backward(dQdd, s.ws_dstb, grad.data());
  }
  return mean * inv;
}

void soft_update(Vec& target, const Vec& source, double tau) {
  if (target.size() != source.size()) throw ContractError("soft_update: size mismatch");
  for (size_t i = 0; i < target.size(); ++i)
    target[i] = tau * source[i] + (1.0 - tau) * target[i];
}

GdaState make_gda_state(const Agents& agents, const TrainConfig& cfg) {
  return GdaState{RmsProp(agents.critic.param_count(), cfg.lr_critic),
                  RmsProp(agents.ctrl.param_count(), cfg.lr_ctrl),
                  RmsProp(agents.dstb.param_count(), cfg.timescale_ratio * cfg.lr_ctrl),
                  make_scratch(agents),
                  {}};
}

GdaDiagnostics gda_step(Agents& agents, GdaState& gs, const ReplayBuffer& buffer,
                        const TrainConfig& cfg, int step, Rng& rng) {
  TrainScratch& s = gs.scratch;
  buffer.sample(static_cast<size_t>(cfg.batch_size), rng, s.batch);
  const double gamma = cfg.gamma.at(step);

  critic_batch_targets(agents, s.batch, gamma, s, s.targets);
  const double loss = critic_batch_loss_grad(agents.critic, s.batch, s.targets, s, s.grad_critic);
  if (!std::isfinite(loss))
    throw NumericalError("gda_step: non-finite critic loss at step " + std::to_string(step));
  gs.opt_critic.apply(agents.critic.params(), s.grad_critic);

  gs.state_batch.clear();
  for (const Transition* t : s.batch) gs.state_batch.push_back(&t->x);
  actor_objective_grad(agents.critic, agents.ctrl, agents.dstb, gs.state_batch, s, nullptr,
                       &s.grad_dstb);
  gs.opt_dstb.apply(agents.dstb.params(), s.grad_dstb);  // disturbance descends

  const double obj = actor_objective_grad(agents.critic, agents.ctrl, agents.dstb,
                                          gs.state_batch, s, &s.grad_ctrl, nullptr);
  if (!std::isfinite(obj))
    throw NumericalError("gda_step: non-finite actor objective at step " + std::to_string(step));
  gs.opt_ctrl.apply(agents.ctrl.params(), s.grad_ctrl, -1.0);  // controller ascends

  soft_update(agents.target_critic.params(), agents.critic.params(), cfg.tau);
  return GdaDiagnostics{loss, s.last_mean_q, obj, gamma};
}

// Noise-free rollouts of the current actor pair from margin-nonnegative
// uniform resets; diagnostic only.
static double eval_safe_rate(const BlackBoxSystem& sys, const Agents& agents,
                             const TrainConfig& cfg, Rng rng) {
  if (cfg.eval_rollouts == 0) return 0.0;
  Mlp::Workspace wc = agents.ctrl.make_workspace();
  Mlp::Workspace wd = agents.dstb.make_workspace();
  Vec x, in_d;
  int safe = 0;
  for (int r = 0; r < cfg.eval_rollouts; ++r) {
    sample_box(cfg.domain, rng, x);
    for (int tries = 0; tries < 1000 && sys.margin(x) < 0.0; ++tries)
      sample_box(cfg.domain, rng, x);
    bool ok = sys.margin(x) >= 0.0;
    for (int t = 0; ok && t < cfg.eval_horizon; ++t) {
      agents.ctrl.forward(x.data(), wc);
      const Vec& u = agents.ctrl.output(wc);
      fill_concat(in_d, x.data(), x.size(), u.data(), u.size());
      agents.dstb.forward(in_d.data(), wd);
      x = sys.step(x, u, agents.dstb.output(wd));
      ok = sys.margin(x) >= 0.0;
      if (!cfg.domain.contains(x)) break;  // left the training domain, not unsafe
    }
    if (ok) ++safe;
  }
  return static_cast<double>(safe) / cfg.eval_rollouts;
}

TrainResult train_isaacs(const BlackBoxSystem& sys, const TrainConfig& raw) {
  const TrainConfig cfg = raw.resolved();
  cfg.validate();
  Rng root(cfg.seed);
  Rng r_init = root.fork(1), r_env = root.fork(2), r_batch = root.fork(3), r_eval = root.fork(4);

  TrainResult result{make_agents(sys, cfg, r_init), {}, {}};
  Agents& a = result.agents;
  ReplayBuffer buffer(static_cast<size_t>(cfg.buffer_capacity));
  GdaState gs = make_gda_state(a, cfg);
  Mlp::Workspace wc = a.ctrl.make_workspace();
  Mlp::Workspace wd = a.dstb.make_workspace();

  const Box& U = sys.control_box();
  const Box& D = sys.dstb_box();
  Vec x, u, d, in_d;
  sample_box(cfg.domain, r_env, x);
  int ep_steps = 0;
  double acc_loss = 0.0, acc_q = 0.0;
  int acc_n = 0;

  for (int step = 0; step < cfg.total_steps; ++step) {
    if (step < cfg.warmup_steps) {
      sample_box(U, r_env, u);
      sample_box(D, r_env, d);
    } else {
      a.ctrl.forward(x.data(), wc);
      noisy_action(a.ctrl.output(wc), U, cfg.explore_noise, r_env, u);
      fill_concat(in_d, x.data(), x.size(), u.data(), u.size());
      a.dstb.forward(in_d.data(), wd);
      noisy_action(a.dstb.output(wd), D, cfg.explore_noise, r_env, d);
    }
    Vec xn = sys.step(x, u, d);
    const double gn = sys.margin(xn);
    buffer.push(Transition{x, u, d, gn, xn});
    ++ep_steps;
    if (gn < 0.0 || ep_steps >= cfg.episode_horizon || !cfg.domain.contains(xn)) {
      sample_box(cfg.domain, r_env, x);
      ep_steps = 0;
    } else {
      x = std::move(xn);
    }

    if (step >= cfg.warmup_steps) {
      const GdaDiagnostics dg = gda_step(a, gs, buffer, cfg, step, r_batch);
      acc_loss += dg.critic_loss;
      acc_q += dg.mean_q;
      ++acc_n;
    }

    if ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.total_steps) {
      EvalPoint ev;
      ev.step = step + 1;
      ev.critic_loss = acc_n ? acc_loss / acc_n : 0.0;
      ev.mean_q = acc_n ? acc_q / acc_n : 0.0;
      ev.safe_rate = eval_safe_rate(sys, a, cfg, r_eval.fork(static_cast<uint64_t>(step + 1)));
      result.log.push_back(ev);
      result.checkpoints.push_back(
          CheckpointSnapshot{step + 1, a.critic.params(), a.ctrl.params(), a.dstb.params()});
      acc_loss = acc_q = 0.0;
      acc_n = 0;
    }
  }
  return result;
}

Mlp train_best_response(const Mlp& critic, const std::vector<Mlp>& library,
                        const BlackBoxSystem& sys, const TrainConfig& raw,
                        std::vector<EvalPoint>* log) {
  const TrainConfig cfg = raw.resolved();
  cfg.validate();
  if (library.empty()) throw ConfigError("train_best_response: empty controller library");
  const Box& U = sys.control_box();
  const Box& D = sys.dstb_box();
  const int sx = static_cast<int>(sys.state_dim());
  const int su = static_cast<int>(U.lower.size());
  for (const Mlp& c : library)
    if (c.input_dim() != sx || c.output_dim() != su)
      throw ConfigError("train_best_response: library controller has wrong shape");
  if (critic.input_dim() != sx + su + static_cast<int>(D.lower.size()))
    throw ConfigError("train_best_response: critic shape does not match the system");

  Rng root(cfg.seed);
  Rng r_init = root.fork(21), r_env = root.fork(22), r_batch = root.fork(23);

  std::vector<int> dstb_sizes{sx + su};
  for (int h : cfg.hidden) dstb_sizes.push_back(h);
  dstb_sizes.push_back(static_cast<int>(D.lower.size()));
  const Box xu = concat_box(cfg.domain, widened(U));
  Mlp dstb(MlpSpec::make_squashed(dstb_sizes, D).scaled_inputs(xu), r_init);

  RmsProp opt(dstb.param_count(), cfg.timescale_ratio * cfg.lr_ctrl);
  ReplayBuffer buffer(static_cast<size_t>(cfg.buffer_capacity));
  TrainScratch s = scratch_for(critic, nullptr, dstb);
  Mlp::Workspace wd = dstb.make_workspace();

  Vec x, u, d, in_d;
  sample_box(cfg.domain, r_env, x);
  int ep_steps = 0;
  size_t lib_i = r_env.index(library.size());
  Mlp::Workspace wlib = library[lib_i].make_workspace();
  double acc_obj = 0.0;
  int acc_n = 0;

  for (int step = 0; step < cfg.total_steps; ++step) {
    if (step < cfg.warmup_steps) {
      sample_box(U, r_env, u);
      sample_box(D, r_env, d);
    } else {
      library[lib_i].forward(x.data(), wlib);
      noisy_action(library[lib_i].output(wlib), U, cfg.explore_noise, r_env, u);
      fill_concat(in_d, x.data(), x.size(), u.data(), u.size());
      dstb.forward(in_d.data(), wd);
      noisy_action(dstb.output(wd), D, cfg.explore_noise, r_env, d);
    }
    Vec xn = sys.step(x, u, d);
    const double gn = sys.margin(xn);
    buffer.push(Transition{x, u, d, gn, xn});
    ++ep_steps;
    if (gn < 0.0 || ep_steps >= cfg.episode_horizon || !cfg.domain.contains(xn)) {
      sample_box(cfg.domain, r_env, x);
      ep_steps = 0;
      lib_i = r_env.index(library.size());
      wlib = library[lib_i].make_workspace();
    } else {
      x = std::move(xn);
    }

    if (step >= cfg.warmup_steps) {
      buffer.sample(static_cast<size_t>(cfg.batch_size), r_batch, s.batch);
      const double obj = br_objective_grad(critic, dstb, s.batch, s, s.grad_dstb);
      if (!std::isfinite(obj))
        throw NumericalError("train_best_response: non-finite objective at step " +
                             std::to_string(step));
      opt.apply(dstb.params(), s.grad_dstb);
      acc_obj += obj;
      ++acc_n;
    }

    if (log && ((step + 1) % cfg.eval_interval == 0 || step + 1 == cfg.total_steps)) {
      log->push_back(EvalPoint{step + 1, 0.0, acc_n ? acc_obj / acc_n : 0.0, 0.0});
      acc_obj = 0.0;
      acc_n = 0;
    }
  }
  return dstb;
}

ProbeReport local_optimality_probe(const Mlp& dstb, const Mlp& critic,
                                   const std::vector<std::pair<Vec, Vec>>& xu_samples,
                                   double rho, int n_perturbations, Rng& rng,
                                   double tolerance) {
  if (xu_samples.empty()) throw ContractError("probe: need at least one (x,u) sample");
  if (n_perturbations < 1) throw ContractError("probe: need at least one perturbation");
  if (rho < 0.0 || tolerance < 0.0) throw ContractError("probe: rho and tolerance must be >= 0");

  Mlp::Workspace wd = dstb.make_workspace();
  Mlp::Workspace wq = critic.make_workspace();
  Vec in_d, in_q;
  auto critic_under = [&](const Mlp& policy, const Vec& x, const Vec& u) {
    fill_concat(in_d, x.data(), x.size(), u.data(), u.size());
    policy.forward(in_d.data(), wd);
    const Vec& d = policy.output(wd);
    fill_concat(in_q, x.data(), x.size(), u.data(), u.size(), d.data(), d.size());
    return critic.value(in_q.data(), wq);
  };

  Vec base(xu_samples.size());
  for (size_t i = 0; i < xu_samples.size(); ++i)
    base[i] = critic_under(dstb, xu_samples[i].first, xu_samples[i].second);

  const size_t P = dstb.param_count();
  Mlp pert = dstb;
  Vec dir(P);
  long long violations = 0;
  double worst = 0.0;
  for (int k = 0; k < n_perturbations; ++k) {
    double norm2 = 0.0;
    for (size_t i = 0; i < P; ++i) {
      dir[i] = rng.normal();
      norm2 += dir[i] * dir[i];
    }
    const double radius =
        rho * std::pow(rng.uniform(), 1.0 / static_cast<double>(P));  // uniform in the ball
    const double scale = norm2 > 0.0 ? radius / std::sqrt(norm2) : 0.0;
    for (size_t i = 0; i < P; ++i) pert.params()[i] = dstb.params()[i] + scale * dir[i];
    for (size_t i = 0; i < xu_samples.size(); ++i) {
      const double q = critic_under(pert, xu_samples[i].first, xu_samples[i].second);
      const double drop = base[i] - q;
      if (drop > tolerance) ++violations;
      worst = std::max(worst, drop);
    }
  }
  ProbeReport rep;
  rep.rho = rho;
  rep.tolerance = tolerance;
  rep.n_samples = static_cast<int>(xu_samples.size());
  rep.n_perturbations = n_perturbations;
  rep.violation_fraction =
      static_cast<double>(violations) /
      (static_cast<double>(xu_samples.size()) * static_cast<double>(n_perturbations));
  rep.worst_drop = worst;
  return rep;
}

double neural_max_min(const Mlp& critic, const Vec& x, const std::vector<Vec>& u_disc,
                      const std::vector<Vec>& d_disc) {
  if (u_disc.empty() || d_disc.empty())
    throw ContractError("neural_max_min: empty discretization");
  Mlp::Workspace ws = critic.make_workspace();
  Vec in(static_cast<size_t>(critic.input_dim()));
  double best = -std::numeric_limits<double>::infinity();
  for (const Vec& u : u_disc) {
    double worst = std::numeric_limits<double>::infinity();
    for (const Vec& d : d_disc) {
      fill_concat(in, x.data(), x.size(), u.data(), u.size(), d.data(), d.size());
      worst = std::min(worst, critic.value(in.data(), ws));
    }
    best = std::max(best, worst);
  }
  return best;
}

CriticEval eval_critic_field(const Mlp& critic, const ScalarField& V,
                             const BlackBoxSystem& sys, int control_points, int dstb_points,
                             double sign_band) {
  const auto u_disc = discretize_box(sys.control_box(), control_points);
  const auto d_disc = discretize_box(sys.dstb_box(), dstb_points);
  const Grid& grid = V.grid();
  Mlp::Workspace ws = critic.make_workspace();
  Vec x(grid.dim()), in(static_cast<size_t>(critic.input_dim()));
  CriticEval ev;
  size_t agree = 0;
  double abs_sum = 0.0;
  for (size_t i = 0; i < grid.node_count(); ++i) {
    grid.node_ptr(i, x.data());
    double best = -std::numeric_limits<double>::infinity();
    for (const Vec& u : u_disc) {
      double worst = std::numeric_limits<double>::infinity();
      for (const Vec& d : d_disc) {
        fill_concat(in, x.data(), x.size(), u.data(), u.size(), d.data(), d.size());
        worst = std::min(worst, critic.value(in.data(), ws));
      }
      best = std::max(best, worst);
    }
    const double v = V.values()[i];
    abs_sum += std::abs(best - v);
    if (std::abs(v) > sign_band) {
      ++ev.sign_nodes;
      if ((best >= 0.0) == (v >= 0.0)) ++agree;
    }
  }
  ev.mae = abs_sum / static_cast<double>(grid.node_count());
  ev.sign_agreement = ev.sign_nodes ? static_cast<double>(agree) / ev.sign_nodes : 1.0;
  return ev;
}

static nlohmann::json spec_to_json(const MlpSpec& s) {
  nlohmann::json j;
  j["layer_sizes"] = s.layer_sizes;
  j["squash_output"] = s.squash_output;
  j["out_center"] = s.out_center;
  j["out_half"] = s.out_half;
  j["in_center"] = s.in_center;
  j["in_half"] = s.in_half;
  return j;
}

static MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  s.squash_output = j.at("squash_output").get<bool>();
  s.out_center = j.at("out_center").get<Vec>();
  s.out_half = j.at("out_half").get<Vec>();
  s.in_center = j.at("in_center").get<Vec>();
  s.in_half = j.at("in_half").get<Vec>();
  s.validate();
  return s;
}

void save_checkpoint(const std::string& path, const std::vector<NamedNet>& nets, int step,
                     uint64_t seed, const std::string& config_hash) {
  if (nets.empty()) throw ContractError("checkpoint: nothing to save");
  nlohmann::json header;
  header["schema"] = 1;
  header["kind"] = "mlp-checkpoint";
  header["step"] = step;
  header["seed"] = seed;
  header["config_hash"] = config_hash;
  header["created_unix"] = creation_timestamp();

  std::filesystem::path bp(path);
  bp.replace_extension(".bin");
  header["params_file"] = bp.filename().string();

  nlohmann::json list = nlohmann::json::array();
  size_t offset = 0;
  for (const NamedNet& n : nets) {
    nlohmann::json e;
    e["name"] = n.name;
    e["spec"] = spec_to_json(n.net.spec());
    e["offset"] = offset;
    e["count"] = n.net.param_count();
    offset += n.net.param_count();
    list.push_back(e);
  }
  header["nets"] = list;

  std::ofstream bin(bp, std::ios::binary | std::ios::trunc);
  if (!bin) throw ConfigError("cannot write " + bp.string());
  for (const NamedNet& n : nets)
    bin.write(reinterpret_cast<const char*>(n.net.params().data()),
              static_cast<std::streamsize>(n.net.param_count() * sizeof(double)));
  if (!bin) throw ConfigError("short write to " + bp.string());
  bin.close();

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << header.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("bad checkpoint " + path + ": " + e.what());
  }
  try {
    if (header.at("kind").get<std::string>() != "mlp-checkpoint")
      throw ConfigError("not a checkpoint file: " + path);
    if (header.at("schema").get<int>() != 1)
      throw ConfigError("unsupported checkpoint schema in " + path);
    Checkpoint ck;
    ck.step = header.at("step").get<int>();
    ck.seed = header.at("seed").get<uint64_t>();
    ck.config_hash = header.value("config_hash", std::string());

    const std::filesystem::path bp = std::filesystem::path(path).parent_path() /
                                     header.at("params_file").get<std::string>();
    std::ifstream bin(bp, std::ios::binary);
    if (!bin) throw ConfigError("cannot read " + bp.string());
    bin.seekg(0, std::ios::end);
    const std::streamsize bytes = bin.tellg();
    bin.seekg(0, std::ios::beg);
    if (bytes < 0 || bytes % static_cast<std::streamsize>(sizeof(double)) != 0)
      throw ConfigError("corrupt parameter blob " + bp.string());
    std::vector<double> params(static_cast<size_t>(bytes) / sizeof(double));
    bin.read(reinterpret_cast<char*>(params.data()), bytes);
    if (bin.gcount() != bytes) throw ConfigError("truncated parameter blob " + bp.string());

    for (const auto& e : header.at("nets")) {
      const size_t off = e.at("offset").get<size_t>();
      const size_t cnt = e.at("count").get<size_t>();
      if (off + cnt > params.size())
        throw ConfigError("parameter blob too small for " + path);
      Vec slice(params.begin() + static_cast<long>(off),
                params.begin() + static_cast<long>(off + cnt));
      ck.nets.push_back(NamedNet{e.at("name").get<std::string>(),
                                 Mlp(spec_from_json(e.at("spec")), std::move(slice))});
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint " + path + ": " + e.what());
  }
}

const Mlp* Checkpoint::find(const std::string& name) const {
  for (const NamedNet& n : nets)
    if (n.name == name) return &n.net;
  return nullptr;
}

}  // namespace qcbf
