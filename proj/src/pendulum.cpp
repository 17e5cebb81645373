#include "qcbf/pendulum.hpp"

#include <cmath>

#include "qcbf/errors.hpp"

namespace qcbf {

Vec BlackBoxSystem::step(const Vec& x, const Vec& u, const Vec& d) const {
  if (x.size() != state_dim()) throw ContractError("step: state dimension mismatch");
  if (!control_box().contains(u)) throw ContractError("step: control outside its box");
  if (!dstb_box().contains(d)) throw ContractError("step: disturbance outside its box");
  Vec out(state_dim());
  step_raw(x.data(), u.data(), d.data(), out.data());
  return out;
}

double BlackBoxSystem::margin(const Vec& x) const {
  if (x.size() != state_dim()) throw ContractError("margin: state dimension mismatch");
  return margin_raw(x.data());
}

void pendulum_derivative(double theta, double omega, double u, double F,
                         double& dtheta, double& domega) {
  dtheta = omega;
  domega = 10.0 * std::sin(theta) + 0.5 * u + 0.5 * F * std::cos(theta);
}

PendulumSystem::PendulumSystem(PendulumConfig cfg) : cfg_(cfg) {
  if (!(cfg_.dt > 0.0)) throw ConfigError("pendulum: dt must be positive");
  if (cfg_.substeps < 1) throw ConfigError("pendulum: substeps must be at least 1");
  if (!(cfg_.theta_failure > 0.0)) throw ConfigError("pendulum: failure angle must be positive");
  if (cfg_.control_bound < 0.0 || cfg_.dstb_bound < 0.0)
    throw ConfigError("pendulum: negative input bound");
  control_box_ = Box({-cfg_.control_bound}, {cfg_.control_bound});
  dstb_box_ = Box({-cfg_.dstb_bound}, {cfg_.dstb_bound});
}

void PendulumSystem::step_raw(const double* x, const double* u, const double* d,
                              double* out) const {
  const double uu = u[0];
  const double F = d[0];
  const double h = cfg_.dt / cfg_.substeps;
  double th = x[0];
  double om = x[1];
  for (int s = 0; s < cfg_.substeps; ++s) {
    double k1t, k1o, k2t, k2o, k3t, k3o, k4t, k4o;
    pendulum_derivative(th, om, uu, F, k1t, k1o);
    pendulum_derivative(th + 0.5 * h * k1t, om + 0.5 * h * k1o, uu, F, k2t, k2o);
    pendulum_derivative(th + 0.5 * h * k2t, om + 0.5 * h * k2o, uu, F, k3t, k3o);
    pendulum_derivative(th + h * k3t, om + h * k3o, uu, F, k4t, k4o);
    th += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    om += h / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o);
  }
  out[0] = th;
  out[1] = om;
}

double PendulumSystem::margin_raw(const double* x) const {
  return cfg_.theta_failure - std::fabs(x[0]);
}

}  // namespace qcbf
