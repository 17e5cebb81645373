#pragma once

#include "qcbf/system.hpp"

namespace qcbf {

inline constexpr double kPi = 3.14159265358979323846;

struct PendulumConfig {
  double dt = 0.01;
  int substeps = 1;
  double theta_failure = kPi / 3.0;
  double control_bound = 20.0;  // |u| <= 20
  double dstb_bound = 2.0;      // |F| <= 2
};

// theta'' = 10 sin(theta) + u/2 + (F/2) cos(theta)
void pendulum_derivative(double theta, double omega, double u, double F,
                         double& dtheta, double& domega);

// Inverted pendulum with torque control and an adversarial load F applied at
// the tip. Fixed-step RK4 with zero-order hold on (u, F); the angle is not
// wrapped. Safety margin: theta_failure - |theta|.
class PendulumSystem : public BlackBoxSystem {
 public:
  explicit PendulumSystem(PendulumConfig cfg = {});

  size_t state_dim() const override { return 2; }
  const Box& control_box() const override { return control_box_; }
  const Box& dstb_box() const override { return dstb_box_; }
  const PendulumConfig& config() const { return cfg_; }

  void step_raw(const double* x, const double* u, const double* d,
                double* out) const override;
  double margin_raw(const double* x) const override;

 private:
  PendulumConfig cfg_;
  Box control_box_;
  Box dstb_box_;
};

}  // namespace qcbf
