#pragma once

#include "qcbf/box.hpp"

namespace qcbf {

// Behavioral contract for a controlled system with a bounded adversarial
// input. Everything downstream (grid solver, filters, training, rollouts)
// interacts with a system only through this interface, so closed-form model
// knowledge cannot leak out of the implementing class.
class BlackBoxSystem {
 public:
  virtual ~BlackBoxSystem() = default;

  virtual size_t state_dim() const = 0;
  virtual const Box& control_box() const = 0;
  virtual const Box& dstb_box() const = 0;

  // One control period. Validates that u and d lie inside their boxes
  // (callers clamp; an out-of-box action is a contract error).
  Vec step(const Vec& x, const Vec& u, const Vec& d) const;
  double margin(const Vec& x) const;

  // Unchecked, allocation-free variants for grid sweeps over pre-validated
  // discretizations.
  virtual void step_raw(const double* x, const double* u, const double* d,
                        double* out) const = 0;
  virtual double margin_raw(const double* x) const = 0;
};

}  // namespace qcbf
