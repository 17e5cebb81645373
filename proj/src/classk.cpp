#include "qcbf/classk.hpp"

#include "qcbf/errors.hpp"

namespace qcbf {

ClassKMap ClassKMap::linear(double slope, bool one_step_valid) {
  if (one_step_valid) {
    if (!(slope > 0.0 && slope <= 1.0))
      throw ConfigError("class-K: one-step slope must lie in (0, 1]");
  } else if (!(slope > 0.0)) {
    throw ConfigError("class-K: slope must be positive");
  }
  ClassKMap m;
  m.kind_ = Kind::kLinear;
  m.slope_ = slope;
  m.one_step_valid_ = one_step_valid;
  return m;
}

ClassKMap ClassKMap::induced(double rate, double dt, int substeps) {
  if (!(rate > 0.0)) throw ConfigError("class-K: decay rate must be positive");
  if (!(dt > 0.0)) throw ConfigError("class-K: dt must be positive");
  if (substeps < 20) throw ConfigError("class-K: induced map needs at least 20 substeps");
  ClassKMap m;
  m.kind_ = Kind::kInduced;
  m.rate_ = rate;
  m.dt_ = dt;
  m.substeps_ = substeps;
  m.one_step_valid_ = true;
  return m;
}

double ClassKMap::apply(double r) const {
  if (kind_ == Kind::kLinear) return slope_ * r;
  if (r < 0.0) throw ContractError("class-K: induced map is undefined for negative input");
  const double h = dt_ / substeps_;
  double y = r;
  for (int s = 0; s < substeps_; ++s) {
    const double k1 = -rate_ * y;
    const double k2 = -rate_ * (y + 0.5 * h * k1);
    const double k3 = -rate_ * (y + 0.5 * h * k2);
    const double k4 = -rate_ * (y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

}  // namespace qcbf
