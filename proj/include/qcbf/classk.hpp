#pragma once

namespace qcbf {

// Class-K decay map. Two roles share this type:
//  - the one-step comparison map beta used by the Q-CBF constraint, which
//    must satisfy beta(r) <= r (slope in (0,1], or the map induced by
//    integrating dy/dt = -rate*y over one control period);
//  - the continuous-time rate alpha used by the baseline filters, a plain
//    linear map with any positive slope.
class ClassKMap {
 public:
  enum class Kind { kLinear, kInduced };

  // one_step_valid asserts the beta(r) <= r requirement and restricts the
  // slope to (0,1]. Diagnostic/rate maps pass false and allow any slope > 0.
  static ClassKMap linear(double slope, bool one_step_valid = true);

  // Map induced by flowing dy/dt = -rate*y for dt with fixed-step RK4.
  static ClassKMap induced(double rate, double dt, int substeps = 20);

  double apply(double r) const;

  Kind kind() const { return kind_; }
  double slope() const { return slope_; }
  double rate() const { return rate_; }
  bool one_step_valid() const { return one_step_valid_; }

 private:
  ClassKMap() = default;

  Kind kind_ = Kind::kLinear;
  double slope_ = 1.0;
  double rate_ = 0.0;
  double dt_ = 0.0;
  int substeps_ = 0;
  bool one_step_valid_ = false;
};

}  // namespace qcbf
