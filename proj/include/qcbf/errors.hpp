#pragma once

#include <stdexcept>
#include <string>

namespace qcbf {

// Invalid configuration or input data. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (out-of-box action, dimension
// mismatch, ...). These indicate bugs, not bad user input.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// An iterative solve stopped before reaching its tolerance. Carries enough
// state to report what happened. The CLI maps this to exit code 3.
struct NonConvergenceError : std::runtime_error {
  NonConvergenceError(const std::string& msg, int iterations_, double residual_)
      : std::runtime_error(msg), iterations(iterations_), residual(residual_) {}
  int iterations;
  double residual;
};

// A non-finite value appeared where one is not allowed. Exit code 4.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qcbf
