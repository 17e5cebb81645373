#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "qcbf/errors.hpp"
#include "qcbf/pendulum.hpp"
#include "qcbf/rng.hpp"

using namespace qcbf;

namespace {

// Reference integration of one step with `mult` times finer substeps.
Vec fine_step(const Vec& x, double u, double F, double dt, int mult) {
  PendulumConfig cfg;
  cfg.dt = dt;
  cfg.substeps = mult;
  return PendulumSystem(cfg).step(x, {u}, {F});
}

}  // namespace

TEST_CASE("pendulum derivative matches the closed form") {
  double dt, dw;
  pendulum_derivative(0.0, 0.0, 0.0, 0.0, dt, dw);
  CHECK(dt == 0.0);
  CHECK(dw == 0.0);
  pendulum_derivative(kPi / 2.0, 1.0, 0.0, 0.0, dt, dw);
  CHECK(dt == 1.0);
  CHECK(dw == doctest::Approx(10.0).epsilon(1e-12));
  pendulum_derivative(0.0, 0.0, 20.0, 2.0, dt, dw);
  CHECK(dt == 0.0);
  CHECK(dw == doctest::Approx(11.0).epsilon(1e-15));
}

TEST_CASE("margin is the signed theta-distance to failure") {
  PendulumSystem sys;
  CHECK(sys.margin({0.0, 3.7}) == doctest::Approx(1.047198).epsilon(1e-6));
  CHECK(sys.margin({kPi / 3.0, 0.0}) == 0.0);
  CHECK(sys.margin({-kPi / 2.0, 0.0}) == doctest::Approx(-0.523599).epsilon(1e-6));
}

TEST_CASE("margin sign characterizes the failure set exactly") {
  PendulumSystem sys;
  Rng rng(5);
  for (int k = 0; k < 2000; ++k) {
    const double th = rng.uniform(-2.0, 2.0);
    const double om = rng.uniform(-6.0, 6.0);
    const bool failed = std::fabs(th) > sys.config().theta_failure;
    CHECK((sys.margin({th, om}) < 0.0) == failed);
  }
}

TEST_CASE("margin is continuous: finite differences respect the Lipschitz bound") {
  PendulumSystem sys;
  Rng rng(6);
  const double eps = 1e-5;
  for (int k = 0; k < 500; ++k) {
    const Vec x{rng.uniform(-1.5, 1.5), rng.uniform(-5.0, 5.0)};
    const double m = sys.margin(x);
    CHECK(std::fabs(sys.margin({x[0] + eps, x[1]}) - m) <= eps + 1e-12);
    CHECK(sys.margin({x[0], x[1] + eps}) == m);
  }
}

TEST_CASE("equilibrium is a fixed point of the step") {
  PendulumSystem sys;
  const Vec next = sys.step({0.0, 0.0}, {0.0}, {0.0});
  CHECK(next[0] == 0.0);
  CHECK(next[1] == 0.0);
}

TEST_CASE("uncontrolled upright pendulum falls") {
  PendulumSystem sys;
  const Vec next = sys.step({0.1, 0.0}, {0.0}, {0.0});
  CHECK(next[0] > 0.1);
  CHECK(next[1] > 0.0);
}

TEST_CASE("one step matches a 10x finer reference within 1e-8") {
  const Vec x{0.2, 0.5};
  PendulumSystem sys;
  const Vec coarse = sys.step(x, {-10.0}, {2.0});
  const Vec fine = fine_step(x, -10.0, 2.0, 0.01, 10);
  CHECK(std::fabs(coarse[0] - fine[0]) <= 1e-8);
  CHECK(std::fabs(coarse[1] - fine[1]) <= 1e-8);
}

TEST_CASE("integration shows fourth-order step-halving behavior") {
  Rng rng(9);
  int improved = 0;
  const int trials = 50;
  for (int k = 0; k < trials; ++k) {
    const Vec x{rng.uniform(-1.0, 1.0), rng.uniform(-4.0, 4.0)};
    const double u = rng.uniform(-20.0, 20.0);
    const double F = rng.uniform(-2.0, 2.0);
    const double dt = 0.04;
    const Vec ref = fine_step(x, u, F, dt, 40);
    const Vec full = fine_step(x, u, F, dt, 1);
    const Vec half = fine_step(x, u, F, dt, 2);
    const double e_full = std::hypot(full[0] - ref[0], full[1] - ref[1]);
    const double e_half = std::hypot(half[0] - ref[0], half[1] - ref[1]);
    if (e_full >= 8.0 * e_half) ++improved;
  }
  CHECK(improved >= trials - 2);
}

TEST_CASE("step is deterministic") {
  PendulumSystem sys;
  Rng rng(12);
  for (int k = 0; k < 200; ++k) {
    const Vec x{rng.uniform(-1.0, 1.0), rng.uniform(-5.0, 5.0)};
    const Vec u{rng.uniform(-20.0, 20.0)};
    const Vec d{rng.uniform(-2.0, 2.0)};
    const Vec a = sys.step(x, u, d);
    const Vec b = sys.step(x, u, d);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
  }
}

TEST_CASE("out-of-box inputs are contract errors") {
  PendulumSystem sys;
  CHECK_THROWS_AS(sys.step({0.0, 0.0}, {20.5}, {0.0}), ContractError);
  CHECK_THROWS_AS(sys.step({0.0, 0.0}, {0.0}, {-2.1}), ContractError);
  CHECK_THROWS_AS(sys.step({0.0, 0.0}, {0.0, 0.0}, {0.0}), ContractError);
  CHECK_THROWS_AS(sys.step({0.0}, {0.0}, {0.0}), ContractError);
  CHECK_THROWS_AS(sys.margin({0.0}), ContractError);
  CHECK_NOTHROW(sys.step({0.0, 0.0}, {20.0}, {2.0}));
}

TEST_CASE("pendulum config is validated") {
  PendulumConfig bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(PendulumSystem{bad}, ConfigError);
  bad = {};
  bad.substeps = 0;
  CHECK_THROWS_AS(PendulumSystem{bad}, ConfigError);
  bad = {};
  bad.theta_failure = -1.0;
  CHECK_THROWS_AS(PendulumSystem{bad}, ConfigError);
}

TEST_CASE("substeps refine the integration consistently") {
  const Vec x{0.3, -1.0};
  const Vec a = fine_step(x, 5.0, -1.0, 0.01, 1);
  const Vec b = fine_step(x, 5.0, -1.0, 0.01, 4);
  CHECK(std::fabs(a[0] - b[0]) < 1e-9);
  CHECK(std::fabs(a[1] - b[1]) < 1e-9);
  CHECK((a[0] != b[0] || a[1] != b[1]));
}
