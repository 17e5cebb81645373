// Times the parallel solver kernel against the serial reference engine on
// the pendulum game and verifies that both produce bit-identical fields.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "qcbf/isaacs.hpp"
#include "qcbf/pendulum.hpp"

using namespace qcbf;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int n = 61;
  double tol = 1e-4;
  if (argc > 1) n = std::atoi(argv[1]);
  if (argc > 2) tol = std::atof(argv[2]);
  if (n < 3 || !(tol > 0.0)) {
    std::fprintf(stderr, "usage: bench_sweep [grid points per axis >= 3] [tolerance > 0]\n");
    return 2;
  }

  PendulumSystem sys;
  Grid grid({{-1.2, 1.2, n}, {-5.0, 5.0, n}});
  SolveConfig cfg;
  cfg.tolerance = tol;
  cfg.max_iterations = 20000;
  cfg.control_points = 21;
  cfg.dstb_points = 11;

  std::printf("pendulum %dx%d grid, %d controls x %d disturbances\n", n, n,
              cfg.control_points, cfg.dstb_points);

  cfg.serial_reference = true;
  auto t0 = std::chrono::steady_clock::now();
  SolveResult ref = solve(sys, grid, cfg);
  const double t_ref = seconds_since(t0);
  std::printf("serial reference : %4d sweeps %8.3f s (%7.2f ms/sweep)\n",
              ref.diagnostics.iterations, t_ref, 1e3 * t_ref / ref.diagnostics.iterations);

  cfg.serial_reference = false;
  t0 = std::chrono::steady_clock::now();
  SolveResult par = solve(sys, grid, cfg);
  const double t_par = seconds_since(t0);
  std::printf("parallel kernel  : %4d sweeps %8.3f s (%7.2f ms/sweep)  speedup %.2fx\n",
              par.diagnostics.iterations, t_par, 1e3 * t_par / par.diagnostics.iterations,
              t_ref / t_par);

  const bool identical =
      ref.field.values().size() == par.field.values().size() &&
      std::memcmp(ref.field.values().data(), par.field.values().data(),
                  ref.field.values().size() * sizeof(double)) == 0;
  std::printf("fields bit-identical: %s\n", identical ? "yes" : "NO");
  return identical ? 0 : 1;
}
