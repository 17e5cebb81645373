#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace qcbf {

// Deterministic PRNG. The engine sequence is pinned by the standard; the
// distributions are hand-coded because standard-library distributions are
// implementation-defined and would break bit-reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t bits() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the polar method; no cached spare so the draw count
  // per call stays self-contained.
  double normal() {
    for (;;) {
      const double a = 2.0 * uniform() - 1.0;
      const double b = 2.0 * uniform() - 1.0;
      const double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  // Uniform index in [0, n).
  size_t index(size_t n) {
    size_t i = static_cast<size_t>(uniform() * static_cast<double>(n));
    return i >= n ? n - 1 : i;
  }

  // Independent child stream; depends only on (seed, tag), not on draw order.
  Rng fork(uint64_t tag) const { return Rng(mix(seed_ ^ mix(tag))); }

 private:
  static uint64_t mix(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace qcbf
