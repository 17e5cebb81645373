#pragma once

#include <vector>

namespace qcbf {

using Vec = std::vector<double>;

// Axis-aligned box. Degenerate dimensions (lower == upper) are allowed and
// model collapsed action sets such as a zero-disturbance system.
struct Box {
  Vec lower, upper;

  Box() = default;
  Box(Vec lo, Vec hi);  // validates finiteness and lower <= upper

  size_t dim() const { return lower.size(); }
  bool degenerate(size_t i) const { return lower[i] == upper[i]; }

  bool contains(const Vec& x) const;
  bool contains(const double* x, size_t n) const;
  Vec clamp(const Vec& x) const;
  Vec center() const;
  Vec half_width() const;
};

}  // namespace qcbf
