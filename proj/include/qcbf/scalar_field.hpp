#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "qcbf/grid.hpp"

namespace qcbf {

// Values on grid nodes, flat row-major, all finite. Carries a label and the
// parameters it was produced with so saved fields are self-describing.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(Grid grid, std::vector<double> values, std::string label = "",
              nlohmann::json params = nlohmann::json::object());

  const Grid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  const std::string& label() const { return label_; }
  const nlohmann::json& params() const { return params_; }

  double at(size_t flat) const { return values_[flat]; }

  // Multilinear interpolation; out-of-hull points clamp to the boundary.
  double interpolate(const Vec& x) const;
  double interpolate(const Vec& x, bool& clamped) const;
  double interpolate_ptr(const double* x, size_t n, bool& clamped) const;

 private:
  Grid grid_;
  std::vector<double> values_;
  std::string label_;
  nlohmann::json params_;
};

// Shared interpolation core; ScalarField::interpolate and the solver sweep
// kernels both go through this so their results are bit-identical.
double interpolate_raw(const Grid& grid, const double* values, const double* x,
                       bool& clamped);

// Weighted corner sum for a located cell: `base` is the flat index of the low
// corner, `frac` the per-axis fractions. interpolate_raw and the solver's
// precomputed-stencil path share this exact arithmetic.
inline double corner_sum(const Grid& grid, const double* values, size_t base,
                         const double* frac) {
  const size_t dim = grid.dim();
  if (dim == 2) {
    const size_t s0 = grid.stride(0), s1 = grid.stride(1);
    const double f0 = frac[0], f1 = frac[1];
    double acc = 0.0;
    acc += ((1.0 - f0) * (1.0 - f1)) * values[base];
    acc += (f0 * (1.0 - f1)) * values[base + s0];
    acc += ((1.0 - f0) * f1) * values[base + s1];
    acc += (f0 * f1) * values[base + s0 + s1];
    return acc;
  }
  double acc = 0.0;
  const unsigned corners = 1u << dim;
  for (unsigned m = 0; m < corners; ++m) {
    double w = 1.0;
    size_t idx = base;
    for (size_t i = 0; i < dim; ++i) {
      const unsigned hi = (m >> i) & 1u;
      w *= hi ? frac[i] : 1.0 - frac[i];
      idx += grid.stride(i) * hi;
    }
    acc += w * values[idx];
  }
  return acc;
}

// mask[i] = values[i] >= level
std::vector<uint8_t> superlevel_mask(const ScalarField& f, double level);

// Number of distinct node values (cheap id for tests).
size_t count_superlevel(const ScalarField& f, double level);

// Field files are a JSON header plus the node values, inline when the node
// count is at most kInlineValueLimit, otherwise in a sibling little-endian
// float64 .bin file named in the header. Round-trips are bit-exact.
inline constexpr size_t kInlineValueLimit = 65536;

// Timestamp recorded in saved headers. Honors SOURCE_DATE_EPOCH so runs can
// be made byte-reproducible; falls back to wall-clock time.
int64_t creation_timestamp();

void save_field(const ScalarField& f, const std::string& json_path,
                int64_t created_unix = creation_timestamp());
ScalarField load_field(const std::string& json_path);

}  // namespace qcbf
