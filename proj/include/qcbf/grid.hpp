#pragma once

#include <vector>

#include "qcbf/box.hpp"

namespace qcbf {

struct GridDim {
  double min = 0.0;
  double max = 0.0;
  int count = 0;  // >= 2
};

// Uniform rectangular grid, row-major (last dimension fastest).
class Grid {
 public:
  Grid() = default;
  explicit Grid(std::vector<GridDim> dims);

  size_t dim() const { return dims_.size(); }
  const std::vector<GridDim>& dims() const { return dims_; }
  int count(size_t i) const { return dims_[i].count; }
  double spacing(size_t i) const { return spacing_[i]; }
  size_t stride(size_t i) const { return stride_[i]; }
  size_t node_count() const { return nodes_; }

  double coord(size_t i, int j) const { return dims_[i].min + j * spacing_[i]; }
  Vec node(size_t flat) const;
  void node_ptr(size_t flat, double* out) const;
  size_t flat_index(const std::vector<int>& idx) const;

  // Cell index in [0, count-2] and fractional offset in [0, 1] along
  // dimension i. Coordinates equal to a node snap exactly; out-of-range
  // coordinates clamp to the boundary and set the flag.
  void locate(size_t i, double x, int& cell, double& frac, bool& clamped) const;

  Box hull() const;
  double cell_volume() const;

  bool operator==(const Grid& o) const { return dims_same(o); }

 private:
  bool dims_same(const Grid& o) const;

  std::vector<GridDim> dims_;
  std::vector<double> spacing_;
  std::vector<size_t> stride_;
  size_t nodes_ = 0;
};

}  // namespace qcbf
