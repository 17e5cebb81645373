#include "qcbf/grid.hpp"

#include <cmath>

#include "qcbf/errors.hpp"

namespace qcbf {

Box::Box(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw ContractError("box: bound dimensions differ");
  for (size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]))
      throw ContractError("box: non-finite bound");
    if (lower[i] > upper[i]) throw ContractError("box: lower bound above upper bound");
  }
}

bool Box::contains(const Vec& x) const {
  return x.size() == dim() && contains(x.data(), x.size());
}

bool Box::contains(const double* x, size_t n) const {
  if (n != dim()) return false;
  for (size_t i = 0; i < n; ++i)
    if (!(x[i] >= lower[i] && x[i] <= upper[i])) return false;
  return true;
}

Vec Box::clamp(const Vec& x) const {
  if (x.size() != dim()) throw ContractError("box: clamp dimension mismatch");
  Vec out(x);
  for (size_t i = 0; i < dim(); ++i) {
    if (out[i] < lower[i]) out[i] = lower[i];
    if (out[i] > upper[i]) out[i] = upper[i];
  }
  return out;
}

Vec Box::center() const {
  Vec c(dim());
  for (size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lower[i] + upper[i]);
  return c;
}

Vec Box::half_width() const {
  Vec h(dim());
  for (size_t i = 0; i < dim(); ++i) h[i] = 0.5 * (upper[i] - lower[i]);
  return h;
}

Grid::Grid(std::vector<GridDim> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw ContractError("grid: no dimensions");
  if (dims_.size() > 8) throw ContractError("grid: more than 8 dimensions");
  spacing_.resize(dims_.size());
  stride_.resize(dims_.size());
  nodes_ = 1;
  for (size_t i = 0; i < dims_.size(); ++i) {
    const GridDim& d = dims_[i];
    if (d.count < 2) throw ContractError("grid: dimension needs at least 2 nodes");
    if (!std::isfinite(d.min) || !std::isfinite(d.max) || !(d.min < d.max))
      throw ContractError("grid: invalid dimension bounds");
    spacing_[i] = (d.max - d.min) / (d.count - 1);
    nodes_ *= static_cast<size_t>(d.count);
  }
  size_t s = 1;
  for (size_t i = dims_.size(); i-- > 0;) {
    stride_[i] = s;
    s *= static_cast<size_t>(dims_[i].count);
  }
}

Vec Grid::node(size_t flat) const {
  Vec out(dim());
  node_ptr(flat, out.data());
  return out;
}

void Grid::node_ptr(size_t flat, double* out) const {
  for (size_t i = 0; i < dim(); ++i) {
    const size_t j = flat / stride_[i];
    flat -= j * stride_[i];
    out[i] = coord(i, static_cast<int>(j));
  }
}

size_t Grid::flat_index(const std::vector<int>& idx) const {
  if (idx.size() != dim()) throw ContractError("grid: index dimension mismatch");
  size_t flat = 0;
  for (size_t i = 0; i < dim(); ++i) {
    if (idx[i] < 0 || idx[i] >= dims_[i].count) throw ContractError("grid: index out of range");
    flat += stride_[i] * static_cast<size_t>(idx[i]);
  }
  return flat;
}

void Grid::locate(size_t i, double x, int& cell, double& frac, bool& clamped) const {
  const GridDim& d = dims_[i];
  clamped = false;
  if (x <= d.min) {
    cell = 0;
    frac = 0.0;
    clamped = x < d.min;
    return;
  }
  if (x >= d.max) {
    cell = d.count - 2;
    frac = 1.0;
    clamped = x > d.max;
    return;
  }
  int c = static_cast<int>((x - d.min) / spacing_[i]);
  if (c > d.count - 2) c = d.count - 2;
  // Rounding in the division can land one cell off near a node; fix up, then
  // snap exact node coordinates so nodal values reproduce exactly.
  if (x < coord(i, c) && c > 0) --c;
  if (x >= coord(i, c + 1) && c < d.count - 2) ++c;
  if (x == coord(i, c)) {
    cell = c;
    frac = 0.0;
    return;
  }
  if (x == coord(i, c + 1)) {
    cell = c;
    frac = 1.0;
    return;
  }
  cell = c;
  frac = (x - coord(i, c)) / spacing_[i];
  if (frac < 0.0) frac = 0.0;
  if (frac > 1.0) frac = 1.0;
}

Box Grid::hull() const {
  Vec lo(dim()), hi(dim());
  for (size_t i = 0; i < dim(); ++i) {
    lo[i] = dims_[i].min;
    hi[i] = dims_[i].max;
  }
  return Box(std::move(lo), std::move(hi));
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (size_t i = 0; i < dim(); ++i) v *= spacing_[i];
  return v;
}

bool Grid::dims_same(const Grid& o) const {
  if (dims_.size() != o.dims_.size()) return false;
  for (size_t i = 0; i < dims_.size(); ++i)
    if (dims_[i].min != o.dims_[i].min || dims_[i].max != o.dims_[i].max ||
        dims_[i].count != o.dims_[i].count)
      return false;
  return true;
}

}  // namespace qcbf
