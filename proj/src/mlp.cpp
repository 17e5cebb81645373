#include "qcbf/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "qcbf/errors.hpp"

namespace qcbf {

MlpSpec MlpSpec::make(std::vector<int> sizes) {
  MlpSpec s;
  s.layer_sizes = std::move(sizes);
  s.validate();
  return s;
}

MlpSpec MlpSpec::make_squashed(std::vector<int> sizes, const Box& out_box) {
  MlpSpec s;
  s.layer_sizes = std::move(sizes);
  s.squash_output = true;
  s.out_center = out_box.center();
  s.out_half = out_box.half_width();
  s.validate();
  return s;
}

MlpSpec& MlpSpec::scaled_inputs(const Box& in_box) {
  in_center = in_box.center();
  in_half = in_box.half_width();
  for (double h : in_half)
    if (h <= 0.0) throw ContractError("mlp: input scaling needs a non-degenerate box");
  validate();
  return *this;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw ContractError("mlp: need at least input and output sizes");
  for (int n : layer_sizes)
    if (n < 1) throw ContractError("mlp: layer sizes must be positive");
  const size_t out = static_cast<size_t>(layer_sizes.back());
  if (squash_output && (out_center.size() != out || out_half.size() != out))
    throw ContractError("mlp: output box dimension mismatch");
  if (!in_center.empty() && in_center.size() != static_cast<size_t>(layer_sizes.front()))
    throw ContractError("mlp: input scaling dimension mismatch");
}

static size_t layout_offsets(const std::vector<int>& ls, std::vector<size_t>& w_off,
                             std::vector<size_t>& b_off) {
  size_t total = 0;
  for (size_t l = 1; l < ls.size(); ++l) {
    w_off.push_back(total);
    total += static_cast<size_t>(ls[l]) * static_cast<size_t>(ls[l - 1]);
    b_off.push_back(total);
    total += static_cast<size_t>(ls[l]);
  }
  return total;
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  const auto& ls = spec_.layer_sizes;
  params_.assign(layout_offsets(ls, w_off_, b_off_), 0.0);
  for (size_t l = 1; l < ls.size(); ++l) {
    const double a = std::sqrt(6.0 / (ls[l] + ls[l - 1]));
    double* w = params_.data() + w_off_[l - 1];
    const size_t nw = static_cast<size_t>(ls[l]) * static_cast<size_t>(ls[l - 1]);
    for (size_t i = 0; i < nw; ++i) w[i] = rng.uniform(-a, a);
    // biases stay zero
  }
}

Mlp::Mlp(MlpSpec spec, Vec params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  const size_t total = layout_offsets(spec_.layer_sizes, w_off_, b_off_);
  if (params_.size() != total)
    throw ContractError("mlp: parameter vector has " + std::to_string(params_.size()) +
                        " entries, layout needs " + std::to_string(total));
}

Mlp::Workspace Mlp::make_workspace() const {
  Workspace ws;
  const auto& ls = spec_.layer_sizes;
  ws.act.resize(ls.size());
  ws.pre.resize(ls.size());
  int widest = 0;
  for (size_t l = 0; l < ls.size(); ++l) {
    ws.act[l].assign(static_cast<size_t>(ls[l]), 0.0);
    if (l > 0) ws.pre[l].assign(static_cast<size_t>(ls[l]), 0.0);
    widest = std::max(widest, ls[l]);
  }
  ws.dact.assign(static_cast<size_t>(widest), 0.0);
  ws.dx.assign(static_cast<size_t>(ls[0]), 0.0);
  return ws;
}

void Mlp::forward(const double* x, Workspace& ws) const {
  const auto& ls = spec_.layer_sizes;
  const size_t in = static_cast<size_t>(ls[0]);
  if (spec_.in_center.empty()) {
    for (size_t i = 0; i < in; ++i) ws.act[0][i] = x[i];
  } else {
    for (size_t i = 0; i < in; ++i)
      ws.act[0][i] = (x[i] - spec_.in_center[i]) / spec_.in_half[i];
  }
  const size_t L = ls.size() - 1;
  for (size_t l = 1; l <= L; ++l) {
    const size_t rows = static_cast<size_t>(ls[l]);
    const size_t cols = static_cast<size_t>(ls[l - 1]);
    const double* w = params_.data() + w_off_[l - 1];
    const double* b = params_.data() + b_off_[l - 1];
    const double* a = ws.act[l - 1].data();
    for (size_t r = 0; r < rows; ++r) {
      const double* wr = w + r * cols;
      double s = 0.0;
      for (size_t c = 0; c < cols; ++c) s += wr[c] * a[c];
      ws.pre[l][r] = s + b[r];
    }
    if (l < L) {
      for (size_t r = 0; r < rows; ++r) ws.act[l][r] = std::tanh(ws.pre[l][r]);
    } else if (spec_.squash_output) {
      for (size_t r = 0; r < rows; ++r)
        ws.act[l][r] = spec_.out_center[r] + spec_.out_half[r] * std::tanh(ws.pre[l][r]);
    } else {
      for (size_t r = 0; r < rows; ++r) ws.act[l][r] = ws.pre[l][r];
    }
  }
}

void Mlp::backward(const double* dy, Workspace& ws, double* dparams) const {
  const auto& ls = spec_.layer_sizes;
  const size_t L = ls.size() - 1;
  // ws.dact holds dL/d(pre[l]) while walking layers backward.
  {
    const size_t rows = static_cast<size_t>(ls[L]);
    if (spec_.squash_output) {
      for (size_t r = 0; r < rows; ++r) {
        const double t = std::tanh(ws.pre[L][r]);
        ws.dact[r] = dy[r] * spec_.out_half[r] * (1.0 - t * t);
      }
    } else {
      for (size_t r = 0; r < rows; ++r) ws.dact[r] = dy[r];
    }
  }
  for (size_t l = L; l >= 1; --l) {
    const size_t rows = static_cast<size_t>(ls[l]);
    const size_t cols = static_cast<size_t>(ls[l - 1]);
    const double* w = params_.data() + w_off_[l - 1];
    const double* a = ws.act[l - 1].data();
    if (dparams) {
      double* dw = dparams + w_off_[l - 1];
      double* db = dparams + b_off_[l - 1];
      for (size_t r = 0; r < rows; ++r) {
        const double g = ws.dact[r];
        double* dwr = dw + r * cols;
        for (size_t c = 0; c < cols; ++c) dwr[c] += g * a[c];
        db[r] += g;
      }
    }
    // Propagate into the previous layer's activations, then through tanh.
    Vec& down = (l == 1) ? ws.dx : ws.pre[l - 1];  // reuse pre as scratch
    if (l == 1) {
      for (size_t c = 0; c < cols; ++c) {
        double s = 0.0;
        for (size_t r = 0; r < rows; ++r) s += w[r * cols + c] * ws.dact[r];
        down[c] = spec_.in_center.empty() ? s : s / spec_.in_half[c];
      }
      break;
    }
    for (size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (size_t r = 0; r < rows; ++r) s += w[r * cols + c] * ws.dact[r];
      const double t = ws.act[l - 1][c];
      down[c] = s * (1.0 - t * t);
    }
    for (size_t c = 0; c < cols; ++c) ws.dact[c] = down[c];
  }
}

double Mlp::value(const double* x, Workspace& ws) const {
  if (output_dim() != 1) throw ContractError("mlp: value() needs a scalar output");
  forward(x, ws);
  return ws.act.back()[0];
}

void RmsProp::apply(Vec& params, const Vec& grad, double sign) {
  if (params.size() != accum.size() || grad.size() != accum.size())
    throw ContractError("rmsprop: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    accum[i] = decay * accum[i] + (1.0 - decay) * grad[i] * grad[i];
    params[i] -= sign * lr * grad[i] / std::sqrt(accum[i] + eps);
  }
}

}  // namespace qcbf
