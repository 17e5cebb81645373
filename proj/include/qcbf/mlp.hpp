#pragma once

#include <vector>

#include "qcbf/box.hpp"
#include "qcbf/rng.hpp"

namespace qcbf {

struct MlpSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output
  // Output head: identity, or center + half*tanh(z) to pin outputs inside a
  // box (used by the actors).
  bool squash_output = false;
  Vec out_center, out_half;
  // Fixed affine input scaling (x - center) / half applied before layer 0.
  Vec in_center, in_half;

  static MlpSpec make(std::vector<int> sizes);
  static MlpSpec make_squashed(std::vector<int> sizes, const Box& out_box);
  MlpSpec& scaled_inputs(const Box& in_box);
  void validate() const;
};

// Fully connected net, tanh hidden units, flat contiguous parameter vector
// (per layer: row-major weights then biases). Reverse mode yields both the
// parameter gradient and the input gradient so critics can be differentiated
// through to actor outputs.
class Mlp {
 public:
  Mlp(MlpSpec spec, Rng& rng);  // uniform +/- sqrt(6/(fan_in+fan_out)) init
  Mlp(MlpSpec spec, Vec params);  // checkpoint restore

  const MlpSpec& spec() const { return spec_; }
  size_t param_count() const { return params_.size(); }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  int input_dim() const { return spec_.layer_sizes.front(); }
  int output_dim() const { return spec_.layer_sizes.back(); }

  struct Workspace {
    std::vector<Vec> act;  // act[0] = scaled input, act[L] = output
    std::vector<Vec> pre;  // pre[l] = pre-activation of layer l (1-based)
    Vec dact;              // scratch for the backward sweep
    Vec dx;                // gradient w.r.t. the raw (unscaled) input
  };
  Workspace make_workspace() const;

  void forward(const double* x, Workspace& ws) const;
  const Vec& output(const Workspace& ws) const { return ws.act.back(); }

  // dL/d(output) in dy. Accumulates the parameter gradient into dparams
  // (size param_count, caller-zeroed) when non-null; always fills ws.dx.
  // Requires ws to hold the forward pass of the same input.
  void backward(const double* dy, Workspace& ws, double* dparams) const;

  // Convenience for scalar-output nets.
  double value(const double* x, Workspace& ws) const;

 private:
  MlpSpec spec_;
  Vec params_;
  std::vector<size_t> w_off_, b_off_;  // per-layer offsets into params_
};

struct RmsProp {
  double lr = 1e-3;
  double decay = 0.999;
  double eps = 1e-8;
  Vec accum;

  explicit RmsProp(size_t n, double lr_) : lr(lr_), accum(n, 0.0) {}
  // params <- params - sign*lr * g / sqrt(accum + eps)
  void apply(Vec& params, const Vec& grad, double sign = 1.0);
};

}  // namespace qcbf
