#pragma once

#include <cstdint>
#include <vector>

#include "isap/diff/graph.hpp"

namespace isap::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p <- p - lr * wd * p
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

/// One Adam update of a single tensor at (already incremented) step t.
/// Throws NumericalError on a non-finite gradient.
void adam_update(const AdamConfig& cfg, std::uint64_t t, Tensor& param,
                 const Tensor& grad, Tensor& m, Tensor& v);

/// Adam over a fixed parameter list; gradients are read from Parameter::grad.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void zero_grad();
  void step();

  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }

 private:
  std::vector<Parameter*> params_;
  AdamState state_;
};

}  // namespace isap::diff
