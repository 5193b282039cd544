#pragma once

// Class-conditional densities over a low-dimensional latent space, one stack
// of radial flow layers per class. Densities are evaluated in the
// normalizing direction (latent -> standard normal base); the radial map has
// no closed-form inverse and sampling is not provided.
//
// Layer parameterization, per class c and layer k:
//   alpha = softplus(alpha_raw)           > 0
//   beta  = -alpha + softplus(beta_raw)   >= -alpha  (invertible)
//   r = |z - z0|, h = 1 / (alpha + r)
//   y = z + beta * h * (z - z0)
//   log|det J| = (D-1) log(1 + beta h) + log(1 + beta h - beta r h^2)

#include <cstddef>
#include <string>
#include <vector>

#include "isap/diff/nn.hpp"

namespace isap::flows {

inline constexpr std::size_t kDefaultLayers = 8;
inline constexpr std::size_t kDefaultLatentDim = 4;

struct RadialOutput {
  diff::Var y;       // same shape as the broadcast of z and z0
  diff::Var logdet;  // y's shape without the last axis
};

/// One radial layer applied to z (last axis D) with parameters that
/// broadcast against it: z0 [..., D], alpha_raw / beta_raw [...].
RadialOutput radial_apply(diff::Var z, diff::Var z0, diff::Var alpha_raw,
                          diff::Var beta_raw);

/// Raw parameter values giving effective (alpha, beta).
double alpha_raw_for(double alpha);
double beta_raw_for(double alpha, double beta);

/// log N(u; 0, I_D) summed over the last axis.
diff::Var standard_normal_log_density(diff::Var u);

/// K radial layers per class for `classes` classes, evaluated jointly.
/// A single ClassFlow is the classes == 1 case.
class RadialFlowStack {
 public:
  RadialFlowStack() = default;
  RadialFlowStack(std::string name, std::size_t classes, std::size_t dim,
                  std::size_t layers, Rng& rng);

  /// z: [batch, D] -> [batch, classes] of log r(z | c).
  diff::Var log_density(diff::Graph& g, diff::Var z);

  std::size_t classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  std::size_t layers() const { return z0_.size(); }

  void collect(diff::ParamList& out);

  /// Direct parameter access for tests and tooling.
  diff::Parameter& center(std::size_t layer) { return z0_[layer]; }
  diff::Parameter& alpha_raw(std::size_t layer) { return alpha_raw_[layer]; }
  diff::Parameter& beta_raw(std::size_t layer) { return beta_raw_[layer]; }

 private:
  std::size_t classes_ = 0;
  std::size_t dim_ = 0;
  std::vector<diff::Parameter> z0_;         // per layer [classes, D]
  std::vector<diff::Parameter> alpha_raw_;  // per layer [classes]
  std::vector<diff::Parameter> beta_raw_;   // per layer [classes]
};

/// Shared batch-norm over the latent followed by one flow stack per class.
class FlowBank {
 public:
  FlowBank() = default;
  FlowBank(std::string name, std::size_t classes, std::size_t dim,
           std::size_t layers, Rng& rng);

  /// z: [batch, D] -> [batch, classes]. train selects batch-norm mode.
  diff::Var log_densities(diff::Graph& g, diff::Var z, bool train);

  std::size_t classes() const { return flows_.classes(); }
  std::size_t dim() const { return flows_.dim(); }
  void collect(diff::ParamList& out);

  diff::BatchNorm1d& norm() { return norm_; }
  RadialFlowStack& flows() { return flows_; }

 private:
  diff::BatchNorm1d norm_;
  RadialFlowStack flows_;
};

}  // namespace isap::flows
