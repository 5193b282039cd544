#pragma once

// Dirichlet evidential posterior: pseudo-counts from class-conditional
// densities, prior update, three-way aggregation, and the closed-form
// expected log-likelihood / KL / entropy terms used for training and
// scoring.
//
// Two routes are provided for the same math: plain-value functions used at
// evaluation time, and Graph ops used in training. Tests hold them to each
// other.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "isap/diff/graph.hpp"

namespace isap::evidential {

inline constexpr double kPriorCount = 1.0;
/// Default total certainty budget, e^6.
inline const double kDefaultBudget = std::exp(6.0);
/// log(N_c) + log r(z|c) is clamped here before exponentiation.
inline constexpr double kLogEvidenceClamp = 30.0;

struct DirichletParams {
  std::vector<double> alpha;

  std::size_t classes() const { return alpha.size(); }
  double alpha0() const;
};

struct CategoricalMean {
  std::vector<double> xi_bar;
};

struct CertaintyBudget {
  std::vector<double> per_class;  // N_c
  double total = 0.0;             // B

  std::size_t classes() const { return per_class.size(); }
};

struct LossConfig {
  double lambda_agent = 1.0;
  double lambda_map = 1.0;
  double lambda_sc = 10.0;
  double kl_scale = 1e-5;
  double budget = kDefaultBudget;
};

/// N_c = B * counts_c / sum(counts). Throws ValidationError on all-zero counts.
CertaintyBudget certainty_budget(std::span<const std::size_t> class_counts,
                                 double total);

/// beta_c = N_c * exp(log_r_c) computed as exp(min(log N_c + log_r_c, 30));
/// classes with N_c = 0 get 0. Returns the number of clamped entries through
/// clamped_out when non-null.
std::vector<double> pseudo_counts(std::span<const double> log_r,
                                  const CertaintyBudget& budget,
                                  std::size_t* clamped_out = nullptr);

/// alpha = 1 + beta. Throws ValidationError on negative beta.
DirichletParams posterior(std::span<const double> beta);

/// Element-wise mean of three parameter vectors.
DirichletParams aggregate(const DirichletParams& agent, const DirichletParams& map,
                          const DirichletParams& social);

CategoricalMean categorical_mean(const DirichletParams& d);

/// argmax of the categorical mean, lowest index on ties.
std::size_t predict(const DirichletParams& d);

/// E_q[log p(label)] = psi(alpha_label) - psi(alpha0).
double expected_loglik(const DirichletParams& d, std::size_t label);

/// KL(Dir(alpha) || Dir(1)).
double kl_to_uniform(const DirichletParams& d);

/// -expected_loglik + kl_scale * kl_to_uniform, one sample.
double elbo_loss(const DirichletParams& d, std::size_t label, double kl_scale);

double total_loss(double elbo, double rec_agent, double rec_map, double rec_sc,
                  const LossConfig& cfg);

double categorical_entropy(const CategoricalMean& m);
/// Differential entropy of Dir(alpha).
double dirichlet_entropy(const DirichletParams& d);

// ---------------------------------------------------------------------------
// Graph route. Batched over rows: alpha/log_r are [batch, classes].

namespace ops {

diff::Var pseudo_counts(diff::Graph& g, diff::Var log_r,
                        const CertaintyBudget& budget);
diff::Var posterior(diff::Var beta);
diff::Var aggregate(diff::Var agent, diff::Var map, diff::Var social);
/// [batch] of psi(alpha_label) - psi(alpha0).
diff::Var expected_loglik(diff::Var alpha, std::span<const std::size_t> labels);
/// [batch] of KL(Dir(alpha_i) || Dir(1)).
diff::Var kl_to_uniform(diff::Var alpha);
/// [batch] of per-sample ELBO losses.
diff::Var elbo_loss(diff::Var alpha, std::span<const std::size_t> labels,
                    double kl_scale);

}  // namespace ops

}  // namespace isap::evidential
