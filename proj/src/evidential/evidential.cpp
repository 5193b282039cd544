#include "isap/evidential.hpp"

#include <algorithm>
#include <numeric>

#include "isap/diff/ops.hpp"
#include "isap/diff/special.hpp"
#include "isap/errors.hpp"

namespace isap::evidential {

using diff::digamma;
using diff::lgamma;

double DirichletParams::alpha0() const {
  return std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

CertaintyBudget certainty_budget(std::span<const std::size_t> class_counts,
                                 double total) {
  const std::size_t n = std::accumulate(class_counts.begin(), class_counts.end(),
                                        std::size_t{0});
  if (n == 0) throw ValidationError("certainty budget: all class counts are zero");
  if (!(total > 0.0)) throw ValidationError("certainty budget: total must be positive");
  CertaintyBudget b;
  b.total = total;
  b.per_class.reserve(class_counts.size());
  for (std::size_t c : class_counts)
    b.per_class.push_back(total * double(c) / double(n));
  return b;
}

std::vector<double> pseudo_counts(std::span<const double> log_r,
                                  const CertaintyBudget& budget,
                                  std::size_t* clamped_out) {
  if (log_r.size() != budget.classes())
    throw ShapeError("pseudo_counts: class count mismatch");
  std::size_t clamped = 0;
  std::vector<double> beta(log_r.size(), 0.0);
  for (std::size_t c = 0; c < log_r.size(); ++c) {
    const double n_c = budget.per_class[c];
    if (n_c <= 0.0) continue;
    double log_beta = std::log(n_c) + log_r[c];
    if (log_beta > kLogEvidenceClamp) {
      log_beta = kLogEvidenceClamp;
      ++clamped;
    }
    beta[c] = std::exp(log_beta);
  }
  if (clamped_out) *clamped_out = clamped;
  return beta;
}

DirichletParams posterior(std::span<const double> beta) {
  DirichletParams d;
  d.alpha.reserve(beta.size());
  for (double b : beta) {
    if (!(b >= 0.0)) throw ValidationError("posterior: negative pseudo-count");
    d.alpha.push_back(kPriorCount + b);
  }
  return d;
}

DirichletParams aggregate(const DirichletParams& agent, const DirichletParams& map,
                          const DirichletParams& social) {
  const std::size_t c = agent.classes();
  if (map.classes() != c || social.classes() != c)
    throw ShapeError("aggregate: class count mismatch");
  DirichletParams d;
  d.alpha.resize(c);
  for (std::size_t i = 0; i < c; ++i)
    d.alpha[i] = (agent.alpha[i] + map.alpha[i] + social.alpha[i]) / 3.0;
  return d;
}

CategoricalMean categorical_mean(const DirichletParams& d) {
  const double a0 = d.alpha0();
  CategoricalMean m;
  m.xi_bar.reserve(d.classes());
  for (double a : d.alpha) m.xi_bar.push_back(a / a0);
  return m;
}

std::size_t predict(const DirichletParams& d) {
  return std::size_t(std::max_element(d.alpha.begin(), d.alpha.end()) -
                     d.alpha.begin());
}

double expected_loglik(const DirichletParams& d, std::size_t label) {
  if (label >= d.classes()) throw ValidationError("expected_loglik: label out of range");
  return digamma(d.alpha[label]) - digamma(d.alpha0());
}

double kl_to_uniform(const DirichletParams& d) {
  const double a0 = d.alpha0();
  const double psi0 = digamma(a0);
  double kl = lgamma(a0) - lgamma(double(d.classes()));
  for (double a : d.alpha) kl += -lgamma(a) + (a - 1.0) * (digamma(a) - psi0);
  return kl;
}

double elbo_loss(const DirichletParams& d, std::size_t label, double kl_scale) {
  return -expected_loglik(d, label) + kl_scale * kl_to_uniform(d);
}

double total_loss(double elbo, double rec_agent, double rec_map, double rec_sc,
                  const LossConfig& cfg) {
  return elbo + cfg.lambda_agent * rec_agent + cfg.lambda_map * rec_map +
         cfg.lambda_sc * rec_sc;
}

double categorical_entropy(const CategoricalMean& m) {
  double h = 0.0;
  for (double p : m.xi_bar)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

double dirichlet_entropy(const DirichletParams& d) {
  const double a0 = d.alpha0();
  const double k = double(d.classes());
  double log_beta = -lgamma(a0);
  double tail = 0.0;
  for (double a : d.alpha) {
    log_beta += lgamma(a);
    tail += (a - 1.0) * digamma(a);
  }
  return log_beta + (a0 - k) * digamma(a0) - tail;
}

namespace ops {

using diff::Graph;
using diff::Shape;
using diff::Tensor;
using diff::Var;

Var pseudo_counts(Graph& g, Var log_r, const CertaintyBudget& budget) {
  const Shape& s = log_r.shape();
  if (s.size() != 2 || s[1] != budget.classes())
    throw ShapeError("pseudo_counts: expected [batch, classes] log densities");
  const std::size_t c = budget.classes();
  Tensor log_n(Shape{c}), mask(Shape{c});
  for (std::size_t i = 0; i < c; ++i) {
    const double n_c = budget.per_class[i];
    log_n[i] = n_c > 0.0 ? std::log(n_c) : 0.0;
    mask[i] = n_c > 0.0 ? 1.0 : 0.0;
  }
  Var log_beta = diff::add(log_r, g.constant(log_n));
  log_beta = diff::minimum(log_beta, Tensor::scalar(kLogEvidenceClamp));
  return diff::mul(diff::exp(log_beta), g.constant(mask));
}

Var posterior(Var beta) { return diff::add(beta, kPriorCount); }

Var aggregate(Var agent, Var map, Var social) {
  return diff::scale(diff::add(diff::add(agent, map), social), 1.0 / 3.0);
}

Var expected_loglik(Var alpha, std::span<const std::size_t> labels) {
  Var alpha0 = diff::sum(alpha, 1);
  return diff::sub(diff::digamma(diff::pick(alpha, labels)), diff::digamma(alpha0));
}

Var kl_to_uniform(Var alpha) {
  const double c = double(alpha.shape().at(1));
  Var alpha0 = diff::sum(alpha, 1, true);                    // [B,1]
  Var psi_gap = diff::sub(diff::digamma(alpha), diff::digamma(alpha0));
  Var cross = diff::sum(diff::mul(diff::add(alpha, -1.0), psi_gap), 1);
  Var norm = diff::sub(diff::reshape(diff::lgamma(alpha0), {alpha.shape()[0]}),
                       diff::sum(diff::lgamma(alpha), 1));
  return diff::add(diff::add(norm, cross), -diff::lgamma(c));
}

Var elbo_loss(Var alpha, std::span<const std::size_t> labels, double kl_scale) {
  Var nll = diff::neg(expected_loglik(alpha, labels));
  if (kl_scale == 0.0) return nll;
  return diff::add(nll, diff::scale(kl_to_uniform(alpha), kl_scale));
}

}  // namespace ops

}  // namespace isap::evidential
