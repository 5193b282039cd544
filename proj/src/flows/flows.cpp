#include "isap/flows.hpp"

#include <cmath>
#include <numbers>

#include "isap/errors.hpp"

namespace isap::flows {

using diff::Graph;
using diff::Parameter;
using diff::Shape;
using diff::Tensor;
using diff::Var;

RadialOutput radial_apply(Var z, Var z0, Var alpha_raw, Var beta_raw) {
  const std::size_t d = z.shape().back();
  if (z0.shape().back() != d) throw ShapeError("radial_apply: latent dim mismatch");
  Var alpha = diff::softplus(alpha_raw);
  Var beta = diff::sub(diff::softplus(beta_raw), alpha);

  Var diffv = diff::sub(z, z0);                     // [..., D]
  const std::size_t axis = diffv.shape().size() - 1;
  Var r = diff::norm(diffv, axis);                  // [...]
  Var h = diff::reciprocal(diff::add(alpha, r));
  Var beta_h = diff::mul(beta, h);

  Shape keep = beta_h.shape();
  keep.push_back(1);
  Var y = diff::add(z, diff::mul(diff::reshape(beta_h, keep), diffv));

  // 1 + beta*h - beta*r*h^2
  Var radial_term =
      diff::sub(diff::add(beta_h, 1.0), diff::mul(diff::mul(beta_h, r), h));
  Var logdet = diff::add(diff::scale(diff::log(diff::add(beta_h, 1.0)), double(d - 1)),
                         diff::log(radial_term));
  return {y, logdet};
}

double alpha_raw_for(double alpha) { return std::log(std::expm1(alpha)); }

double beta_raw_for(double alpha, double beta) {
  return std::log(std::expm1(beta + alpha));
}

Var standard_normal_log_density(Var u) {
  const std::size_t d = u.shape().back();
  const std::size_t axis = u.shape().size() - 1;
  return diff::add(diff::scale(diff::sum(diff::square(u), axis), -0.5),
                   -0.5 * double(d) * std::log(2.0 * std::numbers::pi));
}

RadialFlowStack::RadialFlowStack(std::string name, std::size_t classes,
                                 std::size_t dim, std::size_t layers, Rng& rng)
    : classes_(classes), dim_(dim) {
  if (classes == 0 || dim == 0) throw ValidationError("flow stack needs classes and dim");
  // Near-identity start: alpha ~ 1, beta ~ 0, centers ~ N(0, 0.1^2).
  const double a_raw = alpha_raw_for(1.0);
  const double b_raw = beta_raw_for(1.0, 0.0);
  z0_.reserve(layers);
  alpha_raw_.reserve(layers);
  beta_raw_.reserve(layers);
  for (std::size_t k = 0; k < layers; ++k) {
    const std::string prefix = name + ".layer" + std::to_string(k);
    Tensor center(Shape{classes, dim});
    for (double& v : center.data()) v = rng.normal(0.0, 0.1);
    z0_.emplace_back(prefix + ".z0", std::move(center));
    alpha_raw_.emplace_back(prefix + ".alpha_raw", Tensor(Shape{classes}, a_raw));
    beta_raw_.emplace_back(prefix + ".beta_raw", Tensor(Shape{classes}, b_raw));
  }
}

Var RadialFlowStack::log_density(Graph& g, Var z) {
  const Shape& s = z.shape();
  if (s.size() != 2 || s[1] != dim_)
    throw ShapeError("flow log_density: expected [batch, " + std::to_string(dim_) +
                     "] latent, got " + diff::to_string(s));
  const std::size_t batch = s[0];
  // [B, 1, D] broadcasts against per-class parameters [C, D].
  Var cur = diff::reshape(z, {batch, 1, dim_});
  Var logdet_sum;
  bool have_logdet = false;
  for (std::size_t k = 0; k < z0_.size(); ++k) {
    RadialOutput out = radial_apply(cur, g.parameter(z0_[k]),
                                    g.parameter(alpha_raw_[k]),
                                    g.parameter(beta_raw_[k]));
    cur = out.y;
    logdet_sum = have_logdet ? diff::add(logdet_sum, out.logdet) : out.logdet;
    have_logdet = true;
  }
  if (!have_logdet) {
    // No layers: identical base density for every class.
    Var base = standard_normal_log_density(cur);  // [B,1]
    return diff::add(base, g.constant(Tensor(Shape{batch, classes_}, 0.0)));
  }
  return diff::add(standard_normal_log_density(cur), logdet_sum);
}

void RadialFlowStack::collect(diff::ParamList& out) {
  for (std::size_t k = 0; k < z0_.size(); ++k) {
    out.push_back(&z0_[k]);
    out.push_back(&alpha_raw_[k]);
    out.push_back(&beta_raw_[k]);
  }
}

FlowBank::FlowBank(std::string name, std::size_t classes, std::size_t dim,
                   std::size_t layers, Rng& rng)
    : norm_(name + ".norm", dim), flows_(name + ".flows", classes, dim, layers, rng) {}

Var FlowBank::log_densities(Graph& g, Var z, bool train) {
  return flows_.log_density(g, norm_(g, z, train));
}

void FlowBank::collect(diff::ParamList& out) {
  norm_.collect(out);
  flows_.collect(out);
}

}  // namespace isap::flows
