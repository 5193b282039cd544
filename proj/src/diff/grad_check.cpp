#include "isap/diff/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "isap/errors.hpp"

namespace isap::diff {

namespace {
double evaluate(const ScalarFn& f, const Tensor& x) {
  Graph g(false);
  Var out = f(g, g.constant(x));
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite evaluation");
  return v;
}
}  // namespace

Tensor gradient(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var in = g.leaf(x);
  Var out = f(g, in);
  if (out.value().size() != 1)
    throw ShapeError("gradient: function must return a scalar");
  g.backward(out);
  const Tensor& grad = g.grad(in);
  return grad.empty() ? Tensor::like(x) : grad;
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h >= 1e-6 && h <= 1e-4))
    throw ValidationError("grad_check: step size must lie in [1e-6, 1e-4]");
  const Tensor analytic = gradient(f, x);
  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = evaluate(f, probe);
    probe[i] = orig - h;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace isap::diff
