#pragma once

#include <functional>

#include "isap/diff/graph.hpp"

namespace isap::diff {

/// Scalar-valued function of one tensor, built on the given graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

/// Compares reverse-mode gradients of f at x with central differences.
/// Returns max_i |autodiff_i - fd_i| / max(1, |fd_i|).
/// h must lie in [1e-6, 1e-4]; throws NumericalError if a perturbed
/// evaluation is not finite.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

/// Reverse-mode gradient of f at x (zeros if f does not depend on x).
Tensor gradient(const ScalarFn& f, const Tensor& x);

}  // namespace isap::diff
