#pragma once

namespace isap::diff {

/// psi(x) for x > 0. Shifts the argument up with psi(x) = psi(x+1) - 1/x
/// until x >= 6, then sums the asymptotic Bernoulli series through x^-14.
/// Absolute error below 1e-10 on [1e-3, 1e6].
double digamma(double x);

/// psi'(x) for x > 0, same shift-then-asymptotic scheme.
double trigamma(double x);

/// log Gamma(x) for x > 0 (thin wrapper over std::lgamma).
double lgamma(double x);

}  // namespace isap::diff
