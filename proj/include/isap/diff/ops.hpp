#pragma once

// Differentiable operations over Graph nodes. Every op computes its forward
// value eagerly and records an exact adjoint. Binary elementwise ops follow
// right-aligned broadcasting (extent 1 or missing axes stretch).

#include <cstddef>
#include <span>
#include <vector>

#include "isap/diff/graph.hpp"

namespace isap::diff {

// -- elementwise binary (broadcasting) --
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

// -- scalar forms --
Var add(Var a, double c);
Var scale(Var a, double c);
Var neg(Var a);
Var reciprocal(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double c) { return add(a, c); }
inline Var operator+(double c, Var a) { return add(a, c); }
inline Var operator-(Var a, double c) { return add(a, -c); }
inline Var operator-(double c, Var a) { return add(neg(a), c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator-(Var a) { return neg(a); }

// -- elementwise unary --
Var relu(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sqrt(Var x);
Var digamma(Var x);
Var lgamma(Var x);
/// min(x, bound) elementwise; bound must broadcast to x and is not
/// differentiated. Gradient is zero where the bound is active.
Var minimum(Var x, const Tensor& bound);

// -- linear algebra --
Var matmul(Var a, Var b);                   // [m,k] x [k,n]
Var affine(Var x, Var weight, Var bias);    // [b,in] x [in,out] + [out]

// -- reductions --
Var sum(Var x);
Var sum(Var x, std::size_t axis, bool keepdim = false);
Var mean(Var x);
Var mean(Var x, std::size_t axis, bool keepdim = false);
/// Euclidean norm along axis; the subgradient at 0 is taken as 0.
Var norm(Var x, std::size_t axis, bool keepdim = false);
Var logsumexp(Var x, std::size_t axis, bool keepdim = false);
Var log_softmax(Var x, std::size_t axis);
Var softmax(Var x, std::size_t axis);

// -- structure --
Var reshape(Var x, Shape shape);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var index_select(Var x, std::size_t axis, std::vector<std::size_t> indices);
/// out[b] = x[b, index[b]] for a rank-2 x.
Var pick(Var x, std::span<const std::size_t> index);

// -- normalization --
struct BatchNormStats {
  Tensor running_mean;  // [features]
  Tensor running_var;   // [features]
  double momentum = 0.1;
  double eps = 1e-5;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t features)
      : running_mean(Shape{features}, 0.0), running_var(Shape{features}, 1.0) {}
};

/// x: [batch, features]. Train mode normalizes with the biased batch
/// variance and updates running stats (unbiased variance, momentum);
/// eval mode applies the running stats as a fixed affine map.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, bool train);

// -- convolution (NCHW) --
/// x: [n, c_in, h, w], weight: [c_out, c_in, k, k], bias: [c_out].
Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad);
/// x: [n, c_in, h, w], weight: [c_in, c_out, k, k], bias: [c_out].
/// Output extent (h - 1) * stride - 2 * pad + k.
Var conv_transpose2d(Var x, Var weight, Var bias, std::size_t stride,
                     std::size_t pad);

}  // namespace isap::diff
