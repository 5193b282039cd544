#include "isap/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "isap/diff/special.hpp"
#include "isap/errors.hpp"
#include "isap/kernels.hpp"

namespace isap::diff {

namespace {

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // per out axis; 0 where broadcast
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t rank) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t step = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t axis = s.size() - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = s[axis] == 1 ? 0 : step;
    step *= s[axis];
  }
  return strides;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Broadcast p;
  p.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(a) +
                       " with " + to_string(b));
    p.out[rank - 1 - i] = std::max(da, db);
  }
  p.stride_a = aligned_strides(a, rank);
  p.stride_b = aligned_strides(b, rank);
  return p;
}

// Calls f(i, ia, ib) for every flat output index i with the matching input
// offsets.
template <typename F>
void for_each_broadcast(const Broadcast& p, F&& f) {
  const std::size_t rank = p.out.size();
  const std::size_t n = numel(p.out);
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t last = rank - 1;
  const std::size_t inner = p.out[last];
  const std::size_t sa = p.stride_a[last], sb = p.stride_b[last];
  for (std::size_t i = 0; i < n; i += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(i + j, ia + j * sa, ib + j * sb);
    // Advance outer axes.
    for (std::size_t ax = last; ax-- > 0;) {
      ++idx[ax];
      ia += p.stride_a[ax];
      ib += p.stride_b[ax];
      if (idx[ax] < p.out[ax]) break;
      ia -= p.stride_a[ax] * idx[ax];
      ib -= p.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

// Binary elementwise op with derivative callbacks da(a,b,out), db(a,b,out).
template <typename Fwd, typename Da, typename Db>
Var binary(const char* name, Var a, Var b, Fwd fwd, Da da, Db db) {
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.shape() == vb.shape()) {
    Tensor out(va.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(va[i], vb[i]);
    return a.graph->record(
        name, std::move(out), {a, b}, [da, db](const BackwardArgs& g) {
          const Tensor& x = *g.in_values[0];
          const Tensor& y = *g.in_values[1];
          if (Tensor* gx = g.in_grads[0])
            for (std::size_t i = 0; i < x.size(); ++i)
              (*gx)[i] += g.out_grad[i] * da(x[i], y[i], g.out_value[i]);
          if (Tensor* gy = g.in_grads[1])
            for (std::size_t i = 0; i < y.size(); ++i)
              (*gy)[i] += g.out_grad[i] * db(x[i], y[i], g.out_value[i]);
        });
  }
  Broadcast plan = plan_broadcast(va.shape(), vb.shape(), name);
  Tensor out(plan.out);
  for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    out[i] = fwd(va[ia], vb[ib]);
  });
  return a.graph->record(
      name, std::move(out), {a, b},
      [plan = std::move(plan), da, db](const BackwardArgs& g) {
        const Tensor& x = *g.in_values[0];
        const Tensor& y = *g.in_values[1];
        Tensor* gx = g.in_grads[0];
        Tensor* gy = g.in_grads[1];
        for_each_broadcast(plan, [&](std::size_t i, std::size_t ia,
                                     std::size_t ib) {
          const double go = g.out_grad[i];
          if (gx) (*gx)[ia] += go * da(x[ia], y[ib], g.out_value[i]);
          if (gy) (*gy)[ib] += go * db(x[ia], y[ib], g.out_value[i]);
        });
      });
}

// Unary elementwise op; deriv(x, y) gives dy/dx.
template <typename Fwd, typename Deriv>
Var unary(const char* name, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = fwd(v[i]);
  return x.graph->record(name, std::move(out), {x},
                         [deriv](const BackwardArgs& g) {
                           const Tensor& in = *g.in_values[0];
                           Tensor& gi = *g.in_grads[0];
                           for (std::size_t i = 0; i < in.size(); ++i)
                             gi[i] += g.out_grad[i] * deriv(in[i], g.out_value[i]);
                         });
}

// View of a tensor as [outer, extent, inner] around one axis.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
  Shape reduced;  // shape with the axis removed or kept as 1
};

AxisView axis_view(const Shape& s, std::size_t axis, bool keepdim,
                   const char* op) {
  if (axis >= s.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + to_string(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis)
      v.reduced.push_back(s[i]);
    else if (keepdim)
      v.reduced.push_back(1);
  }
  return v;
}

double softplus_value(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Binary

Var add(Var a, Var b) {
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.shape() == vb.shape()) {
    Tensor out(va.shape());
    kernels::add(va.ptr(), vb.ptr(), out.ptr(), out.size());
    return a.graph->record("add", std::move(out), {a, b},
                           [](const BackwardArgs& g) {
                             for (Tensor* gi : g.in_grads)
                               if (gi) kernels::axpy(1.0, g.out_grad.ptr(),
                                                     gi->ptr(), gi->size());
                           });
  }
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.shape() == vb.shape()) {
    Tensor out(va.shape());
    kernels::mul(va.ptr(), vb.ptr(), out.ptr(), out.size());
    return a.graph->record(
        "mul", std::move(out), {a, b}, [](const BackwardArgs& g) {
          const std::size_t n = g.out_grad.size();
          std::vector<double> tmp(n);
          if (Tensor* ga = g.in_grads[0]) {
            kernels::mul(g.out_grad.ptr(), g.in_values[1]->ptr(), tmp.data(), n);
            kernels::axpy(1.0, tmp.data(), ga->ptr(), n);
          }
          if (Tensor* gb = g.in_grads[1]) {
            kernels::mul(g.out_grad.ptr(), g.in_values[0]->ptr(), tmp.data(), n);
            kernels::axpy(1.0, tmp.data(), gb->ptr(), n);
          }
        });
  }
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Var add(Var a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Var scale(Var a, double c) {
  return unary(
      "scale", a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var reciprocal(Var a) {
  return unary(
      "reciprocal", a, [](double x) { return 1.0 / x; },
      [](double, double y) { return -y * y; });
}

// ---------------------------------------------------------------------------
// Unary

Var relu(Var x) {
  return unary(
      "relu", x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, sigmoid_value,
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary("softplus", x, softplus_value,
               [](double v, double) { return sigmoid_value(v); });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(
      "square", x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Var sqrt(Var x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Var digamma(Var x) {
  return unary(
      "digamma", x, [](double v) { return diff::digamma(v); },
      [](double v, double) { return diff::trigamma(v); });
}

Var lgamma(Var x) {
  return unary(
      "lgamma", x, [](double v) { return diff::lgamma(v); },
      [](double v, double) { return diff::digamma(v); });
}

Var minimum(Var x, const Tensor& bound) {
  const Tensor& v = x.value();
  Broadcast plan = plan_broadcast(v.shape(), bound.shape(), "minimum");
  if (plan.out != v.shape())
    throw ShapeError("minimum: bound must broadcast to input shape");
  Tensor out(v.shape());
  std::vector<char> active(v.size(), 0);
  for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    if (bound[ib] < v[ia]) {
      out[i] = bound[ib];
      active[i] = 1;
    } else {
      out[i] = v[ia];
    }
  });
  return x.graph->record("minimum", std::move(out), {x},
                         [active = std::move(active)](const BackwardArgs& g) {
                           Tensor& gi = *g.in_grads[0];
                           for (std::size_t i = 0; i < gi.size(); ++i)
                             if (!active[i]) gi[i] += g.out_grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0))
    throw ShapeError("matmul: incompatible shapes " + to_string(va.shape()) +
                     " x " + to_string(vb.shape()));
  const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor out(Shape{m, n});
  kernels::gemm(false, false, m, n, k, va.ptr(), k, vb.ptr(), n, out.ptr(), n,
                false);
  return a.graph->record(
      "matmul", std::move(out), {a, b}, [m, k, n](const BackwardArgs& g) {
        if (Tensor* ga = g.in_grads[0])  // dA = dC * B^T
          kernels::gemm(false, true, m, k, n, g.out_grad.ptr(), n,
                        g.in_values[1]->ptr(), n, ga->ptr(), k, true);
        if (Tensor* gb = g.in_grads[1])  // dB = A^T * dC
          kernels::gemm(true, false, k, n, m, g.in_values[0]->ptr(), k,
                        g.out_grad.ptr(), n, gb->ptr(), n, true);
      });
}

Var affine(Var x, Var weight, Var bias) {
  const Tensor& vx = x.value();
  const Tensor& vw = weight.value();
  const Tensor& vb = bias.value();
  if (vx.rank() != 2 || vw.rank() != 2 || vx.dim(1) != vw.dim(0) ||
      vb.rank() != 1 || vb.dim(0) != vw.dim(1))
    throw ShapeError("affine: incompatible shapes " + to_string(vx.shape()) +
                     ", " + to_string(vw.shape()) + ", " + to_string(vb.shape()));
  const std::size_t m = vx.dim(0), k = vx.dim(1), n = vw.dim(1);
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    std::copy(vb.ptr(), vb.ptr() + n, out.ptr() + i * n);
  kernels::gemm(false, false, m, n, k, vx.ptr(), k, vw.ptr(), n, out.ptr(), n,
                true);
  return x.graph->record(
      "affine", std::move(out), {x, weight, bias},
      [m, k, n](const BackwardArgs& g) {
        if (Tensor* gx = g.in_grads[0])
          kernels::gemm(false, true, m, k, n, g.out_grad.ptr(), n,
                        g.in_values[1]->ptr(), n, gx->ptr(), k, true);
        if (Tensor* gw = g.in_grads[1])
          kernels::gemm(true, false, k, n, m, g.in_values[0]->ptr(), k,
                        g.out_grad.ptr(), n, gw->ptr(), n, true);
        if (Tensor* gb = g.in_grads[2])
          for (std::size_t i = 0; i < m; ++i)
            kernels::axpy(1.0, g.out_grad.ptr() + i * n, gb->ptr(), n);
      });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  const Tensor& v = x.value();
  const double s = std::accumulate(v.data().begin(), v.data().end(), 0.0);
  return x.graph->record("sum", Tensor::scalar(s), {x},
                         [](const BackwardArgs& g) {
                           const double go = g.out_grad[0];
                           for (double& e : g.in_grads[0]->data()) e += go;
                         });
}

Var sum(Var x, std::size_t axis, bool keepdim) {
  const Tensor& v = x.value();
  const AxisView av = axis_view(v.shape(), axis, keepdim, "sum");
  Tensor out(av.reduced);
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t e = 0; e < av.extent; ++e)
      for (std::size_t i = 0; i < av.inner; ++i)
        out[o * av.inner + i] += v[(o * av.extent + e) * av.inner + i];
  return x.graph->record("sum_axis", std::move(out), {x},
                         [av](const BackwardArgs& g) {
                           Tensor& gi = *g.in_grads[0];
                           for (std::size_t o = 0; o < av.outer; ++o)
                             for (std::size_t e = 0; e < av.extent; ++e)
                               for (std::size_t i = 0; i < av.inner; ++i)
                                 gi[(o * av.extent + e) * av.inner + i] +=
                                     g.out_grad[o * av.inner + i];
                         });
}

Var mean(Var x) { return scale(sum(x), 1.0 / double(x.value().size())); }

Var mean(Var x, std::size_t axis, bool keepdim) {
  return scale(sum(x, axis, keepdim), 1.0 / double(x.shape().at(axis)));
}

Var norm(Var x, std::size_t axis, bool keepdim) {
  const Tensor& v = x.value();
  const AxisView av = axis_view(v.shape(), axis, keepdim, "norm");
  Tensor out(av.reduced);
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t i = 0; i < av.inner; ++i) {
      double s = 0.0;
      for (std::size_t e = 0; e < av.extent; ++e) {
        const double c = v[(o * av.extent + e) * av.inner + i];
        s += c * c;
      }
      out[o * av.inner + i] = std::sqrt(s);
    }
  return x.graph->record(
      "norm", std::move(out), {x}, [av](const BackwardArgs& g) {
        const Tensor& in = *g.in_values[0];
        Tensor& gi = *g.in_grads[0];
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t i = 0; i < av.inner; ++i) {
            const double r = g.out_value[o * av.inner + i];
            if (r == 0.0) continue;
            const double go = g.out_grad[o * av.inner + i] / r;
            for (std::size_t e = 0; e < av.extent; ++e) {
              const std::size_t idx = (o * av.extent + e) * av.inner + i;
              gi[idx] += go * in[idx];
            }
          }
      });
}

Var logsumexp(Var x, std::size_t axis, bool keepdim) {
  const Tensor& v = x.value();
  const AxisView av = axis_view(v.shape(), axis, keepdim, "logsumexp");
  Tensor out(av.reduced);
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t i = 0; i < av.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < av.extent; ++e)
        mx = std::max(mx, v[(o * av.extent + e) * av.inner + i]);
      double s = 0.0;
      for (std::size_t e = 0; e < av.extent; ++e)
        s += std::exp(v[(o * av.extent + e) * av.inner + i] - mx);
      out[o * av.inner + i] = mx + std::log(s);
    }
  return x.graph->record(
      "logsumexp", std::move(out), {x}, [av](const BackwardArgs& g) {
        const Tensor& in = *g.in_values[0];
        Tensor& gi = *g.in_grads[0];
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t i = 0; i < av.inner; ++i) {
            const double lse = g.out_value[o * av.inner + i];
            const double go = g.out_grad[o * av.inner + i];
            for (std::size_t e = 0; e < av.extent; ++e) {
              const std::size_t idx = (o * av.extent + e) * av.inner + i;
              gi[idx] += go * std::exp(in[idx] - lse);
            }
          }
      });
}

Var log_softmax(Var x, std::size_t axis) {
  return sub(x, logsumexp(x, axis, true));
}

Var softmax(Var x, std::size_t axis) { return exp(log_softmax(x, axis)); }

// ---------------------------------------------------------------------------
// Structure

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph->record("reshape", std::move(out), {x},
                         [](const BackwardArgs& g) {
                           kernels::axpy(1.0, g.out_grad.ptr(),
                                         g.in_grads[0]->ptr(),
                                         g.out_grad.size());
                         });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i])
        throw ShapeError("concat: extent mismatch " + to_string(s) + " vs " +
                         to_string(first));
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const AxisView av = axis_view(out_shape, axis, true, "concat");
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    const std::size_t block = extents[p] * av.inner;
    for (std::size_t o = 0; o < av.outer; ++o)
      std::copy(v.ptr() + o * block, v.ptr() + (o + 1) * block,
                out.ptr() + (o * av.extent + offset) * av.inner);
    offset += extents[p];
  }
  return parts.front().graph->record(
      "concat", std::move(out), parts, [av, extents](const BackwardArgs& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < extents.size(); ++p) {
          const std::size_t block = extents[p] * av.inner;
          if (Tensor* gi = g.in_grads[p])
            for (std::size_t o = 0; o < av.outer; ++o)
              kernels::axpy(1.0,
                            g.out_grad.ptr() + (o * av.extent + off) * av.inner,
                            gi->ptr() + o * block, block);
          off += extents[p];
        }
      });
}

Var index_select(Var x, std::size_t axis, std::vector<std::size_t> indices) {
  const Tensor& v = x.value();
  if (indices.empty()) throw ShapeError("index_select: empty index list");
  const AxisView av = axis_view(v.shape(), axis, true, "index_select");
  for (std::size_t i : indices)
    if (i >= av.extent) throw ShapeError("index_select: index out of range");
  Shape out_shape = v.shape();
  out_shape[axis] = indices.size();
  Tensor out(out_shape);
  const std::size_t k = indices.size();
  for (std::size_t o = 0; o < av.outer; ++o)
    for (std::size_t j = 0; j < k; ++j)
      std::copy(v.ptr() + (o * av.extent + indices[j]) * av.inner,
                v.ptr() + (o * av.extent + indices[j] + 1) * av.inner,
                out.ptr() + (o * k + j) * av.inner);
  return x.graph->record(
      "index_select", std::move(out), {x},
      [av, indices = std::move(indices)](const BackwardArgs& g) {
        Tensor& gi = *g.in_grads[0];
        const std::size_t k = indices.size();
        for (std::size_t o = 0; o < av.outer; ++o)
          for (std::size_t j = 0; j < k; ++j)
            kernels::axpy(1.0, g.out_grad.ptr() + (o * k + j) * av.inner,
                          gi.ptr() + (o * av.extent + indices[j]) * av.inner,
                          av.inner);
      });
}

Var pick(Var x, std::span<const std::size_t> index) {
  const Tensor& v = x.value();
  if (v.rank() != 2 || index.size() != v.dim(0))
    throw ShapeError("pick: expects [batch, classes] and one index per row");
  const std::size_t rows = v.dim(0), cols = v.dim(1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  Tensor out(Shape{rows});
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] >= cols) throw ShapeError("pick: index out of range");
    out[r] = v[r * cols + idx[r]];
  }
  return x.graph->record("pick", std::move(out), {x},
                         [idx = std::move(idx), cols](const BackwardArgs& g) {
                           Tensor& gi = *g.in_grads[0];
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             gi[r * cols + idx[r]] += g.out_grad[r];
                         });
}

// ---------------------------------------------------------------------------
// Batch norm

Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, bool train) {
  const Tensor& v = x.value();
  if (v.rank() != 2) throw ShapeError("batch_norm: expects [batch, features]");
  const std::size_t n = v.dim(0), f = v.dim(1);
  if (gamma.value().size() != f || beta.value().size() != f ||
      stats.running_mean.size() != f)
    throw ShapeError("batch_norm: feature count mismatch");
  if (train && n < 2) throw ShapeError("batch_norm: train mode needs batch >= 2");
  Graph& graph = *x.graph;

  if (!train) {
    Tensor scale_t(Shape{f}), shift_t(Shape{f});
    for (std::size_t j = 0; j < f; ++j) {
      scale_t[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
      shift_t[j] = -stats.running_mean[j] * scale_t[j];
    }
    Var normalized = add(mul(x, graph.constant(scale_t)), graph.constant(shift_t));
    return add(mul(normalized, gamma), beta);
  }

  std::vector<double> mu(f, 0.0), var(f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) mu[j] += v[i * f + j];
  for (double& m : mu) m /= double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = v[i * f + j] - mu[j];
      var[j] += d * d;
    }
  for (double& s : var) s /= double(n);
  for (std::size_t j = 0; j < f; ++j) {
    stats.running_mean[j] =
        (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
    const double unbiased = var[j] * double(n) / double(n - 1);
    stats.running_var[j] =
        (1.0 - stats.momentum) * stats.running_var[j] + stats.momentum * unbiased;
  }

  // xhat = (x - mu) / sqrt(var + eps) as one node with the closed-form adjoint.
  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + stats.eps);
  Tensor xhat(v.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      xhat[i * f + j] = (v[i * f + j] - mu[j]) * inv_std[j];
  Var normalized = graph.record(
      "batch_norm", std::move(xhat), {x},
      [inv_std, n, f](const BackwardArgs& g) {
        Tensor& gi = *g.in_grads[0];
        const Tensor& xh = g.out_value;
        for (std::size_t j = 0; j < f; ++j) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            sum_g += g.out_grad[i * f + j];
            sum_gx += g.out_grad[i * f + j] * xh[i * f + j];
          }
          const double scale = inv_std[j] / double(n);
          for (std::size_t i = 0; i < n; ++i)
            gi[i * f + j] += scale * (double(n) * g.out_grad[i * f + j] -
                                      sum_g - xh[i * f + j] * sum_gx);
        }
      });
  return add(mul(normalized, gamma), beta);
}

}  // namespace isap::diff
