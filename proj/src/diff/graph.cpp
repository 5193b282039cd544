#include "isap/diff/graph.hpp"

#include "isap/errors.hpp"
#include "isap/kernels.hpp"

namespace isap::diff {

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite constant");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite leaf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  if (grad_enabled_) {
    n.requires_grad = true;
    n.param = &p;
  }
  return push(std::move(n));
}

Var Graph::record(std::string_view op, Tensor value,
                  std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::vector<Var>(inputs),
                std::move(backward));
}

Var Graph::record(std::string_view op, Tensor value,
                  const std::vector<Var>& inputs, BackwardFn backward) {
  if (!value.all_finite())
    throw NumericalError("non-finite output from op '" + std::string(op) + "'");
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph != this) throw ValidationError("op mixes vars of different graphs");
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

void Graph::backward(Var root) {
  if (root.graph != this) throw ValidationError("backward root from another graph");
  Node& r = nodes_[root.id];
  if (!r.requires_grad) return;
  r.grad = Tensor::like(r.value, 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor::like(n.value);
      kernels::axpy(1.0, n.grad.ptr(), pg.ptr(), pg.size());
      continue;
    }
    if (!n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& p = nodes_[in];
      in_values.push_back(&p.value);
      if (p.requires_grad) {
        if (p.grad.empty()) p.grad = Tensor::like(p.value);
        in_grads.push_back(&p.grad);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(BackwardArgs{n.grad, n.value, in_values, in_grads});
  }
}

}  // namespace isap::diff
