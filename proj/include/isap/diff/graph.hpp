#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "isap/diff/tensor.hpp"

namespace isap::diff {

/// A trainable tensor with its accumulated gradient. Owned by model code;
/// graphs refer to it while a step is in flight.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::like(value)) {}
  void zero_grad() { grad = Tensor::like(value); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  double item() const { return value().item(); }
};

struct BackwardArgs {
  const Tensor& out_grad;
  const Tensor& out_value;
  std::span<const Tensor* const> in_values;
  /// Null where the corresponding input does not need a gradient.
  std::span<Tensor* const> in_grads;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Tape of operations recorded in topological order during the forward pass.
/// backward() walks it once in reverse, accumulating adjoints.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Differentiable leaf not tied to a Parameter (used by gradient checks).
  Var leaf(Tensor value);
  /// Leaf whose gradient is accumulated into p.grad on backward().
  Var parameter(Parameter& p);

  /// Appends an op node. Throws NumericalError if value is not finite.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(std::string_view op, Tensor value, const std::vector<Var>& inputs,
             BackwardFn backward);

  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  /// Adjoint of a node after backward(); empty if it was never reached.
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

}  // namespace isap::diff
