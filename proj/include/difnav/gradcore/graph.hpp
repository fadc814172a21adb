#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "difnav/gradcore/tensor.hpp"

namespace difnav::gradcore {

template <class T>
class Graph;

/// Handle to a node inside a Graph. Cheap to copy; valid while the graph lives.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  int id = -1;

  const Shape& shape() const;
  const std::vector<T>& value() const;
  std::size_t size() const { return value().size(); }
  T item() const;
};

/// Tape of op records in creation order, which is a topological order.
///
/// Parameters enter through param(); their leaf nodes read the store directly and
/// gradients are collected by backward() into a GradMap keyed by parameter name.
template <class T>
class Graph {
 public:
  struct Node {
    std::string_view kind;
    std::vector<int> inputs;
    int output = -1;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    std::string param_name;
    std::function<void(Graph&, const Node&)> backward_fn;
  };

  explicit Graph(const ParamStore<T>* params = nullptr, bool record = true)
      : params_(params), record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  const ParamStore<T>* params() const { return params_; }

  Var<T> param(const std::string& name) {
    if (!params_) throw ContractError("graph has no parameter store");
    if (auto it = param_ids_.find(name); it != param_ids_.end()) return {this, it->second};
    const Tensor<T>& t = params_->get(name);
    Node n;
    n.kind = "param";
    n.shape = t.shape;
    n.value = t.data;
    n.requires_grad = record_;
    n.param_name = name;
    int id = push_node(std::move(n));
    param_ids_[name] = id;
    return {this, id};
  }

  /// Non-differentiable input.
  Var<T> constant(Shape shape, std::vector<T> value) {
    if (value.size() != numel(shape)) {
      throw DimensionError("constant data length " + std::to_string(value.size()) +
                           " does not match shape " + shape_str(shape));
    }
    Node n;
    n.kind = "constant";
    n.shape = std::move(shape);
    n.value = std::move(value);
    return {this, push_node(std::move(n))};
  }

  Var<T> constant(const Tensor<T>& t) { return constant(t.shape, t.data); }

  /// Appends an op output. `backward` receives the node and must accumulate into inputs.
  Var<T> push(std::string_view kind, std::vector<int> inputs, Shape shape, std::vector<T> value,
              std::function<void(Graph&, const Node&)> backward) {
    Node n;
    n.kind = kind;
    n.requires_grad = false;
    if (record_) {
      for (int in : inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    }
    n.inputs = std::move(inputs);
    n.shape = std::move(shape);
    n.value = std::move(value);
    if (n.requires_grad) n.backward_fn = std::move(backward);
    return {this, push_node(std::move(n))};
  }

  const Node& node(int id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, zero-allocated on first use.
  std::vector<T>& grad_of(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

  void run_backward(int loss_id) {
    grad_of(loss_id)[0] = T(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.empty() || !n.backward_fn) continue;
      n.backward_fn(*this, n);
    }
  }

  const std::map<std::string, int>& param_ids() const { return param_ids_; }

 private:
  int push_node(Node n) {
    int id = static_cast<int>(nodes_.size());
    n.output = id;
    nodes_.push_back(std::move(n));
    return id;
  }

  const ParamStore<T>* params_;
  bool record_;
  std::vector<Node> nodes_;
  std::map<std::string, int> param_ids_;
};

template <class T>
const Shape& Var<T>::shape() const {
  return graph->node(id).shape;
}
template <class T>
const std::vector<T>& Var<T>::value() const {
  return graph->node(id).value;
}
template <class T>
T Var<T>::item() const {
  if (value().size() != 1) throw ContractError("item() on non-scalar " + shape_str(shape()));
  return value()[0];
}

/// Reverse-mode gradients of a scalar loss for every parameter in the graph's store.
/// Parameters the loss does not depend on receive zero gradients.
template <class T>
GradMap<T> backward(Graph<T>& graph, Var<T> loss) {
  if (loss.graph != &graph) throw ContractError("loss belongs to a different graph");
  if (loss.size() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  if (!graph.recording()) throw ContractError("backward on a non-recording graph");
  GradMap<T> grads;
  if (graph.params()) {
    for (const auto& [name, t] : *graph.params()) grads[name].assign(t.size(), T(0));
  }
  if (graph.requires_grad(loss.id)) graph.run_backward(loss.id);
  for (const auto& [name, id] : graph.param_ids()) {
    const auto& n = graph.node(id);
    if (!n.grad.empty()) grads[name] = n.grad;
  }
  return grads;
}

}  // namespace difnav::gradcore
