#include "statt/graph.hpp"

namespace statt {

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::parameter(std::string name, Tensor<T> value) {
  Node n;
  n.op = "parameter";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  parameters_.emplace_back(std::move(name), nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(std::string_view op, std::vector<std::size_t> parents, Tensor<T> value,
                        BackwardFn backward) {
  Node n;
  n.op = std::string(op);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw ContractError("op " + n.op + " references a node from another graph");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (!value.all_finite()) throw NumericalError("op " + n.op + " produced a non-finite value");
  n.parents = std::move(parents);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var<T> v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> root) {
  if (root.value().size() != 1) {
    throw ContractError("backward root must be a scalar, got shape " + shape_string(root.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor<T>();
  grad_buffer(root.id())[0] = T(1);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    if (!fault_op_.empty() && n.op == fault_op_) {
      for (T& g : n.grad.values()) g *= fault_factor_;
    }
    n.backward(*this, id);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace statt
