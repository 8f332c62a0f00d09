#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "statt/rng.hpp"
#include "statt/tensor.hpp"

namespace statt {

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run tape for reverse-mode differentiation. Nodes are appended
/// in construction order, which is a topological order; backward sweeps it
/// in reverse. A graph is single-threaded; build one per worker.
template <typename T>
class Graph {
 public:
  /// Pushes this node's gradient into its parents' gradient buffers.
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    std::string op;
    std::vector<std::size_t> parents;
    Tensor<T> value;
    Tensor<T> grad;  // empty until something flows into it
    bool requires_grad = false;
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(std::string name, Tensor<T> value);

  /// Appends an op node. The backward closure is dropped when no parent
  /// requires a gradient.
  Var<T> record(std::string_view op, std::vector<std::size_t> parents, Tensor<T> value, BackwardFn backward);

  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  /// Gradient accumulator for `id`, zero-allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id);

  /// Gradient of the last backward root with respect to `v`; zeros when no
  /// path reached it.
  Tensor<T> grad(Var<T> v) const;

  /// Reverse sweep from a scalar root. Throws ContractError otherwise.
  void backward(Var<T> root);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::pair<std::string, std::size_t>>& parameters() const noexcept { return parameters_; }

  /// Fingerprint of the discrete choices (relu signs, maxpool winners) made
  /// while building the graph. Two evaluations with equal fingerprints lie
  /// on the same smooth piece of a piecewise-smooth objective.
  std::uint64_t branch_signature() const noexcept { return branches_; }
  void note_branches(std::uint64_t h) noexcept { branches_ = mix64(branches_ ^ h); }

  /// Test fixture: every node of kind `op` scales its incoming gradient by
  /// `factor` before propagating. Used as a negative control for gradient
  /// checking.
  void inject_backward_fault(std::string op, T factor) {
    fault_op_ = std::move(op);
    fault_factor_ = factor;
  }

 private:
  std::deque<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> parameters_;
  std::string fault_op_;
  T fault_factor_ = T(1);
  std::uint64_t branches_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace statt
