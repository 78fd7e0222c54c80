#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uad/tensor.hpp"

namespace uad {

/// One vertex of the dynamic compute graph. A node owns its forward value,
/// references to the nodes it was computed from, and the rule that pushes
/// its gradient back into them. Inputs are the only saved activations.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_rule;

  bool is_leaf() const noexcept { return !backward_rule; }

  /// Adds `g` into this node's gradient, allocating it on first use.
  void accumulate(const Tensor<T>& g);
  /// Same, with a raw buffer of matching length.
  void accumulate(std::span<const T> g);
  Tensor<T>& grad_buffer();
};

/// Handle on a graph node. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  /// Mutable access for optimizers; only meaningful on leaves.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  T item() const { return node_->value.item(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const;
  void zero_grad() { node_->grad = Tensor<T>{}; }
  const std::string& op() const { return node_->op; }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// RAII guard: while alive, ops on this thread build no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds a graph node from an op result. When no input requires a gradient
/// (or grad mode is off) the rule and input references are dropped.
template <class T>
Var<T> make_op(Tensor<T> value, std::string op, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> rule);

/// Reverse sweep from a scalar root. Every reachable node with requires_grad
/// gets d(root)/d(node) accumulated into its grad. Interior nodes are
/// released afterwards so saved activations are freed.
template <class T>
void backward(const Var<T>& root);

/// Nodes reachable from root in the order backward() would visit them.
template <class T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

}  // namespace uad
