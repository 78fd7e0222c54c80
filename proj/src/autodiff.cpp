#include "uad/autodiff.hpp"

#include <unordered_set>

namespace uad {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T>& Node<T>::grad_buffer() {
  if (grad.empty()) grad = Tensor<T>(value.shape());
  return grad;
}

template <class T>
void Node<T>::accumulate(std::span<const T> g) {
  if (!requires_grad) return;
  auto& buf = grad_buffer();
  if (g.size() != buf.size()) {
    throw DimensionError("gradient of length " + std::to_string(g.size()) + " for node of shape " +
                         to_string(value.shape()));
  }
  T* dst = buf.raw();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <class T>
void Node<T>::accumulate(const Tensor<T>& g) {
  accumulate(g.data());
}

template <class T>
Var<T>::Var(Tensor<T> value, bool requires_grad) : node_(std::make_shared<Node<T>>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

template <class T>
const Tensor<T>& Var<T>::grad() const {
  if (node_->grad.empty()) throw UsageError("no gradient recorded for node '" + node_->op + "'");
  return node_->grad;
}

template <class T>
Var<T> make_op(Tensor<T> value, std::string op, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> rule) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs && g_grad_enabled) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_rule = std::move(rule);
  }
  return Var<T>(std::move(node));
}

template <class T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  // Iterative post-order DFS; reversed post-order is a valid reverse sweep.
  std::vector<Node<T>*> post;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  Node<T>* r = root.node().get();
  if (!r->requires_grad) return post;
  stack.emplace_back(r, 0);
  seen.insert(r);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      post.push_back(n);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

template <class T>
void backward(const Var<T>& root) {
  if (root.size() != 1) {
    throw UsageError("backward() needs a scalar root, got shape " + to_string(root.shape()));
  }
  if (!root.requires_grad()) return;
  auto order = topological_order(root);
  root.node()->grad_buffer()[0] += T{1};
  for (Node<T>* n : order) {
    if (n->backward_rule && !n->grad.empty()) n->backward_rule(*n);
  }
  // Detached inputs are parked until the sweep ends: clearing a parent may
  // drop the last owner of a node still pending in `order`.
  std::vector<std::shared_ptr<Node<T>>> parked;
  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->backward_rule = nullptr;
      for (auto& in : n->inputs) parked.push_back(std::move(in));
      n->inputs.clear();
      n->grad = Tensor<T>{};
    }
  }
}

#define UAD_INSTANTIATE(T)                                                                  \
  template struct Node<T>;                                                                  \
  template class Var<T>;                                                                    \
  template Var<T> make_op<T>(Tensor<T>, std::string, std::vector<Var<T>>,                   \
                             std::function<void(Node<T>&)>);                                \
  template std::vector<Node<T>*> topological_order<T>(const Var<T>&);                       \
  template void backward<T>(const Var<T>&);

UAD_INSTANTIATE(float)
UAD_INSTANTIATE(double)
#undef UAD_INSTANTIATE

}  // namespace uad
