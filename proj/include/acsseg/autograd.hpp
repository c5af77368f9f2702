#pragma once

// Minimal reverse-mode automatic differentiation over Tensor<T>.
//
// A Var is a handle to a graph node. Ops create result nodes that keep their
// inputs alive and carry a backward closure; backward() walks the graph in
// reverse topological order and accumulates into every node that requires a
// gradient. Leaf nodes (parameters) keep their gradients; interior nodes
// release theirs as soon as they have been propagated.

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "acsseg/tensor.hpp"

namespace acsseg {

namespace autograd_detail {
inline thread_local bool grad_mode = true;
}

inline bool grad_enabled() noexcept { return autograd_detail::grad_mode; }

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() noexcept : previous_(autograd_detail::grad_mode) { autograd_detail::grad_mode = false; }
  ~NoGradGuard() { autograd_detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.numel() != value.numel()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool parent_needs_grad(std::size_t i) const { return parents[i] && parents[i]->requires_grad; }
};

template <typename T>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  // Result of an op. Parents that are undefined Vars are allowed (optional inputs).
  static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward) {
    Var out(std::move(value));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_ && node_->grad.numel() == node_->value.numel() && !node_->grad.empty(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad() {
    if (node_) node_->grad = Tensor<T>();
  }
  Var detach() const { return Var(node_->value, false); }
  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

// Back-propagates from a single-element root.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined() || root.value().numel() != 1) {
    throw std::invalid_argument("backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  // Shared ownership keeps every node alive while upstream nodes drop their edges.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& parent = node->parents[next++];
      if (parent && parent->requires_grad && seen.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (!node->backward) continue;
    if (node->grad.numel() == node->value.numel() && !node->grad.empty()) node->backward(*node);
    node->grad = Tensor<T>();
    node->backward = nullptr;
    node->parents.clear();
  }
}

}  // namespace acsseg
