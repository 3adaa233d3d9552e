// Copyright 2026 The AAGN Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode automatic differentiation over 4-D tensors.
//
// A Var is a shared handle to a graph node. Ops build nodes whose backward
// closure reads the node's own gradient and accumulates into the parents'.
// Nodes only keep parents and a closure when at least one input requires a
// gradient, so pure inference builds no graph.

#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "aagn/tensor.hpp"

namespace aagn::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows back
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  /// Lazily allocated gradient buffer matching `value`.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  [[nodiscard]] bool defined() const { return node_ != nullptr; }
  [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
  /// Mutable access for optimizers and checkpoint loading on leaf parameters.
  [[nodiscard]] Tensor<T>& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by the last backward pass; zeros if none reached it.
  [[nodiscard]] const Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  /// Same value, cut from the graph.
  [[nodiscard]] Var detach() const { return Var(node_->value, false); }

  [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Graph recording switch for the current thread.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording for its lifetime (evaluation, inference).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Builds the result node of an op. `backward` receives (result node) and is
/// only stored if some input needs gradients.
template <typename T, typename Fn>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, Fn&& backward) {
  Var<T> out(std::move(value), false);
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs || !grad_mode()) return out;
  auto node = out.node();
  node->requires_grad = true;
  for (const auto& in : inputs) node->parents.push_back(in.node());
  Node<T>* self = node.get();
  node->backward = [self, fn = std::forward<Fn>(backward)]() mutable { fn(*self); };
  return out;
}

/// Runs reverse accumulation from a scalar root (seed gradient 1).
template <typename T>
void backward(const Var<T>& root) {
  if (root.shape().numel() != 1) {
    throw ShapeError("backward requires a scalar root, got " + root.shape().str());
  }
  if (!root.requires_grad()) return;

  // Iterative DFS post-order over nodes that need gradients. Nodes are marked
  // when first expanded; in a DAG a marked node is either finished or on the
  // current path, so the post-order is topological.
  std::vector<Node<T>*> order;
  std::vector<Node<T>*> marked;  // kept sorted
  auto is_marked = [&marked](Node<T>* n) {
    return std::binary_search(marked.begin(), marked.end(), n);
  };
  std::vector<std::pair<Node<T>*, bool>> work{{root.node().get(), false}};
  while (!work.empty()) {
    auto [n, expanded] = work.back();
    work.pop_back();
    if (expanded) {
      order.push_back(n);
      continue;
    }
    if (is_marked(n)) continue;
    marked.insert(std::upper_bound(marked.begin(), marked.end(), n), n);
    work.push_back({n, true});
    for (const auto& p : n->parents) {
      if (p->requires_grad && !is_marked(p.get())) work.push_back({p.get(), false});
    }
  }

  Node<T>* r = root.node().get();
  r->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

}  // namespace aagn::ag
