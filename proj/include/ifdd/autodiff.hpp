// Copyright (c) 2026 The IFDD Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation over a dynamically recorded graph.
//
// Every op produces a Var whose node keeps references to its inputs and a
// closure that pushes the node's gradient back into them. Leaves created with
// requires_grad (the model parameters) persist across steps and accumulate
// gradients until the optimizer clears them. A graph may be walked backward
// once; the walk releases the closures, and a second call on the same loss
// throws.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ifdd/tensor.hpp"

namespace ifdd {

/// Raised on misuse of the tape: non-scalar loss, or backward on a spent graph.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  bool released = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  const char* op() const { return node_->op; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer; zero-filled if nothing has flowed in yet.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

template <class T>
Var<T> parameter(Tensor<T> value) {
  return Var<T>(std::move(value), true);
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

/// Builds the output node of an op. When no input needs a gradient the
/// closure is dropped so that evaluation-only passes do not retain the graph.
template <class T>
Var<T> make_result(const char* op, Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  Var<T> out(std::move(value), false);
  auto& node = *out.node();
  node.op = op;
  bool any = false;
  if (grad_enabled())
    for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node.requires_grad = true;
    node.inputs.reserve(inputs.size());
    for (auto& in : inputs) node.inputs.push_back(in.node());
    node.backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a gradient.
template <class T>
void backward(const Var<T>& loss) {
  if (!loss.defined()) throw TapeError("backward on an undefined value");
  if (loss.numel() != 1) throw TapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  auto root = loss.node();
  if (root->released) throw TapeError("backward called twice on the same graph; run a fresh forward first");
  if (!root->requires_grad) return;
  if (root->inputs.empty()) {
    root->grad_buffer().fill(T(1));
    return;
  }

  // Iterative post-order DFS; reversing it gives a valid reverse-topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node<T>* child = n->inputs[next++].get();
      if (child->requires_grad && !child->inputs.empty() && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node<T>* n : order) {
    if (n->inputs.empty()) continue;  // leaves keep their gradients
    n->backward_fn = nullptr;
    n->inputs.clear();
    n->grad = Tensor<T>();
    n->released = true;
  }
}

}  // namespace ifdd
