#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rgbdface/nn/tensor.hpp"

namespace rgbdface::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }

  Tensor& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
  }

  void accumulate(const Tensor& g) {
    Tensor& buf = grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables graph construction for its lifetime (inference, evaluation).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Handle to a node in the computation graph. Copies alias the same node,
// which is how parameters are shared between networks.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  double item() const { return node_->value.item(); }

  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(0.0);
  }

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  bool same_storage(const Var& o) const { return node_ == o.node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds an op result. The backward closure is only attached when some input
// needs a gradient and graph construction is enabled.
inline Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Var out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Var& v : inputs) needs = needs || v.requires_grad();
  if (!needs) return out;
  Node* n = out.node();
  n->requires_grad = true;
  n->inputs.reserve(inputs.size());
  for (Var& v : inputs) n->inputs.push_back(v.node_ptr());
  n->backward_fn = std::move(backward);
  return out;
}

// Reverse-mode sweep from a scalar root. Intermediate gradients are reset on
// every call so the same graph can be differentiated from several roots;
// leaf gradients accumulate until the caller zeroes them.
inline void backward(const Var& root, double seed = 1.0) {
  require<ShapeError>(root.value().size() == 1, "backward() root must be a scalar, got ",
                      shape_str(root.shape()));
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order)
    if (!n->is_leaf()) n->grad_buffer().fill(0.0);

  root.node()->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
}

// Gradient accumulation helper used inside backward closures.
inline Tensor& grad_of(Node& self, std::size_t input) { return self.inputs[input]->grad_buffer(); }
inline bool wants_grad(const Node& self, std::size_t input) { return self.inputs[input]->requires_grad; }

}  // namespace rgbdface::nn
