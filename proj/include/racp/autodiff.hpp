#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "racp/tensor.hpp"

namespace racp {

/**
 * A node in the reverse-mode graph.
 *
 * `grad` is allocated lazily on the first accumulation and always has the
 * same shape as `value`. `backward_fn` reads this node's grad and adds
 * contributions into its parents' grads.
 */
struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer() {
        if (!has_grad) {
            grad = Tensor(value.shape(), 0.0);
            has_grad = true;
        }
        return grad;
    }

    /// Grad for one contribution: when `fresh` the buffer is uninitialized and must be assigned, not added to.
    Tensor& grad_slot(bool& fresh) {
        fresh = !has_grad;
        if (fresh) {
            grad = Tensor::uninit(value.shape());
            has_grad = true;
        }
        return grad;
    }

    void zero_grad() {
        has_grad = false;
        grad = Tensor();
    }
};

/// Shared handle to a graph node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    /// Leaf holding a constant (no gradient).
    static Var constant(Tensor value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        return Var(std::move(n));
    }

    /// Leaf that collects gradients.
    static Var leaf(Tensor value) {
        auto n = std::make_shared<Node>();
        n->value = std::move(value);
        n->requires_grad = true;
        return Var(std::move(n));
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->has_grad; }
    const Tensor& grad() const { return node_->grad; }
    void zero_grad() { node_->zero_grad(); }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

    /// Scalar convenience for shape-[1] results.
    double item() const { return node_->value[0]; }

private:
    std::shared_ptr<Node> node_;
};

/// Builds the result node of a primitive; the node requires grad iff any input does.
inline Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (auto& in : inputs) {
        if (in.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        n->parents.reserve(inputs.size());
        for (auto& in : inputs) n->parents.push_back(in.ptr());
        n->backward_fn = std::move(backward_fn);
    }
    return Var(std::move(n));
}

/**
 * Reverse sweep from a scalar root. Gradients accumulate (+=) into every
 * reachable node that requires grad; leaves keep theirs until zero_grad.
 */
inline void backward(const Var& root) {
    if (root.value().size() != 1)
        throw DimensionError("backward requires a scalar root, got " + shape_str(root.shape()));
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&root.node(), 0);
    visited.insert(&root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node().grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn && node->has_grad) node->backward_fn(*node);
    }
}

}  // namespace racp
