#pragma once

#include "handmesh/tensor.hpp"

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

namespace handmesh {

template <typename Scalar>
struct Node {
    Tensor<Scalar> value;
    Vector<Scalar> grad;  // lazily allocated, same length as value
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads `this->grad` and accumulates into the inputs that require grad.
    std::function<void(Node&)> backward;

    Vector<Scalar>& grad_buffer() {
        if (grad.size() != value.size()) grad = Vector<Scalar>::Zero(value.size());
        return grad;
    }
    bool is_leaf() const { return inputs.empty(); }
};

/// Thread-local switch for graph recording. Inference paths disable it.
class GradMode {
   public:
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

   private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
   public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

/// Shared handle to a node of the dynamically recorded computation graph.
template <typename Scalar>
class Var {
   public:
    using NodePtr = std::shared_ptr<Node<Scalar>>;

    Var() = default;
    explicit Var(Tensor<Scalar> value, bool requires_grad = false)
        : node_(std::make_shared<Node<Scalar>>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var leaf(Tensor<Scalar> value) { return Var(std::move(value), true); }
    static Var constant(Tensor<Scalar> value) { return Var(std::move(value), false); }

    /// Wraps the output of an operation. The graph edge is kept only if some
    /// input needs a gradient and recording is enabled.
    static Var result(Tensor<Scalar> value, std::vector<Var> inputs, const char* op,
                      std::function<void(Node<Scalar>&)> backward) {
        Var out(std::move(value), false);
        out.node_->op = op;
        if (!GradMode::enabled()) return out;
        bool any = false;
        for (const Var& in : inputs) any = any || (in.defined() && in.requires_grad());
        if (!any) return out;
        out.node_->requires_grad = true;
        out.node_->backward = std::move(backward);
        out.node_->inputs.reserve(inputs.size());
        for (Var& in : inputs) out.node_->inputs.push_back(in.node_);
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<Scalar>& value() const { return node_->value; }
    Tensor<Scalar>& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    Index size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Accumulated gradient; zero-length when none has been produced.
    const Vector<Scalar>& grad() const { return node_->grad; }
    Tensor<Scalar> grad_tensor() const {
        if (node_->grad.size() == 0) return Tensor<Scalar>::zeros(shape());
        return Tensor<Scalar>(shape(), node_->grad);
    }
    Vector<Scalar>& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad() {
        if (node_->grad.size()) node_->grad.setZero();
    }

    const NodePtr& node() const { return node_; }

   private:
    NodePtr node_;
};

template <typename Scalar>
inline Vector<Scalar>* grad_target(const std::shared_ptr<Node<Scalar>>& input) {
    return input->requires_grad ? &input->grad_buffer() : nullptr;
}

/// Topologically ordered list of the operations that produced a root value.
template <typename Scalar>
class ComputationRecord {
   public:
    static ComputationRecord trace(const Var<Scalar>& root) {
        ComputationRecord record;
        record.root_ = root.node();
        std::unordered_set<const Node<Scalar>*> seen;
        // Iterative post-order DFS; inputs are visited in declaration order so
        // the replay order is a pure function of the forward program.
        std::vector<std::pair<Node<Scalar>*, std::size_t>> stack;
        stack.emplace_back(record.root_.get(), 0);
        seen.insert(record.root_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->inputs.size()) {
                Node<Scalar>* child = node->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                record.order_.push_back(node);
                stack.pop_back();
            }
        }
        return record;
    }

    std::size_t size() const { return order_.size(); }
    const std::vector<Node<Scalar>*>& nodes() const { return order_; }

    void backward() const {
        if (root_->value.size() != 1) {
            throw ShapeError("backward: root must be a scalar, got shape " +
                             to_string(root_->value.shape()));
        }
        if (!root_->requires_grad) return;
        for (Node<Scalar>* node : order_) {
            if (!node->is_leaf() && node->grad.size()) node->grad.setZero();
        }
        root_->grad_buffer()[0] += Scalar(1);
        for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
            Node<Scalar>* node = *it;
            if (node->backward && node->grad.size()) node->backward(*node);
        }
    }

   private:
    std::shared_ptr<Node<Scalar>> root_;
    std::vector<Node<Scalar>*> order_;
};

template <typename Scalar>
void backward(const Var<Scalar>& loss) {
    ComputationRecord<Scalar>::trace(loss).backward();
}

}  // namespace handmesh
