// Reverse-mode automatic differentiation over dense float64 matrices.
//
// Design: dynamic define-by-run graph.  Every Tensor wraps a shared Node
// holding its value; ops (see ops.hpp) link result nodes to their parents
// and attach a backward closure.  backward(loss) walks reachable nodes in
// reverse creation order exactly once and returns the accumulated
// gradients in a GradMap keyed by node identity, so concurrent backward
// passes over disjoint graphs may safely share read-only leaves.
//
// Scope: first-order only, no in-place ops, no broadcasting beyond a
// leading batch dimension (see ops.hpp).  All data is 2-D [rows, cols];
// scalars are 1x1, batches of D-vectors are [batch, D].
#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "ebmgeo/common.hpp"

namespace ebmgeo::ad {

using Matrix = Eigen::MatrixXd;

class GradMap;

struct Node {
    Matrix value;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates d(loss)/d(parents) into the map, given d(loss)/d(this).
    std::function<void(const Matrix& grad, GradMap& gm)> backward;
    std::uint64_t order = 0;       // creation index, defines topological order
    bool requires_grad = false;    // leaf parameter/input, or derived from one
    bool backward_done = false;    // double-backward guard (loss nodes only)

    static std::uint64_t next_order() {
        static std::atomic<std::uint64_t> counter{0};
        return counter.fetch_add(1, std::memory_order_relaxed);
    }
};

using NodePtr = std::shared_ptr<Node>;

// Gradients keyed by node identity; absent entry means zero gradient.
class GradMap {
  public:
    Matrix& accumulate(const Node* n, const Matrix& g) {
        auto it = grads_.find(n);
        if (it == grads_.end()) {
            return grads_.emplace(n, g).first->second;
        }
        it->second += g;
        return it->second;
    }

    const Matrix* find(const Node* n) const {
        auto it = grads_.find(n);
        return it == grads_.end() ? nullptr : &it->second;
    }

    bool contains(const Node* n) const { return grads_.count(n) != 0; }

  private:
    std::unordered_map<const Node*, Matrix> grads_;
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    // Constant value: participates in arithmetic, receives no gradient.
    static Tensor constant(Matrix m) {
        auto n = std::make_shared<Node>();
        n->value = std::move(m);
        n->order = Node::next_order();
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) {
        Matrix m(1, 1);
        m(0, 0) = v;
        return constant(std::move(m));
    }

    // Trainable leaf (network parameter) or differentiable input.
    static Tensor leaf(Matrix m) {
        Tensor t = constant(std::move(m));
        t.node_->requires_grad = true;
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }  // optimizers only
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const NodePtr& node() const { return node_; }

    bool is_scalar() const { return rows() == 1 && cols() == 1; }
    double scalar_value() const {
        if (!is_scalar())
            throw ShapeError("scalar_value: tensor has shape " +
                             shape_str(rows(), cols()));
        return node_->value(0, 0);
    }

    // Same values, no history: gradients never flow through the result.
    Tensor detach() const { return constant(node_->value); }

  private:
    NodePtr node_;
};

// Reverse pass from a scalar loss.  Returns gradients for every
// requires_grad node reachable from the loss; leaves the graph intact.
// Errors: non-scalar loss; loss detached from any differentiable leaf;
// repeated backward through the same loss node.
GradMap backward(const Tensor& loss);

// Convenience: gradient of `loss` w.r.t. `wrt`, zeros if unreached.
Matrix gradient(const GradMap& gm, const Tensor& wrt);

}  // namespace ebmgeo::ad
