#include "ebmgeo/tensor.hpp"

#include <algorithm>

namespace ebmgeo::ad {

GradMap backward(const Tensor& loss) {
    if (!loss.defined())
        throw ShapeError("backward: undefined tensor");
    if (!loss.is_scalar())
        throw ShapeError("backward: loss must be a 1x1 scalar, got " +
                         shape_str(loss.rows(), loss.cols()));
    if (!loss.requires_grad())
        throw std::runtime_error(
            "backward: loss is detached from every differentiable leaf");
    Node* root = loss.node().get();
    if (root->backward_done)
        throw std::runtime_error(
            "backward: already run through this loss; rebuild the graph "
            "before differentiating again");
    root->backward_done = true;

    // Reachable differentiable subgraph, then reverse creation order.
    std::vector<Node*> order;
    std::unordered_map<const Node*, bool> seen;
    std::vector<Node*> stack{root};
    seen[root] = true;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p->requires_grad && !seen[p.get()]) {
                seen[p.get()] = true;
                stack.push_back(p.get());
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->order > b->order; });

    GradMap gm;
    gm.accumulate(root, Matrix::Ones(1, 1));
    for (Node* n : order) {
        const Matrix* g = gm.find(n);
        if (g == nullptr || !n->backward) continue;
        n->backward(*g, gm);
    }
    return gm;
}

Matrix gradient(const GradMap& gm, const Tensor& wrt) {
    const Matrix* g = gm.find(wrt.node().get());
    if (g != nullptr) return *g;
    return Matrix::Zero(wrt.rows(), wrt.cols());
}

}  // namespace ebmgeo::ad
