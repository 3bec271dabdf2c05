#include "trd/autodiff.hpp"

#include <algorithm>
#include <unordered_set>

namespace trd {

namespace {
bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Var make_var(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && g_grad_enabled;
    return n;
}

Var detach(const Var& x) {
    auto n = std::make_shared<Node>();
    n->value = x->value;
    n->requires_grad = false;
    return n;
}

void backward(const Var& root) {
    if (root->value.size() != 1)
        throw DimensionError("backward: root must be a scalar, got shape " + shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    // Iterative post-order DFS -> topological order.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

}  // namespace trd
