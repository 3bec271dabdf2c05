#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "trd/tensor.hpp"

namespace trd {

struct Node;
using Var = std::shared_ptr<Node>;

// One value in the computation graph. Ops allocate a Node, remember their
// parents and a closure that scatters this node's grad into the parents'.
struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated, same shape as value
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty() && !value.empty()) grad = Tensor(value.shape());
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.data(), grad.data() + grad.size(), 0.0);
    }
};

Var make_var(Tensor value, bool requires_grad = false);
inline Var constant(Tensor value) { return make_var(std::move(value), false); }

// Global autograd switch (single training writer; evaluation runs with the
// guard held and produces a parent-free graph).
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Shares the value but cuts the graph: gradients never flow past a detached
// node.
Var detach(const Var& x);

// Reverse pass from a scalar root; accumulates into .grad of every
// requires_grad node reachable from it.
void backward(const Var& root);

}  // namespace trd
