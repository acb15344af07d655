#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "dpmn/tensor.hpp"

namespace dpmn {

// Reverse-mode graph node. Graphs are built dynamically by the ops layer and
// freed when the root goes out of scope. backward_fn pulls this node's grad
// into the grads of its parents (+=).
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first write
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    bool has_grad() const { return !grad.empty(); }

    Tensor<T>& ensure_grad() {
        if (grad.empty()) grad = Tensor<T>(value.shape());
        return grad;
    }

    void clear_grad() {
        if (!grad.empty()) grad.fill(T(0));
    }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

// When off, ops skip building backward closures (inference).
bool grad_mode();
void set_grad_mode(bool on);

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode()) { set_grad_mode(false); }
    ~NoGradGuard() { set_grad_mode(prev_); }
    bool prev_;
};

// Forward-value finiteness check, active for double graphs (verification mode).
bool verify_finite();
void set_verify_finite(bool on);

template <typename T>
NodePtr<T> leaf(Tensor<T> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

template <typename T>
NodePtr<T> constant(Tensor<T> v) {
    return leaf(std::move(v), false);
}

template <typename T>
NodePtr<T> make_op(const char* name, Tensor<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> bw) {
    auto n = std::make_shared<Node<T>>();
    n->op = name;
    if constexpr (std::is_same_v<T, double>) {
        if (verify_finite() && !value.all_finite())
            throw ShapeError(std::string("op '") + name + "': non-finite forward value");
    }
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    n->parents = std::move(parents);
    if (rg && grad_mode()) n->backward_fn = std::move(bw);
    return n;
}

// Accumulates src into dst node's grad.
template <typename T>
void acc_grad(Node<T>& dst, const Tensor<T>& src) {
    Tensor<T>& g = dst.ensure_grad();
    const i64 n = g.numel();
    T* gd = g.data();
    const T* sd = src.data();
    for (i64 i = 0; i < n; ++i) gd[i] += sd[i];
}

// Topological order (parents before children), then runs backward in reverse.
// Each node is visited exactly once; grads of nodes unreachable from the loss
// are never touched.
template <typename T>
void backward(const NodePtr<T>& loss) {
    if (loss->value.numel() != 1)
        fail_shape("backward", "loss must be scalar, got " + shape_str(loss->value.shape()));

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node<T>* p = n->parents[idx++].get();
            if (!seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // order: parents first, loss last. Walk children-to-parents.
    loss->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
    }
}

}  // namespace dpmn
