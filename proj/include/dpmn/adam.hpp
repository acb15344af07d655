#pragma once

#include <string>

#include "dpmn/graph.hpp"

namespace dpmn {

// Learnable leaf plus Adam state.
template <typename T>
struct Parameter {
    std::string name;
    NodePtr<T> node;  // requires_grad leaf
    Tensor<T> adam_m, adam_v;
    i64 step_count = 0;

    explicit Parameter(std::string n, Tensor<T> init) : name(std::move(n)) {
        node = leaf(std::move(init), true);
        adam_m = Tensor<T>(node->value.shape());
        adam_v = Tensor<T>(node->value.shape());
    }

    Tensor<T>& value() { return node->value; }
    const Tensor<T>& value() const { return node->value; }
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; grads are zeroed afterward. Parameters
// whose grad was never touched this step update with g = 0.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, const AdamConfig& cfg = {}) {
    for (Parameter<T>* p : params) {
        p->step_count += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step_count));
        Tensor<T>& v = p->value();
        const bool has_g = p->node->has_grad();
        const T* g = has_g ? p->node->grad.data() : nullptr;
        T* m = p->adam_m.data();
        T* vv = p->adam_v.data();
        T* x = v.data();
        for (i64 i = 0; i < v.numel(); ++i) {
            const double gi = g ? static_cast<double>(g[i]) : 0.0;
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(vv[i]) + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            vv[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            x[i] = static_cast<T>(static_cast<double>(x[i]) -
                                  cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
        p->node->clear_grad();
    }
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
    for (Parameter<T>* p : params) p->node->clear_grad();
}

}  // namespace dpmn
