#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dpmn/adam.hpp"
#include "dpmn/rng.hpp"
#include "dpmn/threads.hpp"

namespace dpmn {

// Central-difference gradient verification at fp64. The loss builder is called
// repeatedly and must rebuild the graph from the parameters' current values.
// Large tensors can be checked on an evenly spaced seeded subset of
// coordinates to keep the suite inside its time budget; small tensors are
// checked in full.

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    i64 max_coords_per_param = 0;  // 0 = all
    u64 select_seed = 0x5eed;
    // Floor for the relative-error denominator. 0 picks it from the loss
    // scale: central differences carry ~|L|*eps_machine/eps of roundoff, so
    // coordinates whose true gradient sits below that are noise, not signal.
    double denom_floor = 0.0;
};

struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel = 0.0;
        double max_abs = 0.0;
        i64 coords_checked = 0;
        bool finite = true;
    };
    std::vector<Entry> entries;
    double max_rel = 0.0;
    bool all_finite = true;

    bool pass(double tol) const { return all_finite && max_rel <= tol; }
};

inline double rel_err(double a, double b, double floor = 1e-6) {
    const double scale = std::max({std::abs(a), std::abs(b), floor});
    return std::abs(a - b) / scale;
}

inline GradCheckReport gradcheck(const std::function<NodePtr<double>()>& build_loss,
                                 const std::vector<Parameter<double>*>& params,
                                 const GradCheckOptions& opt = {}) {
    ThreadGuard single(1);  // verification mode is single-threaded

    zero_grads(params);
    NodePtr<double> loss = build_loss();
    const double floor =
        opt.denom_floor > 0
            ? opt.denom_floor
            : std::max(1e-6, 3e-5 * std::max(1.0, std::abs(static_cast<double>(loss->value[0]))));
    backward(loss);
    std::vector<Tensor<double>> analytic;
    analytic.reserve(params.size());
    for (Parameter<double>* p : params)
        analytic.push_back(p->node->has_grad() ? p->node->grad.clone()
                                               : Tensor<double>(p->value().shape()));

    auto eval = [&]() -> double {
        NoGradGuard ng;
        return build_loss()->value[0];
    };

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter<double>* p = params[pi];
        const i64 n = p->value().numel();
        GradCheckReport::Entry e;
        e.name = p->name;

        std::vector<i64> coords;
        if (opt.max_coords_per_param > 0 && n > opt.max_coords_per_param) {
            Rng rng(opt.select_seed ^ fnv1a(p->name));
            const i64 k = opt.max_coords_per_param;
            for (i64 j = 0; j < k; ++j) {
                const i64 lo = n * j / k, hi = n * (j + 1) / k;
                coords.push_back(lo + rng.uniform_int(hi - lo));
            }
        } else {
            coords.resize(static_cast<size_t>(n));
            for (i64 j = 0; j < n; ++j) coords[static_cast<size_t>(j)] = j;
        }

        for (i64 idx : coords) {
            double& x = p->value()[idx];
            const double x0 = x;
            x = x0 + opt.eps;
            const double lp = eval();
            x = x0 - opt.eps;
            const double lm = eval();
            x = x0;
            const double fd = (lp - lm) / (2.0 * opt.eps);
            if (!std::isfinite(fd)) {
                e.finite = false;
                continue;
            }
            const double a = analytic[pi][idx];
            e.max_rel = std::max(e.max_rel, rel_err(a, fd, floor));
            e.max_abs = std::max(e.max_abs, std::abs(a - fd));
        }
        e.coords_checked = static_cast<i64>(coords.size());
        report.max_rel = std::max(report.max_rel, e.max_rel);
        report.all_finite = report.all_finite && e.finite;
        report.entries.push_back(std::move(e));
    }
    zero_grads(params);
    return report;
}

}  // namespace dpmn
