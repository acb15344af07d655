#pragma once

#include "dpmn/ops_image.hpp"

namespace dpmn::loss {

// All lambdas default to 1.
struct LossWeights {
    double pixel = 1.0;             // on the mean-squared pixel term
    double gradient = 1.0;          // on the mean-absolute gradient-profile term
    double cmm = 1.0;               // modulated-image loss
    double branch_graphic = 1.0;
    double branch_structure = 1.0;

    void validate() const {
        if (pixel < 0 || gradient < 0 || cmm < 0 || branch_graphic < 0 || branch_structure < 0)
            throw ConfigError("loss weights must be non-negative");
    }
};

// pixel MSE + gradient-profile mean-L1 between prediction and target
template <typename T>
NodePtr<T> img_loss(NodePtr<T> pred, NodePtr<T> target, double w_pixel = 1.0,
                    double w_gradient = 1.0) {
    require(pred->value.same_shape(target->value), "img_loss",
            shape_str(pred->value.shape()) + " vs " + shape_str(target->value.shape()));
    auto diff = sub(pred, target);
    auto pixel = mean_all(mul(diff, diff));
    auto grad_diff = sub(image_grad(target), image_grad(pred));
    auto profile = mean_all(abs_op(grad_diff));
    return add(scale(pixel, w_pixel), scale(profile, w_gradient));
}

// sum of per-step losses over a branch's refined images
template <typename T>
NodePtr<T> branch_loss(const std::vector<NodePtr<T>>& refined, NodePtr<T> target,
                       double w_pixel = 1.0, double w_gradient = 1.0) {
    require(!refined.empty(), "branch_loss", "no refined images");
    NodePtr<T> total = img_loss(refined[0], target, w_pixel, w_gradient);
    for (size_t i = 1; i < refined.size(); ++i)
        total = add(total, img_loss(refined[i], target, w_pixel, w_gradient));
    return total;
}

template <typename T>
NodePtr<T> total_loss(NodePtr<T> modulated, const std::vector<NodePtr<T>>& refined_graphic,
                      const std::vector<NodePtr<T>>& refined_structure, NodePtr<T> target,
                      const LossWeights& w = {}) {
    // the modulated-image term always uses unit pixel/gradient weights
    NodePtr<T> total = scale(img_loss(modulated, target, 1.0, 1.0), w.cmm);
    if (!refined_graphic.empty())
        total = add(total, scale(branch_loss(refined_graphic, target, w.pixel, w.gradient),
                                 w.branch_graphic));
    if (!refined_structure.empty())
        total = add(total, scale(branch_loss(refined_structure, target, w.pixel, w.gradient),
                                 w.branch_structure));
    return total;
}

}  // namespace dpmn::loss
