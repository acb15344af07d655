#pragma once

#include <string>
#include <vector>

#include "dpmn/tensor.hpp"

namespace dpmn::metrics {

// 10*log10(1/MSE) on [0,1] images, channels pooled; capped at 100 dB.
double psnr(const Tensor<double>& a, const Tensor<double>& b);

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2
// on L=1, computed per channel with reflective padding, then averaged.
double ssim(const Tensor<double>& a, const Tensor<double>& b);

struct EvalRecord {
    double psnr_db = 0;
    double ssim = 0;
    std::string recognized;
    bool exact_match = false;
    std::string tier;
};

// Case-insensitive exact-match rate. Throws on an empty set.
double recognition_accuracy(const std::vector<std::string>& predictions,
                            const std::vector<std::string>& labels);

bool labels_match(const std::string& a, const std::string& b);

}  // namespace dpmn::metrics
