#pragma once

#include "dpmn/tensor.hpp"

// Plain (non-differentiable) image helpers shared by the synthetic data
// pipeline and the evaluation harness. All take/return HxWxC doubles in [0,1].

namespace dpmn::img {

Tensor<double> clamp01(const Tensor<double>& im);

// Gaussian blur with a kernel truncated at 2*sigma, reflective padding.
// sigma <= 0 returns the image unchanged.
Tensor<double> gaussian_blur(const Tensor<double>& im, double sigma);

// 2x box downsample (average of each 2x2 block).
Tensor<double> box_down2(const Tensor<double>& im);

// 2x bicubic upsample (Catmull-Rom, a = -0.5), reflective edges.
Tensor<double> bicubic_up2(const Tensor<double>& im);

Tensor<double> nearest_up2(const Tensor<double>& im);

// Round-trips values through the 8-bit integer domain (the on-disk form).
Tensor<double> quantize8(const Tensor<double>& im);

// Binary PPM (P6, maxval 255); bit-exact round trip with quantize8.
void write_ppm(const std::string& path, const Tensor<double>& im);
Tensor<double> read_ppm(const std::string& path);

}  // namespace dpmn::img
