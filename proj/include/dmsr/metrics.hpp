// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/image.hpp"

#include <limits>

namespace dmsr {

struct SsimOptions {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

// 10 log10(1 / MSE). Identical images give +infinity.
template <typename Scalar>
double psnr(const Image<Scalar>& a, const Image<Scalar>& b);

// Mean local SSIM over the valid (unpadded) window positions of all three
// channels. Throws InvalidParameter when a side is shorter than the window.
template <typename Scalar>
Scalar ssim(const Image<Scalar>& a, const Image<Scalar>& b, const SsimOptions& options = {});

// SSIM and its gradient with respect to `a`.
template <typename Scalar>
Scalar ssim_with_grad(const Image<Scalar>& a, const Image<Scalar>& b, Image<Scalar>& d_a,
                      const SsimOptions& options = {});

// Normalized 1D Gaussian taps used by the separable SSIM window.
std::vector<double> gaussian_window(int size, double sigma);

inline bool is_inf_psnr(double value) { return value == std::numeric_limits<double>::infinity(); }

}  // namespace dmsr
