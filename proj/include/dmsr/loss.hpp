// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/image.hpp"
#include "dmsr/metrics.hpp"

namespace dmsr {

struct LossWeights {
    double l1 = 0.8;
    double ssim = 0.2;
};

template <typename Scalar>
struct LossResult {
    Scalar loss = 0;
    Scalar l1 = 0;
    Scalar ssim = 1;
    Image<Scalar> d_rendered;
};

// l1 * mean|r - t| + ssim * (1 - SSIM(r, t)) and its gradient w.r.t. r.
// The L1 subgradient at r == t is 0.
template <typename Scalar>
LossResult<Scalar> compute_loss(const Image<Scalar>& rendered, const Image<Scalar>& target,
                                const LossWeights& weights = {}, const SsimOptions& ssim_options = {});

}  // namespace dmsr
