// SPDX-License-Identifier: Apache-2.0
#include "dmsr/loss.hpp"

#include "dmsr/error.hpp"

namespace dmsr {

template <typename Scalar>
LossResult<Scalar> compute_loss(const Image<Scalar>& rendered, const Image<Scalar>& target,
                                const LossWeights& weights, const SsimOptions& ssim_options) {
    if (rendered.width != target.width || rendered.height != target.height) {
        fail(ErrorKind::InvalidParameter, "loss: rendered and target dimensions differ");
    }
    if (weights.l1 < 0 || weights.ssim < 0 || weights.l1 + weights.ssim <= 0) {
        fail(ErrorKind::InvalidParameter, "loss: weights must be non-negative with a positive sum");
    }
    LossResult<Scalar> out;
    const auto diff = (rendered.pixels - target.pixels).eval();
    const Scalar count = static_cast<Scalar>(diff.size());
    const Scalar wl1 = static_cast<Scalar>(weights.l1), wssim = static_cast<Scalar>(weights.ssim);
    out.l1 = diff.abs().sum() / count;
    out.d_rendered = Image<Scalar>(rendered.width, rendered.height);
    out.d_rendered.pixels = diff.sign() * (wl1 / count);
    out.loss = wl1 * out.l1;
    if (weights.ssim > 0) {
        Image<Scalar> d_ssim;
        out.ssim = ssim_with_grad(rendered, target, d_ssim, ssim_options);
        out.loss += wssim * (Scalar(1) - out.ssim);
        out.d_rendered.pixels -= wssim * d_ssim.pixels;
    }
    return out;
}

template LossResult<float> compute_loss(const Image<float>&, const Image<float>&, const LossWeights&,
                                        const SsimOptions&);
template LossResult<double> compute_loss(const Image<double>&, const Image<double>&, const LossWeights&,
                                         const SsimOptions&);

}  // namespace dmsr
