// SPDX-License-Identifier: Apache-2.0
#include "dmsr/optimizer.hpp"

#include "dmsr/error.hpp"

#include <cmath>

namespace dmsr {

template <typename Scalar>
void OptimizerState<Scalar>::compact(std::span<const bool> keep, const std::vector<std::size_t>& strides) {
    if (strides.size() != slots.size()) fail(ErrorKind::State, "optimizer compact: stride list mismatch");
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const std::size_t stride = strides[s];
        if (stride == 0) continue;
        auto& slot = slots[s];
        if (slot.m.size() != keep.size() * stride) fail(ErrorKind::State, "optimizer compact: slot " + slot.name + " size mismatch");
        std::size_t out = 0;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!keep[i]) continue;
            for (std::size_t k = 0; k < stride; ++k) {
                slot.m[out * stride + k] = slot.m[i * stride + k];
                slot.v[out * stride + k] = slot.v[i * stride + k];
            }
            ++out;
        }
        slot.m.resize(out * stride);
        slot.v.resize(out * stride);
    }
}

template <typename Scalar>
void optimizer_step(std::span<OptimTensor<Scalar>> tensors, OptimizerState<Scalar>& state,
                    const LearningRates& rates, std::span<const std::uint8_t> skip) {
    for (const auto& t : tensors) {
        if (t.values.size() != t.grads.size()) fail(ErrorKind::State, "optimizer: gradient shape mismatch for " + t.name);
        for (const Scalar g : t.grads) {
            if (!std::isfinite(g)) fail(ErrorKind::Training, "optimizer: non-finite gradient in group '" + t.group + "' (" + t.name + ")");
        }
    }
    if (state.slots.empty()) {
        for (const auto& t : tensors)
            state.slots.push_back({t.name, std::vector<Scalar>(t.values.size(), 0), std::vector<Scalar>(t.values.size(), 0)});
    }
    if (state.slots.size() != tensors.size()) fail(ErrorKind::State, "optimizer: tensor list changed between steps");

    ++state.step;
    const double b1 = state.hyper.beta1, b2 = state.hyper.beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const Scalar sb1 = static_cast<Scalar>(b1), sb2 = static_cast<Scalar>(b2);
    const Scalar eps = static_cast<Scalar>(state.hyper.eps);

    for (std::size_t s = 0; s < tensors.size(); ++s) {
        auto& t = tensors[s];
        auto& slot = state.slots[s];
        if (slot.m.size() != t.values.size()) fail(ErrorKind::State, "optimizer: moment shape mismatch for " + t.name);
        const double lr = rates.rate(t.group);
        const Scalar step_size = static_cast<Scalar>(lr / bias1);
        const Scalar inv_sqrt_bias2 = static_cast<Scalar>(1.0 / std::sqrt(bias2));
        const bool masked = t.stride > 0 && !skip.empty();
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            if (masked && skip[i / t.stride]) continue;
            const Scalar g = t.grads[i];
            slot.m[i] = sb1 * slot.m[i] + (Scalar(1) - sb1) * g;
            slot.v[i] = sb2 * slot.v[i] + (Scalar(1) - sb2) * g * g;
            t.values[i] -= step_size * slot.m[i] / (std::sqrt(slot.v[i]) * inv_sqrt_bias2 + eps);
        }
    }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void optimizer_step(std::span<OptimTensor<float>>, OptimizerState<float>&, const LearningRates&,
                             std::span<const std::uint8_t>);
template void optimizer_step(std::span<OptimTensor<double>>, OptimizerState<double>&, const LearningRates&,
                             std::span<const std::uint8_t>);

}  // namespace dmsr
