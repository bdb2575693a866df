// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmsr {

// One named tensor handed to the optimizer. `group` selects the learning
// rate; `stride` is the number of scalars per Gaussian for per-Gaussian
// tensors (0 for global tensors such as network weights).
template <typename Scalar>
struct OptimTensor {
    std::string name;
    std::string group;
    std::span<Scalar> values;
    std::span<const Scalar> grads;
    std::size_t stride = 0;
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

template <typename Scalar>
struct AdamSlot {
    std::string name;
    std::vector<Scalar> m;
    std::vector<Scalar> v;
};

template <typename Scalar>
struct OptimizerState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<AdamSlot<Scalar>> slots;

    // Drops per-Gaussian rows whose keep flag is false from every slot
    // whose tensor has the given stride layout.
    void compact(std::span<const bool> keep, const std::vector<std::size_t>& strides);
};

class LearningRates {
public:
    virtual ~LearningRates() = default;
    virtual double rate(const std::string& group) const = 0;
};

// Bias-corrected Adam over every tensor, in order. Slots are created on the
// first call and must keep the same order and sizes afterwards. Gaussians
// with skip[i] != 0 are left untouched (values and moments) in per-Gaussian
// tensors. Throws Training naming the group of the first non-finite
// gradient; no parameter is modified in that case.
template <typename Scalar>
void optimizer_step(std::span<OptimTensor<Scalar>> tensors, OptimizerState<Scalar>& state,
                    const LearningRates& rates, std::span<const std::uint8_t> skip = {});

}  // namespace dmsr
