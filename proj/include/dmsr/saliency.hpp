// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/deformation.hpp"
#include "dmsr/gaussian.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace dmsr {

struct SaliencyConfig {
    bool enabled = true;
    double ema_decay = 0.9;
    double threshold_quantile = 0.3;
    int warmup_iters = 500;
    int refresh_interval = 100;
    // Uniform timestamp bins over [0, 1] for cached deltas. 1 = single snapshot.
    int time_bins = 8;
    // Re-activate frozen Gaussians whose accumulated screen-space gradient
    // exceeds this percentile of the active ones.
    bool reactivation = true;
    double reactivation_percentile = 0.95;
    // Render frozen Gaussians with cached deltas (true) or canonical attributes.
    bool render_cached = true;
    // Also stop canonical-attribute updates for frozen Gaussians.
    bool freeze_canonical = false;

    void validate() const;
};

template <typename Scalar>
struct SaliencyState {
    SaliencyConfig config;
    std::vector<Scalar> ema;
    std::vector<std::uint8_t> frozen;
    // cached[i * time_bins + b], valid flag alongside.
    AlignedVector<Deltas<Scalar>> cached;
    std::vector<std::uint8_t> cached_valid;
    // Screen-space gradient magnitude accumulated since the last refresh.
    std::vector<Scalar> grad_accum;
    // Upper bound on |frozen| set at the most recent refresh.
    std::size_t frozen_cap = 0;
    Scalar last_threshold = 0;

    SaliencyState() = default;
    SaliencyState(const SaliencyConfig& cfg, std::size_t count);

    std::size_t size() const { return ema.size(); }
    std::size_t frozen_count() const;
    std::size_t active_count() const { return size() - frozen_count(); }
    int bin_of(Scalar t) const;
    void compact(std::span<const bool> keep);
    // Overwrites the cache slot for t's bin.
    void record_deltas(std::size_t index, Scalar t, const Deltas<Scalar>& deltas);
    // Cached deltas from the nearest populated bin, or nullptr.
    const Deltas<Scalar>* cached_deltas(std::size_t index, Scalar t) const;
};

// sigma_i = |dX| / extent + |dr| + |ds|; EMA over non-frozen Gaussians only.
// deltas is indexed by Gaussian. Throws Training naming the first Gaussian
// with non-finite deltas.
template <typename Scalar>
void update_saliency(SaliencyState<Scalar>& state, std::span<const Deltas<Scalar>> deltas, Scalar scene_extent);

template <typename Scalar>
Scalar instantaneous_saliency(const Deltas<Scalar>& d, Scalar scene_extent) {
    return d.position.norm() / scene_extent + d.rotation.norm() + d.log_scale.norm();
}

struct RefreshReport {
    int iteration = 0;
    bool applied = false;
    double threshold = 0;
    std::size_t frozen_count = 0;
    std::size_t newly_frozen = 0;
    std::size_t reactivated = 0;
    double mean_active_saliency = 0;
    double mean_frozen_saliency = 0;
};

// Linear-interpolated quantile (q in [0, 1]) of values.
double quantile(std::vector<double> values, double q);

// Partitions by the threshold_quantile of active EMAs. Strictly-below
// Gaussians freeze, in ascending (ema, index) order, until |frozen| reaches
// floor(quantile * N). No-op before warmup.
template <typename Scalar>
RefreshReport refresh_partition(SaliencyState<Scalar>& state, int iteration);

void write_refresh_csv_header(std::ostream& out);
void write_refresh_csv_row(std::ostream& out, const RefreshReport& report);

template <typename Scalar>
struct GatedDeformResult {
    AlignedVector<Deltas<Scalar>> deltas;  // one per Gaussian
    std::vector<std::uint32_t> active;     // Gaussians evaluated by the network, ascending
    DeformTape<Scalar> tape;               // batch over `active`
    std::size_t network_evaluations = 0;
    std::size_t cache_fallbacks = 0;
};

// Active Gaussians run encode -> enhance -> decode with a tape; frozen ones
// reuse cached deltas without touching the network. With state == nullptr
// or gating disabled every Gaussian is active.
template <typename Scalar>
GatedDeformResult<Scalar> gated_deform(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>& field,
                                       Scalar t, const SaliencyState<Scalar>* state);

// Pulls per-Gaussian delta gradients back into the field. Frozen Gaussians
// contribute nothing.
template <typename Scalar>
DeformBackward<Scalar> gated_deform_backward(const DeformationField<Scalar>& field,
                                             const GatedDeformResult<Scalar>& result,
                                             std::span<const Deltas<Scalar>> d_deltas);

}  // namespace dmsr
