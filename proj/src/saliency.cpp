// SPDX-License-Identifier: Apache-2.0
#include "dmsr/saliency.hpp"

#include "dmsr/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

namespace dmsr {

void SaliencyConfig::validate() const {
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail(ErrorKind::Config, "saliency: ema_decay must be in [0, 1)");
    if (!(threshold_quantile > 0.0 && threshold_quantile < 1.0)) {
        fail(ErrorKind::Config, "saliency: threshold_quantile must be in (0, 1)");
    }
    if (warmup_iters < 0 || refresh_interval < 1 || time_bins < 1) {
        fail(ErrorKind::Config, "saliency: warmup >= 0, refresh_interval >= 1, time_bins >= 1 required");
    }
    if (!(reactivation_percentile > 0.0 && reactivation_percentile <= 1.0)) {
        fail(ErrorKind::Config, "saliency: reactivation_percentile must be in (0, 1]");
    }
}

template <typename Scalar>
SaliencyState<Scalar>::SaliencyState(const SaliencyConfig& cfg, std::size_t count)
    : config(cfg),
      ema(count, Scalar(0)),
      frozen(count, 0),
      cached(count * static_cast<std::size_t>(cfg.time_bins)),
      cached_valid(count * static_cast<std::size_t>(cfg.time_bins), 0),
      grad_accum(count, Scalar(0)) {
    config.validate();
}

template <typename Scalar>
std::size_t SaliencyState<Scalar>::frozen_count() const {
    return static_cast<std::size_t>(std::count(frozen.begin(), frozen.end(), std::uint8_t{1}));
}

template <typename Scalar>
int SaliencyState<Scalar>::bin_of(Scalar t) const {
    const int bins = config.time_bins;
    const int b = static_cast<int>(std::floor(static_cast<double>(t) * bins));
    return std::clamp(b, 0, bins - 1);
}

template <typename Scalar>
void SaliencyState<Scalar>::compact(std::span<const bool> keep) {
    if (keep.size() != size()) fail(ErrorKind::State, "saliency compact: mask length mismatch");
    const std::size_t bins = static_cast<std::size_t>(config.time_bins);
    std::size_t out = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        ema[out] = ema[i];
        frozen[out] = frozen[i];
        grad_accum[out] = grad_accum[i];
        for (std::size_t b = 0; b < bins; ++b) {
            cached[out * bins + b] = cached[i * bins + b];
            cached_valid[out * bins + b] = cached_valid[i * bins + b];
        }
        ++out;
    }
    ema.resize(out);
    frozen.resize(out);
    grad_accum.resize(out);
    cached.resize(out * bins);
    cached_valid.resize(out * bins);
    frozen_cap = std::min(frozen_cap, out);
}

template <typename Scalar>
void SaliencyState<Scalar>::record_deltas(std::size_t index, Scalar t, const Deltas<Scalar>& deltas) {
    const std::size_t slot = index * static_cast<std::size_t>(config.time_bins) + static_cast<std::size_t>(bin_of(t));
    cached[slot] = deltas;
    cached_valid[slot] = 1;
}

template <typename Scalar>
const Deltas<Scalar>* SaliencyState<Scalar>::cached_deltas(std::size_t index, Scalar t) const {
    const int bins = config.time_bins;
    const int home = bin_of(t);
    const std::size_t base = index * static_cast<std::size_t>(bins);
    // Search outwards; ties go to the earlier bin.
    for (int radius = 0; radius < bins; ++radius) {
        for (const int b : {home - radius, home + radius}) {
            if (b < 0 || b >= bins) continue;
            if (cached_valid[base + static_cast<std::size_t>(b)]) return &cached[base + static_cast<std::size_t>(b)];
        }
    }
    return nullptr;
}

template <typename Scalar>
void update_saliency(SaliencyState<Scalar>& state, std::span<const Deltas<Scalar>> deltas, Scalar scene_extent) {
    if (deltas.size() != state.size()) fail(ErrorKind::State, "update_saliency: delta count mismatch");
    if (!(scene_extent > Scalar(0))) fail(ErrorKind::InvalidParameter, "update_saliency: scene_extent must be > 0");
    const Scalar decay = static_cast<Scalar>(state.config.ema_decay);
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        if (state.frozen[i]) continue;
        const auto& d = deltas[i];
        if (!d.position.allFinite() || !d.rotation.allFinite() || !d.log_scale.allFinite()) {
            fail(ErrorKind::Training, "update_saliency: non-finite deltas for Gaussian " + std::to_string(i));
        }
        state.ema[i] = decay * state.ema[i] + (Scalar(1) - decay) * instantaneous_saliency(d, scene_extent);
    }
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

template <typename Scalar>
RefreshReport refresh_partition(SaliencyState<Scalar>& state, int iteration) {
    RefreshReport report;
    report.iteration = iteration;
    const auto& cfg = state.config;
    const std::size_t n = state.size();
    if (!cfg.enabled || iteration < cfg.warmup_iters || n == 0) {
        report.frozen_count = state.frozen_count();
        return report;
    }
    report.applied = true;

    std::vector<std::uint8_t> just_reactivated(n, 0);
    if (cfg.reactivation && state.frozen_count() > 0) {
        std::vector<double> active_grads;
        for (std::size_t i = 0; i < n; ++i)
            if (!state.frozen[i]) active_grads.push_back(static_cast<double>(state.grad_accum[i]));
        if (!active_grads.empty()) {
            const double bound = quantile(active_grads, cfg.reactivation_percentile);
            for (std::size_t i = 0; i < n; ++i) {
                if (state.frozen[i] && static_cast<double>(state.grad_accum[i]) > bound) {
                    state.frozen[i] = 0;
                    just_reactivated[i] = 1;
                    ++report.reactivated;
                }
            }
        }
    }

    std::vector<double> active_ema;
    std::vector<std::uint32_t> candidates;
    for (std::size_t i = 0; i < n; ++i)
        if (!state.frozen[i]) active_ema.push_back(static_cast<double>(state.ema[i]));
    const double threshold = quantile(active_ema, cfg.threshold_quantile);
    for (std::size_t i = 0; i < n; ++i) {
        if (!state.frozen[i] && !just_reactivated[i] && static_cast<double>(state.ema[i]) < threshold) {
            candidates.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (state.ema[a] != state.ema[b]) return state.ema[a] < state.ema[b];
        return a < b;
    });
    state.frozen_cap = static_cast<std::size_t>(std::floor(cfg.threshold_quantile * static_cast<double>(n)));
    std::size_t frozen_now = state.frozen_count();
    for (const std::uint32_t i : candidates) {
        if (frozen_now >= state.frozen_cap) break;
        state.frozen[i] = 1;
        ++frozen_now;
        ++report.newly_frozen;
    }
    std::fill(state.grad_accum.begin(), state.grad_accum.end(), Scalar(0));
    state.last_threshold = static_cast<Scalar>(threshold);

    report.threshold = threshold;
    report.frozen_count = frozen_now;
    double sum_active = 0, sum_frozen = 0;
    for (std::size_t i = 0; i < n; ++i) (state.frozen[i] ? sum_frozen : sum_active) += static_cast<double>(state.ema[i]);
    const std::size_t active = n - frozen_now;
    report.mean_active_saliency = active ? sum_active / static_cast<double>(active) : 0.0;
    report.mean_frozen_saliency = frozen_now ? sum_frozen / static_cast<double>(frozen_now) : 0.0;
    return report;
}

void write_refresh_csv_header(std::ostream& out) {
    out << "iteration,threshold,frozen_count,mean_active_saliency,mean_frozen_saliency\n";
}

void write_refresh_csv_row(std::ostream& out, const RefreshReport& r) {
    out << r.iteration << ',' << r.threshold << ',' << r.frozen_count << ',' << r.mean_active_saliency << ','
        << r.mean_frozen_saliency << '\n';
}

template <typename Scalar>
GatedDeformResult<Scalar> gated_deform(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>& field,
                                       Scalar t, const SaliencyState<Scalar>* state) {
    const std::size_t n = cloud.size();
    const bool gating = state && state->config.enabled;
    if (gating && state->size() != n) fail(ErrorKind::State, "gated_deform: saliency state size mismatch");

    GatedDeformResult<Scalar> result;
    result.deltas.assign(n, Deltas<Scalar>{});
    AlignedVector<Vec3<Scalar>> active_positions;
    for (std::size_t i = 0; i < n; ++i) {
        if (gating && state->frozen[i]) continue;
        result.active.push_back(static_cast<std::uint32_t>(i));
        active_positions.push_back(cloud.positions[i]);
    }
    if (!result.active.empty()) {
        const Scalar times[1] = {t};
        const DeformOutput<Scalar> out = field.forward(active_positions, times, &result.tape);
        for (std::size_t k = 0; k < result.active.size(); ++k)
            result.deltas[result.active[k]] = out.column(static_cast<Eigen::Index>(k));
        result.network_evaluations = result.active.size();
    }
    if (gating && state->config.render_cached) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!state->frozen[i]) continue;
            if (const auto* cached = state->cached_deltas(i, t)) {
                result.deltas[i] = *cached;
            } else {
                ++result.cache_fallbacks;
            }
        }
    }
    return result;
}

template <typename Scalar>
DeformBackward<Scalar> gated_deform_backward(const DeformationField<Scalar>& field,
                                             const GatedDeformResult<Scalar>& result,
                                             std::span<const Deltas<Scalar>> d_deltas) {
    const Eigen::Index m = static_cast<Eigen::Index>(result.active.size());
    if (m == 0) {
        DeformBackward<Scalar> empty;
        empty.params = field.params().zeros_like();
        empty.d_positions = MatX<Scalar>::Zero(3, 0);
        return empty;
    }
    MatX<Scalar> dp(3, m), dr(4, m), ds(3, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& d = d_deltas[result.active[static_cast<std::size_t>(k)]];
        dp.col(k) = d.position;
        dr.col(k) = d.rotation;
        ds.col(k) = d.log_scale;
    }
    return field.backward(result.tape, dp, dr, ds);
}

#define DMSR_INSTANTIATE_SALIENCY(S)                                                                   \
    template struct SaliencyState<S>;                                                                  \
    template void update_saliency(SaliencyState<S>&, std::span<const Deltas<S>>, S);                   \
    template RefreshReport refresh_partition(SaliencyState<S>&, int);                                  \
    template GatedDeformResult<S> gated_deform(const GaussianCloud<S>&, const DeformationField<S>&, S, \
                                               const SaliencyState<S>*);                               \
    template DeformBackward<S> gated_deform_backward(const DeformationField<S>&,                       \
                                                     const GatedDeformResult<S>&,                      \
                                                     std::span<const Deltas<S>>);

DMSR_INSTANTIATE_SALIENCY(float)
DMSR_INSTANTIATE_SALIENCY(double)

}  // namespace dmsr
