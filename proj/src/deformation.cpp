// SPDX-License-Identifier: Apache-2.0
#include "dmsr/deformation.hpp"

#include "dmsr/error.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/parallel.hpp"
#include "dmsr/random.hpp"

#include <algorithm>
#include <string>

namespace dmsr {

namespace {

constexpr const char* kAxisNames = "xyzt";

template <typename Scalar>
Linear<Scalar> zero_linear(int out, int in) {
    return {MatX<Scalar>::Zero(out, in), VecX<Scalar>::Zero(out)};
}

template <typename Scalar>
void init_linear(Linear<Scalar>& layer, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
        layer.weight.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        layer.bias[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
}

template <typename Scalar>
MatX<Scalar> silu_of(const MatX<Scalar>& z) {
    return z.unaryExpr([](Scalar v) { return silu(v); });
}

template <typename Scalar>
MatX<Scalar> silu_grad(const MatX<Scalar>& z) {
    return z.unaryExpr([](Scalar v) {
        const Scalar s = Scalar(1) / (Scalar(1) + std::exp(-v));
        return s * (Scalar(1) + v * (Scalar(1) - s));
    });
}

template <typename Scalar>
MatX<Scalar> affine(const Linear<Scalar>& layer, const MatX<Scalar>& x) {
    MatX<Scalar> out = layer.weight * x;
    out.colwise() += layer.bias;
    return out;
}

// Backprop through y = W x + b, accumulating dW, db; returns dx.
template <typename Scalar>
MatX<Scalar> affine_backward(const Linear<Scalar>& layer, const MatX<Scalar>& x, const MatX<Scalar>& dy,
                             Linear<Scalar>& grad) {
    grad.weight.noalias() += dy * x.transpose();
    grad.bias += dy.rowwise().sum();
    return layer.weight.transpose() * dy;
}

template <typename Scalar, typename Fn>
void for_each_layer(DeformParams<Scalar>& p, Fn&& fn) {
    for (std::size_t i = 0; i < p.trunk.size(); ++i) fn("trunk." + std::to_string(i), p.trunk[i]);
    static const char* head_names[3] = {"head_position", "head_rotation", "head_scale"};
    for (int h = 0; h < 3; ++h)
        for (std::size_t i = 0; i < p.heads[h].size(); ++i)
            fn(std::string(head_names[h]) + "." + std::to_string(i), p.heads[h][i]);
    fn(std::string("adapter"), p.adapter);
    for (std::size_t i = 0; i < p.fusion.size(); ++i) fn("fusion." + std::to_string(i), p.fusion[i]);
}

template <typename Scalar, typename Fn>
void for_each_layer(const DeformParams<Scalar>& p, Fn&& fn) {
    for_each_layer(const_cast<DeformParams<Scalar>&>(p),
                   [&](const std::string& name, Linear<Scalar>& l) { fn(name, static_cast<const Linear<Scalar>&>(l)); });
}

}  // namespace

void DeformationConfig::validate() const {
    if (levels < 1 || feature_dim < 1 || base_resolution < 2 || base_time_resolution < 2 || multiplier < 1) {
        fail(ErrorKind::Config, "deformation: grid sizes must be positive (resolution >= 2)");
    }
    if (trunk_width < 1 || trunk_depth < 1 || head_width < 1 || head_depth < 0 || enhance_hidden < 1) {
        fail(ErrorKind::Config, "deformation: decoder sizes must be positive");
    }
    if (!((bounds_max - bounds_min).array() > 0.0).all()) {
        fail(ErrorKind::Config, "deformation: scene bounds must have positive extent");
    }
}

template <typename Scalar>
DeformParams<Scalar> make_deform_params(const DeformationConfig& c) {
    c.validate();
    DeformParams<Scalar> p;
    int spatial = c.base_resolution, temporal = c.base_time_resolution;
    for (int l = 0; l < c.levels; ++l) {
        for (const auto& axes : kPlaneAxes) {
            const int ra = axes[0] == 3 ? temporal : spatial;
            const int rb = axes[1] == 3 ? temporal : spatial;
            p.grids.push_back(MatX<Scalar>::Zero(c.feature_dim, static_cast<Eigen::Index>(ra) * rb));
        }
        spatial *= c.multiplier;
        temporal *= c.multiplier;
    }
    int in = c.encoded_dim();
    for (int i = 0; i < c.trunk_depth; ++i) {
        p.trunk.push_back(zero_linear<Scalar>(c.trunk_width, in));
        in = c.trunk_width;
    }
    const int out_dims[3] = {3, 4, 3};
    for (int h = 0; h < 3; ++h) {
        int head_in = c.trunk_width;
        for (int i = 0; i < c.head_depth; ++i) {
            p.heads[h].push_back(zero_linear<Scalar>(c.head_width, head_in));
            head_in = c.head_width;
        }
        p.heads[h].push_back(zero_linear<Scalar>(out_dims[h], head_in));
    }
    p.adapter = zero_linear<Scalar>(c.trunk_width, c.feature_dim);
    const int fine_dim = (c.levels - 1) * c.feature_dim;
    p.fusion.push_back(zero_linear<Scalar>(c.enhance_hidden, c.trunk_width + fine_dim));
    p.fusion.push_back(zero_linear<Scalar>(c.encoded_dim(), c.enhance_hidden));
    return p;
}

template <typename Scalar>
DeformParams<Scalar> DeformParams<Scalar>::zeros_like() const {
    DeformParams out = *this;
    out.set_zero();
    return out;
}

template <typename Scalar>
void DeformParams<Scalar>::set_zero() {
    for (auto& b : blocks()) std::fill(b.values.begin(), b.values.end(), Scalar(0));
}

template <typename Scalar>
std::vector<ParamBlock<Scalar>> DeformParams<Scalar>::blocks() {
    std::vector<ParamBlock<Scalar>> out;
    const int levels = static_cast<int>(grids.size() / 6);
    for (int l = 0; l < levels; ++l) {
        for (int pl = 0; pl < 6; ++pl) {
            auto& g = grids[static_cast<std::size_t>(l) * 6 + pl];
            std::string name = "grid.l" + std::to_string(l) + "." + kAxisNames[kPlaneAxes[pl][0]] +
                               kAxisNames[kPlaneAxes[pl][1]];
            out.push_back({std::move(name), ParamGroup::Grids, {g.data(), static_cast<std::size_t>(g.size())}});
        }
    }
    for_each_layer(*this, [&](const std::string& name, Linear<Scalar>& layer) {
        out.push_back({name + ".weight", ParamGroup::Decoder,
                       {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())}});
        out.push_back({name + ".bias", ParamGroup::Decoder,
                       {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())}});
    });
    return out;
}

template <typename Scalar>
std::vector<ParamBlock<const Scalar>> DeformParams<Scalar>::blocks() const {
    std::vector<ParamBlock<const Scalar>> out;
    for (auto& b : const_cast<DeformParams*>(this)->blocks())
        out.push_back({std::move(b.name), b.group, {b.values.data(), b.values.size()}});
    return out;
}

template <typename Scalar>
std::size_t DeformParams<Scalar>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks()) n += b.values.size();
    return n;
}

template <typename Scalar>
DeformParams<Scalar>& DeformParams<Scalar>::operator+=(const DeformParams& other) {
    auto mine = blocks();
    const auto theirs = other.blocks();
    if (mine.size() != theirs.size()) fail(ErrorKind::State, "DeformParams shape mismatch");
    for (std::size_t b = 0; b < mine.size(); ++b) {
        if (mine[b].values.size() != theirs[b].values.size()) fail(ErrorKind::State, "DeformParams shape mismatch");
        for (std::size_t i = 0; i < mine[b].values.size(); ++i) mine[b].values[i] += theirs[b].values[i];
    }
    return *this;
}

template <typename Scalar>
template <typename Other>
DeformParams<Other> DeformParams<Scalar>::cast() const {
    DeformParams<Other> out;
    for (const auto& g : grids) out.grids.push_back(g.template cast<Other>());
    auto cast_layer = [](const Linear<Scalar>& l) {
        return Linear<Other>{l.weight.template cast<Other>(), l.bias.template cast<Other>()};
    };
    for (const auto& l : trunk) out.trunk.push_back(cast_layer(l));
    for (int h = 0; h < 3; ++h)
        for (const auto& l : heads[h]) out.heads[h].push_back(cast_layer(l));
    out.adapter = cast_layer(adapter);
    for (const auto& l : fusion) out.fusion.push_back(cast_layer(l));
    return out;
}

template <typename Scalar>
DeformationField<Scalar>::DeformationField(const DeformationConfig& config, std::uint64_t seed)
    : config_(config), params_(make_deform_params<Scalar>(config)) {
    Rng rng(seed);
    const double jitter = config.grid_init_jitter;
    for (auto& g : params_.grids)
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<Scalar>(1.0 + rng.uniform(-jitter, jitter));
    for (auto& l : params_.trunk) init_linear(l, rng);
    for (int h = 0; h < 3; ++h) {
        for (auto& l : params_.heads[h]) init_linear(l, rng);
        // Zero output layer: identity deformation until training moves it.
        params_.heads[h].back().weight.setZero();
        params_.heads[h].back().bias.setZero();
    }
    init_linear(params_.adapter, rng);
    init_linear(params_.fusion[0], rng);
    params_.fusion[1].weight.setZero();
    params_.fusion[1].bias.setZero();
}

template <typename Scalar>
int DeformationField<Scalar>::resolution(int level, int axis) const {
    int r = axis == 3 ? config_.base_time_resolution : config_.base_resolution;
    for (int l = 0; l < level; ++l) r *= config_.multiplier;
    return r;
}

template <typename Scalar>
template <typename Other>
DeformationField<Other> DeformationField<Scalar>::cast() const {
    DeformationField<Other> out;
    out.mutable_config() = config_;
    out.set_params(params_.template cast<Other>());
    return out;
}

template <typename Scalar>
DeformOutput<Scalar> DeformationField<Scalar>::forward(std::span<const Vec3<Scalar>> positions,
                                                       std::span<const Scalar> times,
                                                       DeformTape<Scalar>* tape) const {
    const int n = static_cast<int>(positions.size());
    if (times.size() != 1 && times.size() != positions.size()) {
        fail(ErrorKind::InvalidParameter, "deformation: times must have length 1 or N");
    }
    const auto& c = config_;
    const int levels = c.levels, f = c.feature_dim;
    DeformTape<Scalar> local;
    DeformTape<Scalar>& tp = tape ? *tape : local;
    tp = DeformTape<Scalar>{};
    tp.count = n;
    tp.queries.resize(4, n);
    const std::size_t lookups = static_cast<std::size_t>(levels) * 6 * n;
    tp.base.resize(lookups);
    tp.frac.resize(lookups);
    tp.clamped.resize(lookups);
    tp.plane_samples.assign(static_cast<std::size_t>(levels) * 6, MatX<Scalar>(f, n));
    tp.encoded.resize(levels * f, n);

    const Vec3<Scalar> lo = c.bounds_min.template cast<Scalar>();
    const Vec3<Scalar> extent = (c.bounds_max - c.bounds_min).template cast<Scalar>();
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const Eigen::Index col = static_cast<Eigen::Index>(i);
        for (int a = 0; a < 3; ++a) tp.queries(a, col) = (positions[i][a] - lo[a]) / extent[a];
        tp.queries(3, col) = times.size() == 1 ? times[0] : times[i];
        for (int l = 0; l < levels; ++l) {
            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fused = VecX<Scalar>::Ones(f);
            for (int pl = 0; pl < 6; ++pl) {
                const std::size_t slot = (static_cast<std::size_t>(l) * 6 + pl) * n + i;
                int res[2];
                for (int k = 0; k < 2; ++k) {
                    const int axis = kPlaneAxes[pl][k];
                    res[k] = resolution(l, axis);
                    const Scalar q = tp.queries(axis, col);
                    const Scalar qc = std::clamp(q, Scalar(0), Scalar(1));
                    tp.clamped[slot][k] = q != qc;
                    const Scalar u = qc * static_cast<Scalar>(res[k] - 1);
                    const int i0 = std::min(static_cast<int>(std::floor(u)), res[k] - 2);
                    tp.base[slot][k] = i0;
                    tp.frac[slot][k] = u - static_cast<Scalar>(i0);
                }
                const auto& g = params_.grids[static_cast<std::size_t>(l) * 6 + pl];
                const int ia = tp.base[slot][0], ib = tp.base[slot][1];
                const Scalar wa = tp.frac[slot][0], wb = tp.frac[slot][1];
                const Eigen::Index v00 = static_cast<Eigen::Index>(ib) * res[0] + ia;
                const Eigen::Index v01 = v00 + res[0];
                auto sample = tp.plane_samples[static_cast<std::size_t>(l) * 6 + pl].col(col);
                sample = (Scalar(1) - wa) * (Scalar(1) - wb) * g.col(v00) + wa * (Scalar(1) - wb) * g.col(v00 + 1) +
                         (Scalar(1) - wa) * wb * g.col(v01) + wa * wb * g.col(v01 + 1);
                fused.array() *= sample.array();
            }
            tp.encoded.block(l * f, col, f, 1) = fused;
        }
    });

    const auto& p = params_;
    if (c.manifold_enhance) {
        tp.adapted = affine(p.adapter, MatX<Scalar>(tp.encoded.topRows(f)));
        tp.fusion_in.resize(c.trunk_width + (levels - 1) * f, n);
        tp.fusion_in.topRows(c.trunk_width) = tp.adapted;
        tp.fusion_in.bottomRows((levels - 1) * f) = tp.encoded.bottomRows((levels - 1) * f);
        tp.fusion_hidden_pre = affine(p.fusion[0], tp.fusion_in);
        tp.trunk_in = tp.encoded + affine(p.fusion[1], silu_of(tp.fusion_hidden_pre));
    } else {
        tp.trunk_in = tp.encoded;
    }

    MatX<Scalar> x = tp.trunk_in;
    for (const auto& layer : p.trunk) {
        tp.trunk_pre.push_back(affine(layer, x));
        tp.trunk_post.push_back(silu_of(tp.trunk_pre.back()));
        x = tp.trunk_post.back();
    }
    DeformOutput<Scalar> out;
    MatX<Scalar>* outputs[3] = {&out.position, &out.rotation, &out.log_scale};
    for (int h = 0; h < 3; ++h) {
        MatX<Scalar> hx = x;
        const auto& head = p.heads[h];
        for (std::size_t k = 0; k + 1 < head.size(); ++k) {
            tp.head_pre[h].push_back(affine(head[k], hx));
            tp.head_post[h].push_back(silu_of(tp.head_pre[h].back()));
            hx = tp.head_post[h].back();
        }
        *outputs[h] = affine(head.back(), hx);
    }
    tp.valid = tape != nullptr;
    return out;
}

template <typename Scalar>
DeformBackward<Scalar> DeformationField<Scalar>::backward(const DeformTape<Scalar>& tp,
                                                          const MatX<Scalar>& d_position,
                                                          const MatX<Scalar>& d_rotation,
                                                          const MatX<Scalar>& d_log_scale) const {
    if (!tp.valid) fail(ErrorKind::State, "deformation_backward: missing forward tape");
    const int n = tp.count;
    if (d_position.cols() != n || d_rotation.cols() != n || d_log_scale.cols() != n) {
        fail(ErrorKind::State, "deformation_backward: gradient batch does not match tape");
    }
    const auto& c = config_;
    const auto& p = params_;
    const int levels = c.levels, f = c.feature_dim;
    DeformBackward<Scalar> result;
    result.params = p.zeros_like();
    auto& g = result.params;

    const MatX<Scalar>& trunk_out = tp.trunk_post.back();
    MatX<Scalar> d_trunk_out = MatX<Scalar>::Zero(trunk_out.rows(), n);
    const MatX<Scalar>* upstream[3] = {&d_position, &d_rotation, &d_log_scale};
    for (int h = 0; h < 3; ++h) {
        const auto& head = p.heads[h];
        const std::size_t hidden = head.size() - 1;
        const MatX<Scalar>& last_in = hidden == 0 ? trunk_out : tp.head_post[h][hidden - 1];
        MatX<Scalar> dx = affine_backward(head.back(), last_in, *upstream[h], g.heads[h].back());
        for (std::size_t k = hidden; k-- > 0;) {
            const MatX<Scalar> dz = dx.cwiseProduct(silu_grad(tp.head_pre[h][k]));
            const MatX<Scalar>& in = k == 0 ? trunk_out : tp.head_post[h][k - 1];
            dx = affine_backward(head[k], in, dz, g.heads[h][k]);
        }
        d_trunk_out += dx;
    }

    MatX<Scalar> dx = d_trunk_out;
    for (std::size_t k = p.trunk.size(); k-- > 0;) {
        const MatX<Scalar> dz = dx.cwiseProduct(silu_grad(tp.trunk_pre[k]));
        const MatX<Scalar>& in = k == 0 ? tp.trunk_in : tp.trunk_post[k - 1];
        dx = affine_backward(p.trunk[k], in, dz, g.trunk[k]);
    }

    MatX<Scalar> d_encoded = dx;
    if (c.manifold_enhance) {
        const MatX<Scalar> hidden = silu_of(tp.fusion_hidden_pre);
        const MatX<Scalar> d_hidden = affine_backward(p.fusion[1], hidden, dx, g.fusion[1]);
        const MatX<Scalar> d_hidden_pre = d_hidden.cwiseProduct(silu_grad(tp.fusion_hidden_pre));
        const MatX<Scalar> d_fusion_in = affine_backward(p.fusion[0], tp.fusion_in, d_hidden_pre, g.fusion[0]);
        const MatX<Scalar> d_adapted = d_fusion_in.topRows(c.trunk_width);
        d_encoded.topRows(f) += affine_backward(p.adapter, MatX<Scalar>(tp.encoded.topRows(f)), d_adapted, g.adapter);
        d_encoded.bottomRows((levels - 1) * f) += d_fusion_in.bottomRows((levels - 1) * f);
    }

    // Per-sample gradients (parallel, column-disjoint), then a serial
    // scatter into the grids in query order.
    std::vector<MatX<Scalar>> d_samples(static_cast<std::size_t>(levels) * 6, MatX<Scalar>(f, n));
    result.d_positions = MatX<Scalar>::Zero(3, n);
    const Vec3<Scalar> extent = (c.bounds_max - c.bounds_min).template cast<Scalar>();
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
        const Eigen::Index col = static_cast<Eigen::Index>(i);
        for (int l = 0; l < levels; ++l) {
            const VecX<Scalar> d_fused = d_encoded.block(l * f, col, f, 1);
            for (int pl = 0; pl < 6; ++pl) {
                VecX<Scalar> others = VecX<Scalar>::Ones(f);
                for (int q = 0; q < 6; ++q)
                    if (q != pl) others.array() *= tp.plane_samples[static_cast<std::size_t>(l) * 6 + q].col(col).array();
                const VecX<Scalar> d_sample = d_fused.cwiseProduct(others);
                d_samples[static_cast<std::size_t>(l) * 6 + pl].col(col) = d_sample;

                const std::size_t slot = (static_cast<std::size_t>(l) * 6 + pl) * n + i;
                const int ra = resolution(l, kPlaneAxes[pl][0]);
                const auto& grid = p.grids[static_cast<std::size_t>(l) * 6 + pl];
                const Eigen::Index v00 = static_cast<Eigen::Index>(tp.base[slot][1]) * ra + tp.base[slot][0];
                const Eigen::Index v01 = v00 + ra;
                const Scalar wa = tp.frac[slot][0], wb = tp.frac[slot][1];
                const VecX<Scalar> d_wa = (Scalar(1) - wb) * (grid.col(v00 + 1) - grid.col(v00)) +
                                          wb * (grid.col(v01 + 1) - grid.col(v01));
                const VecX<Scalar> d_wb = (Scalar(1) - wa) * (grid.col(v01) - grid.col(v00)) +
                                          wa * (grid.col(v01 + 1) - grid.col(v00 + 1));
                const Scalar dw[2] = {d_sample.dot(d_wa), d_sample.dot(d_wb)};
                for (int k = 0; k < 2; ++k) {
                    const int axis = kPlaneAxes[pl][k];
                    if (axis == 3 || tp.clamped[slot][k]) continue;
                    const Scalar scale = static_cast<Scalar>(resolution(l, axis) - 1) / extent[axis];
                    result.d_positions(axis, col) += dw[k] * scale;
                }
            }
        }
    });
    for (int l = 0; l < levels; ++l) {
        for (int pl = 0; pl < 6; ++pl) {
            const std::size_t gi = static_cast<std::size_t>(l) * 6 + pl;
            const int ra = resolution(l, kPlaneAxes[pl][0]);
            auto& dg = g.grids[gi];
            const auto& ds = d_samples[gi];
            for (int i = 0; i < n; ++i) {
                const std::size_t slot = gi * n + i;
                const Eigen::Index v00 = static_cast<Eigen::Index>(tp.base[slot][1]) * ra + tp.base[slot][0];
                const Eigen::Index v01 = v00 + ra;
                const Scalar wa = tp.frac[slot][0], wb = tp.frac[slot][1];
                dg.col(v00) += (Scalar(1) - wa) * (Scalar(1) - wb) * ds.col(i);
                dg.col(v00 + 1) += wa * (Scalar(1) - wb) * ds.col(i);
                dg.col(v01) += (Scalar(1) - wa) * wb * ds.col(i);
                dg.col(v01 + 1) += wa * wb * ds.col(i);
            }
        }
    }
    return result;
}

template <typename Scalar>
VecX<Scalar> DeformationField<Scalar>::encode_features(const Vec3<Scalar>& position, Scalar t) const {
    DeformTape<Scalar> tape;
    const Vec3<Scalar> pos[1] = {position};
    const Scalar times[1] = {t};
    forward(pos, times, &tape);
    return tape.encoded.col(0);
}

template <typename Scalar>
VecX<Scalar> DeformationField<Scalar>::manifold_enhance(const VecX<Scalar>& encoded) const {
    const auto& c = config_;
    if (encoded.size() != c.encoded_dim()) fail(ErrorKind::Config, "manifold_enhance: feature dimension mismatch");
    if (!c.manifold_enhance) return encoded;
    const int f = c.feature_dim;
    const VecX<Scalar> adapted = params_.adapter.weight * encoded.head(f) + params_.adapter.bias;
    VecX<Scalar> fusion_in(c.trunk_width + (c.levels - 1) * f);
    fusion_in << adapted, encoded.tail((c.levels - 1) * f);
    const VecX<Scalar> hidden =
        (params_.fusion[0].weight * fusion_in + params_.fusion[0].bias).unaryExpr([](Scalar v) { return silu(v); });
    return encoded + params_.fusion[1].weight * hidden + params_.fusion[1].bias;
}

template <typename Scalar>
Deltas<Scalar> DeformationField<Scalar>::decode_deformation(const VecX<Scalar>& trunk_input) const {
    if (trunk_input.size() != config_.encoded_dim()) fail(ErrorKind::Config, "decode_deformation: input dimension mismatch");
    auto act = [](Scalar v) { return silu(v); };
    VecX<Scalar> x = trunk_input;
    for (const auto& layer : params_.trunk) x = (layer.weight * x + layer.bias).unaryExpr(act);
    Deltas<Scalar> out;
    for (int h = 0; h < 3; ++h) {
        VecX<Scalar> hx = x;
        const auto& head = params_.heads[h];
        for (std::size_t k = 0; k + 1 < head.size(); ++k) hx = (head[k].weight * hx + head[k].bias).unaryExpr(act);
        const VecX<Scalar> y = head.back().weight * hx + head.back().bias;
        if (h == 0) out.position = y;
        if (h == 1) out.rotation = y;
        if (h == 2) out.log_scale = y;
    }
    return out;
}

template <typename Scalar>
DeformedAttributes<Scalar> apply_deformation(const Vec3<Scalar>& position, const QuatCoeffs<Scalar>& rotation,
                                             const Vec3<Scalar>& log_scale, const Deltas<Scalar>& deltas) {
    if (deltas.is_zero()) return {position, rotation, log_scale};
    return {position + deltas.position, (rotation + deltas.rotation).normalized(), log_scale + deltas.log_scale};
}

template <typename Scalar>
ApplyDeformationGrad<Scalar> apply_deformation_backward(const QuatCoeffs<Scalar>& rotation,
                                                        const Deltas<Scalar>& deltas,
                                                        const Vec3<Scalar>& d_position,
                                                        const QuatCoeffs<Scalar>& d_rotation,
                                                        const Vec3<Scalar>& d_log_scale) {
    ApplyDeformationGrad<Scalar> out;
    out.d_position = d_position;
    out.d_log_scale = d_log_scale;
    if (deltas.is_zero()) {
        // Identity path: the rotation passes through unnormalized. The delta
        // gradient is the limit of the normalized branch as the deltas vanish.
        out.d_rotation = d_rotation;
        out.d_deltas = {d_position, normalize_backward<Scalar, 4>(rotation, d_rotation), d_log_scale};
    } else {
        out.d_rotation = normalize_backward<Scalar, 4>(rotation + deltas.rotation, d_rotation);
        out.d_deltas = {d_position, out.d_rotation, d_log_scale};
    }
    return out;
}

#define DMSR_INSTANTIATE_DEFORM(S)                                                                 \
    template struct DeformParams<S>;                                                               \
    template DeformParams<float> DeformParams<S>::cast<float>() const;                             \
    template DeformParams<double> DeformParams<S>::cast<double>() const;                           \
    template class DeformationField<S>;                                                            \
    template DeformationField<float> DeformationField<S>::cast<float>() const;                     \
    template DeformationField<double> DeformationField<S>::cast<double>() const;                   \
    template DeformParams<S> make_deform_params(const DeformationConfig&);                         \
    template DeformedAttributes<S> apply_deformation(const Vec3<S>&, const QuatCoeffs<S>&,          \
                                                     const Vec3<S>&, const Deltas<S>&);            \
    template ApplyDeformationGrad<S> apply_deformation_backward(const QuatCoeffs<S>&, const Deltas<S>&, \
                                                                const Vec3<S>&, const QuatCoeffs<S>&, \
                                                                const Vec3<S>&);

DMSR_INSTANTIATE_DEFORM(float)
DMSR_INSTANTIATE_DEFORM(double)

}  // namespace dmsr
