// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmsr {

struct DeformationConfig {
    int levels = 2;
    int base_resolution = 32;       // vertices per spatial axis at level 0
    int base_time_resolution = 16;  // vertices along t at level 0
    int multiplier = 2;
    int feature_dim = 16;
    int trunk_width = 64;
    int trunk_depth = 2;
    int head_width = 64;
    int head_depth = 1;
    int enhance_hidden = 64;
    // When false, manifold_enhance is bypassed and f_d feeds the trunk as is.
    bool manifold_enhance = true;
    double grid_init_jitter = 1e-2;
    Vec3<double> bounds_min = Vec3<double>::Constant(-1.0);
    Vec3<double> bounds_max = Vec3<double>::Constant(1.0);

    int encoded_dim() const { return levels * feature_dim; }
    // Throws Config on inconsistent sizes.
    void validate() const;
};

// Plane p spans axes kPlaneAxes[p] of (x, y, z, t).
inline constexpr std::array<std::array<int, 2>, 6> kPlaneAxes{{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

template <typename Scalar>
struct Linear {
    MatX<Scalar> weight;  // out x in
    VecX<Scalar> bias;

    int in_dim() const { return static_cast<int>(weight.cols()); }
    int out_dim() const { return static_cast<int>(weight.rows()); }
};

enum class ParamGroup { Grids, Decoder };

template <typename Scalar>
struct ParamBlock {
    std::string name;
    ParamGroup group;
    std::span<Scalar> values;
};

// Everything learnable in the deformation field. Also used as the gradient
// container, with identical shapes.
template <typename Scalar>
struct DeformParams {
    // grids[level * 6 + plane]: feature_dim x (res_a * res_b), column
    // index = ib * res_a + ia.
    std::vector<MatX<Scalar>> grids;
    std::vector<Linear<Scalar>> trunk;
    std::array<std::vector<Linear<Scalar>>, 3> heads;  // position, rotation, scale
    Linear<Scalar> adapter;                            // coarse features -> trunk width
    std::vector<Linear<Scalar>> fusion;                // [adapted coarse | fine] -> residual

    DeformParams zeros_like() const;
    void set_zero();
    // Fixed traversal order shared by the optimizer and the checkpoint.
    std::vector<ParamBlock<Scalar>> blocks();
    std::vector<ParamBlock<const Scalar>> blocks() const;
    std::size_t parameter_count() const;
    DeformParams& operator+=(const DeformParams& other);

    template <typename Other>
    DeformParams<Other> cast() const;
};

template <typename Scalar>
struct Deltas {
    Vec3<Scalar> position = Vec3<Scalar>::Zero();
    Vec4<Scalar> rotation = Vec4<Scalar>::Zero();
    Vec3<Scalar> log_scale = Vec3<Scalar>::Zero();

    bool is_zero() const { return position.isZero(0) && rotation.isZero(0) && log_scale.isZero(0); }
};

// Batched forward record for a set of queries, consumed by backward().
template <typename Scalar>
struct DeformTape {
    int count = 0;
    MatX<Scalar> queries;  // 4 x N grid-space coordinates before clamping
    // Per level/plane/query: lower vertex index and fractional weights.
    std::vector<std::array<int, 2>> base;
    std::vector<std::array<Scalar, 2>> frac;
    std::vector<std::array<bool, 2>> clamped;
    std::vector<MatX<Scalar>> plane_samples;  // [level*6+plane]: F x N
    MatX<Scalar> encoded;                     // L*F x N
    // Manifold enhancement intermediates (empty when bypassed).
    MatX<Scalar> adapted, fusion_in, fusion_hidden_pre;
    MatX<Scalar> trunk_in;
    std::vector<MatX<Scalar>> trunk_pre, trunk_post;
    std::array<std::vector<MatX<Scalar>>, 3> head_pre, head_post;
    bool valid = false;
};

template <typename Scalar>
struct DeformOutput {
    MatX<Scalar> position;   // 3 x N
    MatX<Scalar> rotation;   // 4 x N
    MatX<Scalar> log_scale;  // 3 x N

    Deltas<Scalar> column(Eigen::Index i) const {
        return {position.col(i), rotation.col(i), log_scale.col(i)};
    }
};

template <typename Scalar>
struct DeformBackward {
    DeformParams<Scalar> params;
    MatX<Scalar> d_positions;  // 3 x N, through the grid lookup
};

template <typename Scalar>
class DeformationField {
public:
    DeformationField() = default;
    DeformationField(const DeformationConfig& config, std::uint64_t seed);

    const DeformationConfig& config() const { return config_; }
    DeformationConfig& mutable_config() { return config_; }
    DeformParams<Scalar>& params() { return params_; }
    const DeformParams<Scalar>& params() const { return params_; }

    int resolution(int level, int axis) const;

    // Hadamard-fused voxel-plane features, concatenated over levels.
    VecX<Scalar> encode_features(const Vec3<Scalar>& position, Scalar t) const;
    // Residual coarse/fine fusion; returns the trunk input.
    VecX<Scalar> manifold_enhance(const VecX<Scalar>& encoded) const;
    Deltas<Scalar> decode_deformation(const VecX<Scalar>& trunk_input) const;

    // Full encode -> enhance -> decode for a batch. times has length 1
    // (shared) or N. The tape is filled only when non-null.
    DeformOutput<Scalar> forward(std::span<const Vec3<Scalar>> positions, std::span<const Scalar> times,
                                 DeformTape<Scalar>* tape = nullptr) const;

    // Throws State when the tape is missing or stale.
    DeformBackward<Scalar> backward(const DeformTape<Scalar>& tape, const MatX<Scalar>& d_position,
                                    const MatX<Scalar>& d_rotation, const MatX<Scalar>& d_log_scale) const;

    template <typename Other>
    DeformationField<Other> cast() const;

    void set_params(DeformParams<Scalar> p) { params_ = std::move(p); }

private:
    DeformationConfig config_;
    DeformParams<Scalar> params_;
};

// Allocates zeroed parameters of the right shapes for config.
template <typename Scalar>
DeformParams<Scalar> make_deform_params(const DeformationConfig& config);

// (X + dX, normalize(r + dr), log_s + ds); opacity and SH are untouched.
template <typename Scalar>
struct DeformedAttributes {
    Vec3<Scalar> position;
    QuatCoeffs<Scalar> rotation;
    Vec3<Scalar> log_scale;
};

template <typename Scalar>
DeformedAttributes<Scalar> apply_deformation(const Vec3<Scalar>& position, const QuatCoeffs<Scalar>& rotation,
                                             const Vec3<Scalar>& log_scale, const Deltas<Scalar>& deltas);

template <typename Scalar>
struct ApplyDeformationGrad {
    Vec3<Scalar> d_position;
    QuatCoeffs<Scalar> d_rotation;
    Vec3<Scalar> d_log_scale;
    Deltas<Scalar> d_deltas;
};

template <typename Scalar>
ApplyDeformationGrad<Scalar> apply_deformation_backward(const QuatCoeffs<Scalar>& rotation,
                                                        const Deltas<Scalar>& deltas,
                                                        const Vec3<Scalar>& d_position,
                                                        const QuatCoeffs<Scalar>& d_rotation,
                                                        const Vec3<Scalar>& d_log_scale);

template <typename Scalar>
Scalar silu(Scalar z) {
    return z / (Scalar(1) + std::exp(-z));
}

}  // namespace dmsr
