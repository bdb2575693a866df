// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/error.hpp"
#include "dmsr/types.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace dmsr {

// Structure-of-arrays store of canonical Gaussians. Scales live in log space
// and opacities in logit space so that unconstrained updates keep them valid.
template <typename Scalar>
struct GaussianCloud {
    AlignedVector<Vec3<Scalar>> positions;
    AlignedVector<QuatCoeffs<Scalar>> rotations;
    AlignedVector<Vec3<Scalar>> log_scales;
    std::vector<Scalar> opacity_logits;
    AlignedVector<ShBlock<Scalar>> sh_coeffs;
    int sh_degree = 0;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }

    void resize(std::size_t n);
    void push_back(const Vec3<Scalar>& position, const QuatCoeffs<Scalar>& rotation,
                   const Vec3<Scalar>& log_scale, Scalar opacity_logit,
                   const ShBlock<Scalar>& sh);

    // Throws State if the parallel arrays disagree in length.
    void check_consistent() const;

    // Keeps the Gaussians whose flag is true, preserving order.
    void compact(std::span<const bool> keep);

    void normalize_rotations();

    template <typename Other>
    GaussianCloud<Other> cast() const;
};

inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

inline constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar logit(Scalar p) {
    return std::log(p / (Scalar(1) - p));
}

// Rotation matrix of the normalized quaternion (w, x, y, z).
template <typename Scalar>
Mat3<Scalar> quaternion_to_matrix(const QuatCoeffs<Scalar>& q);

// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
template <typename Scalar>
Mat3<Scalar> build_covariance(const QuatCoeffs<Scalar>& rotation, const Vec3<Scalar>& log_scale);

template <typename Scalar>
struct CovarianceGrad {
    QuatCoeffs<Scalar> d_rotation;
    Vec3<Scalar> d_log_scale;
};

// Adjoint of build_covariance for a symmetric upstream gradient d_cov
// (dL = sum_ij d_cov(i,j) dSigma(i,j)). The rotation gradient is taken with
// respect to the raw, unnormalized quaternion.
template <typename Scalar>
CovarianceGrad<Scalar> build_covariance_backward(const QuatCoeffs<Scalar>& rotation,
                                                 const Vec3<Scalar>& log_scale,
                                                 const Mat3<Scalar>& d_cov);

// Adds eps*I with eps = 1e-9 * trace / 3.
template <typename Scalar>
Mat3<Scalar> regularize_covariance(const Mat3<Scalar>& cov);

// exp(-1/2 d^T Sigma^-1 d), d = x - mean. Throws SingularMatrix when the
// smallest eigenvalue is not above 1e-12 * trace.
template <typename Scalar>
Scalar gaussian_density(const Vec3<Scalar>& x, const Vec3<Scalar>& mean, const Mat3<Scalar>& cov);

// Real SH color with the DC offset: 0.5 + sum_k Y_k(dir) c_k, clamped at 0.
template <typename Scalar>
Vec3<Scalar> eval_sh_color(const ShBlock<Scalar>& coeffs, const Vec3<Scalar>& view_dir, int degree);

template <typename Scalar>
struct ShGrad {
    ShBlock<Scalar> d_coeffs;
    Vec3<Scalar> d_view_dir;
};

template <typename Scalar>
ShGrad<Scalar> eval_sh_color_backward(const ShBlock<Scalar>& coeffs, const Vec3<Scalar>& view_dir,
                                      int degree, const Vec3<Scalar>& d_color);

// Gradient of normalize(v) pulled back to v.
template <typename Scalar, int N>
Eigen::Matrix<Scalar, N, 1> normalize_backward(const Eigen::Matrix<Scalar, N, 1>& v,
                                               const Eigen::Matrix<Scalar, N, 1>& d_unit) {
    const Scalar norm = v.norm();
    const Eigen::Matrix<Scalar, N, 1> unit = v / norm;
    return (d_unit - unit * unit.dot(d_unit)) / norm;
}

}  // namespace dmsr
