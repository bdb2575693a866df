// SPDX-License-Identifier: Apache-2.0
#include "dmsr/gaussian.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace dmsr {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidParameter: return "invalid-parameter";
        case ErrorKind::SingularMatrix: return "singular-matrix";
        case ErrorKind::Render: return "render";
        case ErrorKind::State: return "state";
        case ErrorKind::Training: return "training";
        case ErrorKind::Config: return "config";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

template <typename Scalar>
void GaussianCloud<Scalar>::resize(std::size_t n) {
    positions.resize(n, Vec3<Scalar>::Zero());
    rotations.resize(n, QuatCoeffs<Scalar>(1, 0, 0, 0));
    log_scales.resize(n, Vec3<Scalar>::Zero());
    opacity_logits.resize(n, Scalar(0));
    sh_coeffs.resize(n, ShBlock<Scalar>::Zero());
}

template <typename Scalar>
void GaussianCloud<Scalar>::push_back(const Vec3<Scalar>& position,
                                      const QuatCoeffs<Scalar>& rotation,
                                      const Vec3<Scalar>& log_scale, Scalar opacity_logit,
                                      const ShBlock<Scalar>& sh) {
    positions.push_back(position);
    rotations.push_back(rotation);
    log_scales.push_back(log_scale);
    opacity_logits.push_back(opacity_logit);
    sh_coeffs.push_back(sh);
}

template <typename Scalar>
void GaussianCloud<Scalar>::check_consistent() const {
    const std::size_t n = positions.size();
    if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
        sh_coeffs.size() != n) {
        fail(ErrorKind::State, "GaussianCloud attribute arrays have mismatched lengths");
    }
    if (sh_degree < 0 || sh_degree > 1) {
        fail(ErrorKind::InvalidParameter, "unsupported SH degree " + std::to_string(sh_degree));
    }
}

namespace {

template <typename T, typename Alloc>
void compact_vector(std::vector<T, Alloc>& values, std::span<const bool> keep) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (keep[i]) values[out++] = values[i];
    }
    values.resize(out);
}

}  // namespace

template <typename Scalar>
void GaussianCloud<Scalar>::compact(std::span<const bool> keep) {
    if (keep.size() != size()) fail(ErrorKind::State, "compact mask length mismatch");
    compact_vector(positions, keep);
    compact_vector(rotations, keep);
    compact_vector(log_scales, keep);
    compact_vector(opacity_logits, keep);
    compact_vector(sh_coeffs, keep);
}

template <typename Scalar>
void GaussianCloud<Scalar>::normalize_rotations() {
    for (auto& q : rotations) {
        const Scalar n = q.norm();
        if (n > Scalar(0) && std::isfinite(n)) {
            q /= n;
        } else {
            q = QuatCoeffs<Scalar>(1, 0, 0, 0);
        }
    }
}

template <typename Scalar>
template <typename Other>
GaussianCloud<Other> GaussianCloud<Scalar>::cast() const {
    GaussianCloud<Other> out;
    out.sh_degree = sh_degree;
    const std::size_t n = size();
    out.positions.reserve(n);
    out.rotations.reserve(n);
    out.log_scales.reserve(n);
    out.opacity_logits.reserve(n);
    out.sh_coeffs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.positions.push_back(positions[i].template cast<Other>());
        out.rotations.push_back(rotations[i].template cast<Other>());
        out.log_scales.push_back(log_scales[i].template cast<Other>());
        out.opacity_logits.push_back(static_cast<Other>(opacity_logits[i]));
        out.sh_coeffs.push_back(sh_coeffs[i].template cast<Other>());
    }
    return out;
}

template <typename Scalar>
Mat3<Scalar> quaternion_to_matrix(const QuatCoeffs<Scalar>& q_raw) {
    const QuatCoeffs<Scalar> q = q_raw.normalized();
    const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3<Scalar> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

namespace {

template <typename Scalar>
void require_finite_inputs(const QuatCoeffs<Scalar>& rotation, const Vec3<Scalar>& log_scale) {
    if (!rotation.allFinite() || !log_scale.allFinite()) {
        fail(ErrorKind::InvalidParameter, "build_covariance: non-finite rotation or log-scale");
    }
    if (rotation.squaredNorm() == Scalar(0)) {
        fail(ErrorKind::InvalidParameter, "build_covariance: zero quaternion");
    }
}

// dL/dq for a quaternion that is already unit length, given dL/dR.
template <typename Scalar>
QuatCoeffs<Scalar> rotation_matrix_backward(const QuatCoeffs<Scalar>& q, const Mat3<Scalar>& g) {
    const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
    QuatCoeffs<Scalar> d;
    d[0] = 2 * (-g(0, 1) * z + g(0, 2) * y + g(1, 0) * z - g(1, 2) * x - g(2, 0) * y +
                g(2, 1) * x);
    d[1] = 2 * (g(0, 1) * y + g(0, 2) * z + g(1, 0) * y - 2 * g(1, 1) * x - g(1, 2) * w +
                g(2, 0) * z + g(2, 1) * w - 2 * g(2, 2) * x);
    d[2] = 2 * (-2 * g(0, 0) * y + g(0, 1) * x + g(0, 2) * w + g(1, 0) * x + g(1, 2) * z -
                g(2, 0) * w + g(2, 1) * z - 2 * g(2, 2) * y);
    d[3] = 2 * (-2 * g(0, 0) * z - g(0, 1) * w + g(0, 2) * x + g(1, 0) * w - 2 * g(1, 1) * z +
                g(1, 2) * y + g(2, 0) * x + g(2, 1) * y);
    return d;
}

}  // namespace

template <typename Scalar>
Mat3<Scalar> build_covariance(const QuatCoeffs<Scalar>& rotation, const Vec3<Scalar>& log_scale) {
    require_finite_inputs(rotation, log_scale);
    const Mat3<Scalar> m = quaternion_to_matrix(rotation) * log_scale.array().exp().matrix().asDiagonal();
    Mat3<Scalar> cov = m * m.transpose();
    // Exact symmetry regardless of rounding in the product.
    return Scalar(0.5) * (cov + cov.transpose());
}

template <typename Scalar>
CovarianceGrad<Scalar> build_covariance_backward(const QuatCoeffs<Scalar>& rotation,
                                                 const Vec3<Scalar>& log_scale,
                                                 const Mat3<Scalar>& d_cov) {
    const Scalar norm = rotation.norm();
    const QuatCoeffs<Scalar> unit = rotation / norm;
    const Mat3<Scalar> r = quaternion_to_matrix(unit);
    const Vec3<Scalar> scale = log_scale.array().exp().matrix();
    const Mat3<Scalar> m = r * scale.asDiagonal();

    // Sigma = M M^T  =>  dL/dM = (G + G^T) M
    const Mat3<Scalar> d_m = (d_cov + d_cov.transpose()) * m;
    const Mat3<Scalar> d_r = d_m * scale.asDiagonal();
    const Vec3<Scalar> d_scale = (r.transpose() * d_m).diagonal();

    CovarianceGrad<Scalar> out;
    out.d_log_scale = d_scale.cwiseProduct(scale);
    out.d_rotation = normalize_backward<Scalar, 4>(rotation, rotation_matrix_backward(unit, d_r));
    return out;
}

template <typename Scalar>
Mat3<Scalar> regularize_covariance(const Mat3<Scalar>& cov) {
    const Scalar eps = Scalar(1e-9) * cov.trace() / Scalar(3);
    return cov + eps * Mat3<Scalar>::Identity();
}

template <typename Scalar>
Scalar gaussian_density(const Vec3<Scalar>& x, const Vec3<Scalar>& mean, const Mat3<Scalar>& cov) {
    const Eigen::SelfAdjointEigenSolver<Mat3<Scalar>> eig(cov, Eigen::EigenvaluesOnly);
    const Scalar trace = cov.trace();
    if (!(trace > Scalar(0)) || !(eig.eigenvalues().minCoeff() > Scalar(1e-12) * trace)) {
        fail(ErrorKind::SingularMatrix, "gaussian_density: covariance is singular");
    }
    const Vec3<Scalar> d = x - mean;
    const Scalar mahalanobis = d.dot(cov.ldlt().solve(d));
    return std::exp(Scalar(-0.5) * mahalanobis);
}

namespace {

template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> sh_basis(const Vec3<Scalar>& dir) {
    const Scalar c0 = static_cast<Scalar>(kShC0);
    const Scalar c1 = static_cast<Scalar>(kShC1);
    return {c0, -c1 * dir.y(), c1 * dir.z(), -c1 * dir.x()};
}

template <typename Scalar>
void require_degree(int degree) {
    if (degree < 0 || degree > 1) {
        fail(ErrorKind::InvalidParameter, "eval_sh_color: unsupported degree " + std::to_string(degree));
    }
}

}  // namespace

template <typename Scalar>
Vec3<Scalar> eval_sh_color(const ShBlock<Scalar>& coeffs, const Vec3<Scalar>& view_dir, int degree) {
    require_degree<Scalar>(degree);
    const auto basis = sh_basis(view_dir);
    Vec3<Scalar> rgb = Vec3<Scalar>::Constant(Scalar(0.5));
    for (int k = 0; k < sh_coeff_count(degree); ++k) rgb += basis[k] * coeffs.row(k).transpose();
    return rgb.cwiseMax(Scalar(0));
}

template <typename Scalar>
ShGrad<Scalar> eval_sh_color_backward(const ShBlock<Scalar>& coeffs, const Vec3<Scalar>& view_dir,
                                      int degree, const Vec3<Scalar>& d_color) {
    require_degree<Scalar>(degree);
    const auto basis = sh_basis(view_dir);
    Vec3<Scalar> raw = Vec3<Scalar>::Constant(Scalar(0.5));
    for (int k = 0; k < sh_coeff_count(degree); ++k) raw += basis[k] * coeffs.row(k).transpose();
    Vec3<Scalar> d_raw = d_color;
    for (int c = 0; c < 3; ++c) {
        if (raw[c] < Scalar(0)) d_raw[c] = Scalar(0);
    }

    ShGrad<Scalar> out;
    out.d_coeffs.setZero();
    out.d_view_dir.setZero();
    for (int k = 0; k < sh_coeff_count(degree); ++k) out.d_coeffs.row(k) = basis[k] * d_raw.transpose();
    if (degree >= 1) {
        const Scalar c1 = static_cast<Scalar>(kShC1);
        out.d_view_dir.y() = -c1 * coeffs.row(1).dot(d_raw.transpose());
        out.d_view_dir.z() = c1 * coeffs.row(2).dot(d_raw.transpose());
        out.d_view_dir.x() = -c1 * coeffs.row(3).dot(d_raw.transpose());
    }
    return out;
}

#define DMSR_INSTANTIATE_GAUSSIAN(S)                                                             \
    template struct GaussianCloud<S>;                                                            \
    template GaussianCloud<float> GaussianCloud<S>::cast<float>() const;                         \
    template GaussianCloud<double> GaussianCloud<S>::cast<double>() const;                       \
    template Mat3<S> quaternion_to_matrix(const QuatCoeffs<S>&);                                 \
    template Mat3<S> build_covariance(const QuatCoeffs<S>&, const Vec3<S>&);                     \
    template CovarianceGrad<S> build_covariance_backward(const QuatCoeffs<S>&, const Vec3<S>&,   \
                                                        const Mat3<S>&);                         \
    template Mat3<S> regularize_covariance(const Mat3<S>&);                                      \
    template S gaussian_density(const Vec3<S>&, const Vec3<S>&, const Mat3<S>&);                 \
    template Vec3<S> eval_sh_color(const ShBlock<S>&, const Vec3<S>&, int);                      \
    template ShGrad<S> eval_sh_color_backward(const ShBlock<S>&, const Vec3<S>&, int,            \
                                              const Vec3<S>&);

DMSR_INSTANTIATE_GAUSSIAN(float)
DMSR_INSTANTIATE_GAUSSIAN(double)

}  // namespace dmsr
