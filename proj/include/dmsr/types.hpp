// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dmsr {

template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Mat4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar> using Mat23 = Eigen::Matrix<Scalar, 2, 3>;
template <typename Scalar> using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Quaternions are stored raw as (w, x, y, z) so the optimizer can move them
// off the unit sphere between renormalizations.
template <typename Scalar> using QuatCoeffs = Vec4<Scalar>;

// Degree-1 real SH: 4 basis functions x 3 color channels. Degree-0 clouds
// only read row 0.
template <typename Scalar> using ShBlock = Eigen::Matrix<Scalar, 4, 3>;

template <typename T> using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

using Vector3f = Vec3<float>;
using Vector3d = Vec3<double>;
using Matrix3f = Mat3<float>;
using Matrix3d = Mat3<double>;

}  // namespace dmsr
