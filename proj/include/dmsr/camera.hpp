// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/types.hpp"

#include <cstdint>
#include <limits>
#include <optional>

namespace dmsr {

// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (i, j) is
// sampled at continuous coordinate (i + 0.5, j + 0.5).
template <typename Scalar>
struct Camera {
    Mat4<Scalar> world_to_camera = Mat4<Scalar>::Identity();
    Scalar fx = 1, fy = 1;
    Scalar cx = 0, cy = 0;
    int width = 1, height = 1;
    Scalar near_plane = Scalar(0.01), far_plane = Scalar(100);
    Scalar timestamp = 0;

    Mat3<Scalar> rotation() const { return world_to_camera.template topLeftCorner<3, 3>(); }
    Vec3<Scalar> translation() const { return world_to_camera.template topRightCorner<3, 1>(); }
    Vec3<Scalar> center() const { return -rotation().transpose() * translation(); }

    // Throws InvalidParameter when any invariant of the camera model fails.
    void validate() const;

    template <typename Other>
    Camera<Other> cast() const {
        Camera<Other> c;
        c.world_to_camera = world_to_camera.template cast<Other>();
        c.fx = static_cast<Other>(fx);
        c.fy = static_cast<Other>(fy);
        c.cx = static_cast<Other>(cx);
        c.cy = static_cast<Other>(cy);
        c.width = width;
        c.height = height;
        c.near_plane = static_cast<Other>(near_plane);
        c.far_plane = static_cast<Other>(far_plane);
        c.timestamp = static_cast<Other>(timestamp);
        return c;
    }
};

// Builds a camera from a camera-to-world matrix in OpenGL axes (x right,
// y up, looking down -z) and a horizontal field of view, as stored in
// transforms_*.json files. Focal = 0.5 * width / tan(0.5 * fov_x).
template <typename Scalar>
Camera<Scalar> camera_from_opengl_c2w(const Mat4<Scalar>& camera_to_world, Scalar fov_x, int width,
                                      int height, Scalar timestamp = 0,
                                      Scalar near_plane = Scalar(0.01),
                                      Scalar far_plane = Scalar(100));

// Inverse of camera_from_opengl_c2w's pose conversion.
template <typename Scalar>
Mat4<Scalar> opengl_c2w_from_camera(const Camera<Scalar>& cam);

// Right-handed look-at camera placed at eye looking at target.
template <typename Scalar>
Camera<Scalar> look_at_camera(const Vec3<Scalar>& eye, const Vec3<Scalar>& target,
                              const Vec3<Scalar>& up, Scalar fov_x, int width, int height,
                              Scalar timestamp = 0);

template <typename Scalar>
struct Splat2D {
    Vec2<Scalar> center_px;
    Mat2<Scalar> cov2d;
    Scalar depth = 0;
    std::uint32_t source_index = 0;
};

struct ProjectionConfig {
    // Added to each diagonal entry of the screen covariance, in px^2.
    double aa_floor = 0.3;
    // Splats whose n-sigma box misses the image are culled. Infinity disables
    // extent culling (oracle mode).
    double cull_sigmas = 3.0;
    // Depths below max(near, min_depth) are rejected before any division.
    double min_depth = 0.01;

    static ProjectionConfig oracle() {
        ProjectionConfig c;
        c.cull_sigmas = std::numeric_limits<double>::infinity();
        return c;
    }
};

// Projects one world-space Gaussian with the EWA affine approximation
// Sigma' = J W Sigma W^T J^T. Returns nullopt when culled.
template <typename Scalar>
std::optional<Splat2D<Scalar>> project_gaussian(const Vec3<Scalar>& mean, const Mat3<Scalar>& cov,
                                                const Camera<Scalar>& cam,
                                                const ProjectionConfig& config = {},
                                                std::uint32_t source_index = 0);

template <typename Scalar>
struct ProjectionGrad {
    Vec3<Scalar> d_mean;
    Mat3<Scalar> d_cov;  // symmetric
};

// Adjoint of project_gaussian for a non-culled splat. d_cov2d uses the
// symmetric convention dL = sum_ij d_cov2d(i,j) dSigma'(i,j).
template <typename Scalar>
ProjectionGrad<Scalar> project_gaussian_backward(const Vec3<Scalar>& mean, const Mat3<Scalar>& cov,
                                                 const Camera<Scalar>& cam,
                                                 const Vec2<Scalar>& d_center_px,
                                                 const Mat2<Scalar>& d_cov2d, Scalar d_depth);

}  // namespace dmsr
