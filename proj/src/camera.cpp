// SPDX-License-Identifier: Apache-2.0
#include "dmsr/camera.hpp"

#include "dmsr/error.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

namespace dmsr {

template <typename Scalar>
void Camera<Scalar>::validate() const {
    const Mat3<Scalar> r = rotation();
    const Scalar orth_err = (r.transpose() * r - Mat3<Scalar>::Identity()).cwiseAbs().maxCoeff();
    const Scalar tol = std::is_same_v<Scalar, double> ? Scalar(1e-9) : Scalar(1e-5);
    if (!world_to_camera.allFinite() || !(orth_err <= tol)) {
        fail(ErrorKind::InvalidParameter, "camera: rotation block is not orthonormal");
    }
    if (!(near_plane > 0) || !(near_plane < far_plane)) {
        fail(ErrorKind::InvalidParameter, "camera: require 0 < near < far");
    }
    if (width < 1 || height < 1) fail(ErrorKind::InvalidParameter, "camera: empty image size");
    if (!(fx > 0) || !(fy > 0)) fail(ErrorKind::InvalidParameter, "camera: focal must be positive");
}

template <typename Scalar>
Camera<Scalar> camera_from_opengl_c2w(const Mat4<Scalar>& camera_to_world, Scalar fov_x, int width,
                                      int height, Scalar timestamp, Scalar near_plane,
                                      Scalar far_plane) {
    Mat4<Scalar> flip = Mat4<Scalar>::Identity();
    flip(1, 1) = -1;
    flip(2, 2) = -1;
    const Mat4<Scalar> c2w_cv = camera_to_world * flip;

    // Rigid inverse, exact for orthonormal rotation blocks.
    Camera<Scalar> cam;
    const Mat3<Scalar> r = c2w_cv.template topLeftCorner<3, 3>();
    const Vec3<Scalar> t = c2w_cv.template topRightCorner<3, 1>();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.template topLeftCorner<3, 3>() = r.transpose();
    cam.world_to_camera.template topRightCorner<3, 1>() = -r.transpose() * t;
    cam.width = width;
    cam.height = height;
    cam.fx = Scalar(0.5) * static_cast<Scalar>(width) / std::tan(Scalar(0.5) * fov_x);
    cam.fy = cam.fx;
    cam.cx = Scalar(0.5) * static_cast<Scalar>(width);
    cam.cy = Scalar(0.5) * static_cast<Scalar>(height);
    cam.timestamp = timestamp;
    cam.near_plane = near_plane;
    cam.far_plane = far_plane;
    return cam;
}

template <typename Scalar>
Mat4<Scalar> opengl_c2w_from_camera(const Camera<Scalar>& cam) {
    const Mat3<Scalar> r = cam.rotation();
    Mat4<Scalar> c2w_cv = Mat4<Scalar>::Identity();
    c2w_cv.template topLeftCorner<3, 3>() = r.transpose();
    c2w_cv.template topRightCorner<3, 1>() = -r.transpose() * cam.translation();
    Mat4<Scalar> flip = Mat4<Scalar>::Identity();
    flip(1, 1) = -1;
    flip(2, 2) = -1;
    return c2w_cv * flip;
}

template <typename Scalar>
Camera<Scalar> look_at_camera(const Vec3<Scalar>& eye, const Vec3<Scalar>& target,
                              const Vec3<Scalar>& up, Scalar fov_x, int width, int height,
                              Scalar timestamp) {
    // OpenGL camera-to-world: columns are right, up, backward.
    const Vec3<Scalar> backward = (eye - target).normalized();
    const Vec3<Scalar> right = up.cross(backward).normalized();
    const Vec3<Scalar> true_up = backward.cross(right);
    Mat4<Scalar> c2w = Mat4<Scalar>::Identity();
    c2w.template block<3, 1>(0, 0) = right;
    c2w.template block<3, 1>(0, 1) = true_up;
    c2w.template block<3, 1>(0, 2) = backward;
    c2w.template block<3, 1>(0, 3) = eye;
    return camera_from_opengl_c2w<Scalar>(c2w, fov_x, width, height, timestamp);
}

namespace {

template <typename Scalar>
Mat23<Scalar> projection_jacobian(const Vec3<Scalar>& t, Scalar fx, Scalar fy) {
    const Scalar inv_z = Scalar(1) / t.z();
    const Scalar inv_z2 = inv_z * inv_z;
    Mat23<Scalar> j;
    j << fx * inv_z, 0, -fx * t.x() * inv_z2,
         0, fy * inv_z, -fy * t.y() * inv_z2;
    return j;
}

}  // namespace

template <typename Scalar>
std::optional<Splat2D<Scalar>> project_gaussian(const Vec3<Scalar>& mean, const Mat3<Scalar>& cov,
                                                const Camera<Scalar>& cam,
                                                const ProjectionConfig& config,
                                                std::uint32_t source_index) {
    const Mat3<Scalar> w = cam.rotation();
    const Vec3<Scalar> t = w * mean + cam.translation();
    const Scalar min_depth = std::max(cam.near_plane, static_cast<Scalar>(config.min_depth));
    if (!(t.z() >= min_depth) || t.z() > cam.far_plane) return std::nullopt;

    const Mat23<Scalar> j = projection_jacobian(t, cam.fx, cam.fy);
    const Mat23<Scalar> jw = j * w;
    Mat2<Scalar> cov2d = jw * cov * jw.transpose();
    cov2d(0, 1) = cov2d(1, 0) = Scalar(0.5) * (cov2d(0, 1) + cov2d(1, 0));
    cov2d.diagonal().array() += static_cast<Scalar>(config.aa_floor);

    Splat2D<Scalar> splat;
    splat.center_px = {cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy};
    splat.cov2d = cov2d;
    splat.depth = t.z();
    splat.source_index = source_index;
    if (!splat.center_px.allFinite() || !cov2d.allFinite()) return std::nullopt;

    if (std::isfinite(config.cull_sigmas)) {
        const Scalar k = static_cast<Scalar>(config.cull_sigmas);
        const Scalar rx = k * std::sqrt(std::max(cov2d(0, 0), Scalar(0)));
        const Scalar ry = k * std::sqrt(std::max(cov2d(1, 1), Scalar(0)));
        const Scalar u = splat.center_px.x(), v = splat.center_px.y();
        if (u + rx < 0 || u - rx > static_cast<Scalar>(cam.width) || v + ry < 0 ||
            v - ry > static_cast<Scalar>(cam.height)) {
            return std::nullopt;
        }
    }
    return splat;
}

template <typename Scalar>
ProjectionGrad<Scalar> project_gaussian_backward(const Vec3<Scalar>& mean, const Mat3<Scalar>& cov,
                                                 const Camera<Scalar>& cam,
                                                 const Vec2<Scalar>& d_center_px,
                                                 const Mat2<Scalar>& d_cov2d, Scalar d_depth) {
    const Mat3<Scalar> w = cam.rotation();
    const Vec3<Scalar> t = w * mean + cam.translation();
    const Mat23<Scalar> j = projection_jacobian(t, cam.fx, cam.fy);
    const Mat3<Scalar> v = w * cov * w.transpose();
    const Mat2<Scalar> g = Scalar(0.5) * (d_cov2d + d_cov2d.transpose());

    ProjectionGrad<Scalar> out;
    const Mat3<Scalar> d_v = j.transpose() * g * j;
    out.d_cov = w.transpose() * d_v * w;

    // The center's Jacobian w.r.t. the camera-space point is J itself.
    Vec3<Scalar> d_t = j.transpose() * d_center_px;
    d_t.z() += d_depth;

    // Sigma' = J V J^T  =>  dL/dJ = 2 G J V
    const Mat23<Scalar> d_j = Scalar(2) * g * j * v;
    const Scalar inv_z = Scalar(1) / t.z();
    const Scalar inv_z2 = inv_z * inv_z;
    const Scalar inv_z3 = inv_z2 * inv_z;
    d_t.x() += d_j(0, 2) * (-cam.fx * inv_z2);
    d_t.y() += d_j(1, 2) * (-cam.fy * inv_z2);
    d_t.z() += d_j(0, 0) * (-cam.fx * inv_z2) + d_j(1, 1) * (-cam.fy * inv_z2) +
               d_j(0, 2) * (Scalar(2) * cam.fx * t.x() * inv_z3) +
               d_j(1, 2) * (Scalar(2) * cam.fy * t.y() * inv_z3);

    out.d_mean = w.transpose() * d_t;
    return out;
}

#define DMSR_INSTANTIATE_CAMERA(S)                                                               \
    template struct Camera<S>;                                                                   \
    template Camera<S> camera_from_opengl_c2w(const Mat4<S>&, S, int, int, S, S, S);             \
    template Mat4<S> opengl_c2w_from_camera(const Camera<S>&);                                   \
    template Camera<S> look_at_camera(const Vec3<S>&, const Vec3<S>&, const Vec3<S>&, S, int,    \
                                      int, S);                                                   \
    template std::optional<Splat2D<S>> project_gaussian(const Vec3<S>&, const Mat3<S>&,          \
                                                        const Camera<S>&,                        \
                                                        const ProjectionConfig&, std::uint32_t); \
    template ProjectionGrad<S> project_gaussian_backward(const Vec3<S>&, const Mat3<S>&,         \
                                                        const Camera<S>&, const Vec2<S>&,        \
                                                        const Mat2<S>&, S);

DMSR_INSTANTIATE_CAMERA(float)
DMSR_INSTANTIATE_CAMERA(double)

}  // namespace dmsr
