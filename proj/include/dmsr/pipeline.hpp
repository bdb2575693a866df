// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/camera.hpp"
#include "dmsr/deformation.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/rasterizer.hpp"
#include "dmsr/saliency.hpp"

#include <optional>
#include <vector>

namespace dmsr {

template <typename Scalar>
struct RenderOptions {
    ProjectionConfig projection;
    RasterConfig raster;
    Vec3<Scalar> background = Vec3<Scalar>::Ones();

    static RenderOptions oracle(const Vec3<Scalar>& background = Vec3<Scalar>::Ones()) {
        return {ProjectionConfig::oracle(), RasterConfig::oracle(), background};
    }
};

// Everything the forward pass of one view produces, kept for the backward.
template <typename Scalar>
struct ViewForward {
    bool deformed = false;
    GatedDeformResult<Scalar> deform;
    AlignedVector<DeformedAttributes<Scalar>> attributes;  // per Gaussian
    AlignedVector<Mat3<Scalar>> covariances;               // per Gaussian
    AlignedVector<Vec3<Scalar>> view_offsets;              // position - camera center
    std::vector<Splat2D<Scalar>> splats;                   // visible only; source_index = Gaussian
    AlignedVector<Vec3<Scalar>> colors;
    std::vector<Scalar> opacities;
    Camera<Scalar> camera;
    RenderFrame<Scalar> frame;
};

// Deforms (when field is non-null), projects and rasterizes the cloud for
// one camera at time t. Frozen Gaussians in `state` use cached deltas.
template <typename Scalar>
ViewForward<Scalar> render_view(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>* field,
                                const SaliencyState<Scalar>* state, const Camera<Scalar>& camera, Scalar t,
                                const RenderOptions<Scalar>& options);

template <typename Scalar>
struct CloudGrads {
    AlignedVector<Vec3<Scalar>> positions;
    AlignedVector<QuatCoeffs<Scalar>> rotations;
    AlignedVector<Vec3<Scalar>> log_scales;
    std::vector<Scalar> opacity_logits;
    AlignedVector<ShBlock<Scalar>> sh_coeffs;
    // |dL/d center_px| per Gaussian, 0 when not visible.
    std::vector<Scalar> screen_grad;

    void resize(std::size_t n);
};

template <typename Scalar>
struct ViewBackward {
    CloudGrads<Scalar> cloud;
    std::optional<DeformBackward<Scalar>> deform;
};

template <typename Scalar>
ViewBackward<Scalar> backward_view(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>* field,
                                   const ViewForward<Scalar>& forward, const Image<Scalar>& d_image);

}  // namespace dmsr
