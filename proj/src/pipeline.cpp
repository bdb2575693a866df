// SPDX-License-Identifier: Apache-2.0
#include "dmsr/pipeline.hpp"

#include "dmsr/parallel.hpp"

namespace dmsr {

template <typename Scalar>
void CloudGrads<Scalar>::resize(std::size_t n) {
    positions.assign(n, Vec3<Scalar>::Zero());
    rotations.assign(n, QuatCoeffs<Scalar>::Zero());
    log_scales.assign(n, Vec3<Scalar>::Zero());
    opacity_logits.assign(n, Scalar(0));
    sh_coeffs.assign(n, ShBlock<Scalar>::Zero());
    screen_grad.assign(n, Scalar(0));
}

template <typename Scalar>
ViewForward<Scalar> render_view(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>* field,
                                const SaliencyState<Scalar>* state, const Camera<Scalar>& camera, Scalar t,
                                const RenderOptions<Scalar>& options) {
    cloud.check_consistent();
    camera.validate();
    const std::size_t n = cloud.size();
    ViewForward<Scalar> fwd;
    fwd.camera = camera;
    fwd.deformed = field != nullptr;
    if (field) fwd.deform = gated_deform(cloud, *field, t, state);

    fwd.attributes.resize(n);
    fwd.covariances.resize(n);
    fwd.view_offsets.resize(n);
    std::vector<std::optional<Splat2D<Scalar>>> projected(n);
    const Vec3<Scalar> eye = camera.center();
    parallel_for(n, [&](std::size_t i) {
        const Deltas<Scalar> zero{};
        const Deltas<Scalar>& d = field ? fwd.deform.deltas[i] : zero;
        auto& a = fwd.attributes[i];
        a = apply_deformation(cloud.positions[i], cloud.rotations[i], cloud.log_scales[i], d);
        fwd.covariances[i] = build_covariance(a.rotation, a.log_scale);
        fwd.view_offsets[i] = a.position - eye;
        projected[i] = project_gaussian(a.position, fwd.covariances[i], camera, options.projection,
                                        static_cast<std::uint32_t>(i));
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (!projected[i]) continue;
        fwd.splats.push_back(*projected[i]);
        fwd.colors.push_back(eval_sh_color(cloud.sh_coeffs[i], fwd.view_offsets[i].normalized().eval(), cloud.sh_degree));
        fwd.opacities.push_back(sigmoid(cloud.opacity_logits[i]));
    }
    fwd.frame = rasterize<Scalar>(fwd.splats, fwd.colors, fwd.opacities, camera.width, camera.height,
                                  options.background, options.raster);
    return fwd;
}

template <typename Scalar>
ViewBackward<Scalar> backward_view(const GaussianCloud<Scalar>& cloud, const DeformationField<Scalar>* field,
                                   const ViewForward<Scalar>& fwd, const Image<Scalar>& d_image) {
    const std::size_t n = cloud.size();
    if (fwd.attributes.size() != n) fail(ErrorKind::State, "backward_view: forward pass does not match the cloud");
    if (fwd.deformed != (field != nullptr)) fail(ErrorKind::State, "backward_view: deformation mode mismatch");
    const RasterGrads<Scalar> rg = rasterize_backward(fwd.frame, d_image);

    ViewBackward<Scalar> out;
    auto& g = out.cloud;
    g.resize(n);
    AlignedVector<Deltas<Scalar>> d_deltas(field ? n : 0);
    parallel_for(fwd.splats.size(), [&](std::size_t s) {
        const std::size_t i = fwd.splats[s].source_index;
        const auto& a = fwd.attributes[i];
        const ProjectionGrad<Scalar> pg = project_gaussian_backward(a.position, fwd.covariances[i], fwd.camera,
                                                                    rg.d_center_px[s], rg.d_cov2d[s], Scalar(0));
        Vec3<Scalar> d_pos = pg.d_mean;
        const Vec3<Scalar> dir = fwd.view_offsets[i].normalized();
        const ShGrad<Scalar> sg = eval_sh_color_backward(cloud.sh_coeffs[i], dir, cloud.sh_degree, rg.d_color[s]);
        g.sh_coeffs[i] = sg.d_coeffs;
        if (cloud.sh_degree > 0) d_pos += normalize_backward<Scalar, 3>(fwd.view_offsets[i], sg.d_view_dir);
        const Scalar o = fwd.opacities[s];
        g.opacity_logits[i] = rg.d_opacity[s] * o * (Scalar(1) - o);
        g.screen_grad[i] = rg.d_center_px[s].norm();

        const CovarianceGrad<Scalar> cg = build_covariance_backward(a.rotation, a.log_scale, pg.d_cov);
        const Deltas<Scalar> zero{};
        const Deltas<Scalar>& d = field ? fwd.deform.deltas[i] : zero;
        const ApplyDeformationGrad<Scalar> ag =
            apply_deformation_backward(cloud.rotations[i], d, d_pos, cg.d_rotation, cg.d_log_scale);
        g.positions[i] = ag.d_position;
        g.rotations[i] = ag.d_rotation;
        g.log_scales[i] = ag.d_log_scale;
        if (field) d_deltas[i] = ag.d_deltas;
    });

    if (field) {
        out.deform = gated_deform_backward(*field, fwd.deform, std::span<const Deltas<Scalar>>(d_deltas));
        const auto& active = fwd.deform.active;
        for (std::size_t k = 0; k < active.size(); ++k)
            g.positions[active[k]] += out.deform->d_positions.col(static_cast<Eigen::Index>(k));
    }
    return out;
}

#define DMSR_INSTANTIATE_PIPELINE(S)                                                                       \
    template struct CloudGrads<S>;                                                                         \
    template ViewForward<S> render_view(const GaussianCloud<S>&, const DeformationField<S>*,              \
                                        const SaliencyState<S>*, const Camera<S>&, S, const RenderOptions<S>&); \
    template ViewBackward<S> backward_view(const GaussianCloud<S>&, const DeformationField<S>*,            \
                                           const ViewForward<S>&, const Image<S>&);

DMSR_INSTANTIATE_PIPELINE(float)
DMSR_INSTANTIATE_PIPELINE(double)

}  // namespace dmsr
