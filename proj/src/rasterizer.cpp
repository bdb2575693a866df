// SPDX-License-Identifier: Apache-2.0
#include "dmsr/rasterizer.hpp"

#include "dmsr/error.hpp"
#include "dmsr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dmsr {

namespace {

template <typename Scalar>
void validate_inputs(std::span<const Splat2D<Scalar>> splats, std::span<const Vec3<Scalar>> colors,
                     std::span<const Scalar> opacities, int width, int height) {
    if (colors.size() != splats.size() || opacities.size() != splats.size()) {
        fail(ErrorKind::InvalidParameter, "rasterize: splat/color/opacity counts differ");
    }
    if (width < 1 || height < 1) fail(ErrorKind::InvalidParameter, "rasterize: empty target");
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const auto& s = splats[i];
        const bool finite = s.center_px.allFinite() && s.cov2d.allFinite() && std::isfinite(s.depth) &&
                            colors[i].allFinite() && std::isfinite(opacities[i]);
        if (!finite) {
            fail(ErrorKind::Render, "rasterize: non-finite parameters for splat " + std::to_string(i) +
                                        " (source " + std::to_string(s.source_index) + ")");
        }
        if (!(s.cov2d.determinant() > Scalar(0)) || !(s.cov2d(0, 0) > Scalar(0))) {
            fail(ErrorKind::Render, "rasterize: screen covariance not positive definite for splat " +
                                        std::to_string(i));
        }
    }
}

template <typename Scalar>
bool depth_order(const Splat2D<Scalar>& a, std::uint32_t ia, const Splat2D<Scalar>& b, std::uint32_t ib) {
    if (a.depth != b.depth) return a.depth < b.depth;
    if (a.source_index != b.source_index) return a.source_index < b.source_index;
    return ia < ib;
}

template <typename Scalar>
Mat2<Scalar> conic_of(const Mat2<Scalar>& cov) {
    const Scalar det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    Mat2<Scalar> inv;
    inv << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;
    return inv;
}

template <typename Scalar>
Scalar gaussian_power(const Mat2<Scalar>& conic, Scalar dx, Scalar dy) {
    return Scalar(-0.5) * (conic(0, 0) * dx * dx + conic(1, 1) * dy * dy) - conic(0, 1) * dx * dy;
}

template <typename Scalar>
RenderFrame<Scalar> make_frame(int width, int height, const Vec3<Scalar>& background) {
    RenderFrame<Scalar> frame;
    frame.color = Image<Scalar>(width, height);
    frame.final_transmittance.assign(static_cast<std::size_t>(width) * height, Scalar(1));
    frame.contrib_counts.assign(static_cast<std::size_t>(width) * height, 0);
    frame.background = background;
    return frame;
}

}  // namespace

template <typename Scalar>
TileBinning bin_splats(std::span<const Splat2D<Scalar>> splats, int width, int height,
                       const RasterConfig& config) {
    if (config.tile_size < 1) fail(ErrorKind::InvalidParameter, "rasterize: tile_size must be >= 1");
    TileBinning bins;
    bins.tile_size = config.tile_size;
    bins.tiles_x = (width + config.tile_size - 1) / config.tile_size;
    bins.tiles_y = (height + config.tile_size - 1) / config.tile_size;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

    struct Range {
        int x0, x1, y0, y1;
    };
    std::vector<Range> ranges(splats.size(), Range{0, -1, 0, -1});
    const bool unbounded = !std::isfinite(config.extent_sigmas);
    const double ts = config.tile_size;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        if (unbounded) {
            ranges[i] = {0, bins.tiles_x - 1, 0, bins.tiles_y - 1};
            continue;
        }
        const double u = static_cast<double>(splats[i].center_px.x());
        const double v = static_cast<double>(splats[i].center_px.y());
        const double rx = config.extent_sigmas * std::sqrt(static_cast<double>(splats[i].cov2d(0, 0)));
        const double ry = config.extent_sigmas * std::sqrt(static_cast<double>(splats[i].cov2d(1, 1)));
        if (u + rx < 0 || u - rx > width || v + ry < 0 || v - ry > height) continue;
        ranges[i].x0 = std::clamp(static_cast<int>(std::floor((u - rx) / ts)), 0, bins.tiles_x - 1);
        ranges[i].x1 = std::clamp(static_cast<int>(std::floor((u + rx) / ts)), 0, bins.tiles_x - 1);
        ranges[i].y0 = std::clamp(static_cast<int>(std::floor((v - ry) / ts)), 0, bins.tiles_y - 1);
        ranges[i].y1 = std::clamp(static_cast<int>(std::floor((v + ry) / ts)), 0, bins.tiles_y - 1);
    }

    std::vector<std::uint32_t> counts(tile_count, 0);
    for (const auto& r : ranges)
        for (int ty = r.y0; ty <= r.y1; ++ty)
            for (int tx = r.x0; tx <= r.x1; ++tx) ++counts[static_cast<std::size_t>(ty) * bins.tiles_x + tx];
    bins.offsets.assign(tile_count + 1, 0);
    std::partial_sum(counts.begin(), counts.end(), bins.offsets.begin() + 1);
    bins.entries.resize(bins.offsets.back());
    std::vector<std::uint32_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const auto& r = ranges[i];
        for (int ty = r.y0; ty <= r.y1; ++ty)
            for (int tx = r.x0; tx <= r.x1; ++tx)
                bins.entries[cursor[static_cast<std::size_t>(ty) * bins.tiles_x + tx]++] =
                    static_cast<std::uint32_t>(i);
    }
    parallel_chunks(tile_count, 1, [&](std::size_t, std::size_t t, std::size_t) {
        std::sort(bins.entries.begin() + bins.offsets[t], bins.entries.begin() + bins.offsets[t + 1],
                  [&](std::uint32_t a, std::uint32_t b) { return depth_order(splats[a], a, splats[b], b); });
    });
    return bins;
}

template <typename Scalar>
RenderFrame<Scalar> rasterize(std::span<const Splat2D<Scalar>> splats,
                              std::span<const Vec3<Scalar>> colors,
                              std::span<const Scalar> opacities, int width, int height,
                              const Vec3<Scalar>& background, const RasterConfig& config) {
    validate_inputs(splats, colors, opacities, width, height);
    RenderFrame<Scalar> frame = make_frame(width, height, background);
    auto& tape = frame.tape;
    tape.config = config;
    tape.binning = bin_splats(splats, width, height, config);
    tape.centers.resize(splats.size());
    tape.conics.resize(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) {
        tape.centers[i] = splats[i].center_px;
        tape.conics[i] = conic_of(splats[i].cov2d);
    }
    tape.colors.assign(colors.begin(), colors.end());
    tape.opacities.assign(opacities.begin(), opacities.end());
    tape.last_entry.assign(static_cast<std::size_t>(width) * height, 0);

    const Scalar alpha_max = static_cast<Scalar>(config.alpha_max);
    const Scalar alpha_min = static_cast<Scalar>(config.alpha_min);
    const Scalar t_min = static_cast<Scalar>(config.transmittance_min);
    const auto& bins = tape.binning;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

    parallel_chunks(tile_count, 1, [&](std::size_t, std::size_t t, std::size_t) {
        const int tx = static_cast<int>(t % bins.tiles_x);
        const int ty = static_cast<int>(t / bins.tiles_x);
        const auto list = bins.tile(tx, ty);
        const int x_end = std::min(width, (tx + 1) * bins.tile_size);
        const int y_end = std::min(height, (ty + 1) * bins.tile_size);
        for (int y = ty * bins.tile_size; y < y_end; ++y) {
            for (int x = tx * bins.tile_size; x < x_end; ++x) {
                const Scalar px = static_cast<Scalar>(x) + Scalar(0.5);
                const Scalar py = static_cast<Scalar>(y) + Scalar(0.5);
                Scalar transmittance = 1;
                Vec3<Scalar> c = Vec3<Scalar>::Zero();
                std::uint32_t visited = 0, blended = 0;
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const std::uint32_t s = list[k];
                    visited = static_cast<std::uint32_t>(k + 1);
                    const Scalar power = gaussian_power(tape.conics[s], px - tape.centers[s].x(),
                                                        py - tape.centers[s].y());
                    const Scalar alpha = std::min(alpha_max, tape.opacities[s] * std::exp(power));
                    if (alpha < alpha_min) continue;
                    c += tape.colors[s] * (alpha * transmittance);
                    transmittance *= Scalar(1) - alpha;
                    ++blended;
                    if (transmittance < t_min) break;
                }
                const std::size_t p = static_cast<std::size_t>(y) * width + x;
                frame.color.pixels.row(static_cast<Eigen::Index>(p)) =
                    (c + background * transmittance).transpose().array();
                frame.final_transmittance[p] = transmittance;
                frame.contrib_counts[p] = blended;
                tape.last_entry[p] = visited;
            }
        }
    });
    tape.valid = true;
    return frame;
}

template <typename Scalar>
RenderFrame<Scalar> rasterize_reference(std::span<const Splat2D<Scalar>> splats,
                                        std::span<const Vec3<Scalar>> colors,
                                        std::span<const Scalar> opacities, int width, int height,
                                        const Vec3<Scalar>& background,
                                        const RasterConfig& config) {
    validate_inputs(splats, colors, opacities, width, height);
    RenderFrame<Scalar> frame = make_frame(width, height, background);
    std::vector<std::uint32_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return depth_order(splats[a], a, splats[b], b);
    });
    std::vector<Mat2<Scalar>, Eigen::aligned_allocator<Mat2<Scalar>>> conics(splats.size());
    for (std::size_t i = 0; i < splats.size(); ++i) conics[i] = splats[i].cov2d.inverse();

    const Scalar alpha_max = static_cast<Scalar>(config.alpha_max);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec2<Scalar> p(static_cast<Scalar>(x) + Scalar(0.5), static_cast<Scalar>(y) + Scalar(0.5));
            Scalar transmittance = 1;
            Vec3<Scalar> c = Vec3<Scalar>::Zero();
            std::uint32_t blended = 0;
            for (const std::uint32_t s : order) {
                const Vec2<Scalar> d = p - splats[s].center_px;
                const Scalar g = std::exp(Scalar(-0.5) * d.dot(conics[s] * d));
                const Scalar alpha = std::min(alpha_max, opacities[s] * g);
                c += colors[s] * (alpha * transmittance);
                transmittance *= Scalar(1) - alpha;
                ++blended;
            }
            const std::size_t idx = static_cast<std::size_t>(y) * width + x;
            frame.color.pixels.row(static_cast<Eigen::Index>(idx)) =
                (c + background * transmittance).transpose().array();
            frame.final_transmittance[idx] = transmittance;
            frame.contrib_counts[idx] = blended;
        }
    }
    return frame;
}

template <typename Scalar>
RasterGrads<Scalar> rasterize_backward(const RenderFrame<Scalar>& frame, const Image<Scalar>& d_color) {
    const auto& tape = frame.tape;
    if (!tape.valid) fail(ErrorKind::State, "rasterize_backward: frame has no forward tape");
    const int width = frame.width(), height = frame.height();
    if (d_color.width != width || d_color.height != height) {
        fail(ErrorKind::InvalidParameter, "rasterize_backward: gradient image size mismatch");
    }
    const std::size_t n = tape.centers.size();
    const auto& bins = tape.binning;
    const std::size_t tile_count = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;
    const Scalar alpha_max = static_cast<Scalar>(tape.config.alpha_max);
    const Scalar alpha_min = static_cast<Scalar>(tape.config.alpha_min);

    // One partial per tile-list entry, reduced afterwards in tile order.
    struct Partial {
        Vec2<Scalar> d_center = Vec2<Scalar>::Zero();
        Vec3<Scalar> d_conic = Vec3<Scalar>::Zero();  // (a, b, c) of [[a, b], [b, c]]
        Vec3<Scalar> d_color = Vec3<Scalar>::Zero();
        Scalar d_opacity = 0;
    };
    std::vector<Partial, Eigen::aligned_allocator<Partial>> partials(bins.entries.size());

    parallel_chunks(tile_count, 1, [&](std::size_t, std::size_t t, std::size_t) {
        const int tx = static_cast<int>(t % bins.tiles_x);
        const int ty = static_cast<int>(t / bins.tiles_x);
        const auto list = bins.tile(tx, ty);
        Partial* tile_partials = partials.data() + bins.offsets[t];
        const int x_end = std::min(width, (tx + 1) * bins.tile_size);
        const int y_end = std::min(height, (ty + 1) * bins.tile_size);
        for (int y = ty * bins.tile_size; y < y_end; ++y) {
            for (int x = tx * bins.tile_size; x < x_end; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * width + x;
                const Vec3<Scalar> d_pixel = d_color.pixels.row(static_cast<Eigen::Index>(p)).transpose().matrix();
                if (d_pixel.isZero(0)) continue;
                const Scalar px = static_cast<Scalar>(x) + Scalar(0.5);
                const Scalar py = static_cast<Scalar>(y) + Scalar(0.5);
                Scalar transmittance = frame.final_transmittance[p];
                Vec3<Scalar> behind = frame.background * transmittance;
                for (std::size_t k = tape.last_entry[p]; k-- > 0;) {
                    const std::uint32_t s = list[k];
                    const Scalar dx = px - tape.centers[s].x();
                    const Scalar dy = py - tape.centers[s].y();
                    const Mat2<Scalar>& conic = tape.conics[s];
                    const Scalar g = std::exp(gaussian_power(conic, dx, dy));
                    const Scalar raw_alpha = tape.opacities[s] * g;
                    const Scalar alpha = std::min(alpha_max, raw_alpha);
                    if (alpha < alpha_min) continue;
                    const Scalar one_minus = Scalar(1) - alpha;
                    transmittance /= one_minus;
                    const Vec3<Scalar>& c = tape.colors[s];

                    Partial& part = tile_partials[k];
                    part.d_color += d_pixel * (alpha * transmittance);
                    const Scalar d_alpha = d_pixel.dot(c * transmittance - behind / one_minus);
                    behind += c * (alpha * transmittance);
                    if (raw_alpha > alpha_max) continue;

                    part.d_opacity += d_alpha * g;
                    const Scalar d_power = d_alpha * tape.opacities[s] * g;
                    // power = -1/2 d^T A d with d = pixel - center.
                    part.d_center.x() += d_power * (conic(0, 0) * dx + conic(0, 1) * dy);
                    part.d_center.y() += d_power * (conic(0, 1) * dx + conic(1, 1) * dy);
                    part.d_conic[0] += d_power * Scalar(-0.5) * dx * dx;
                    part.d_conic[1] += d_power * Scalar(-0.5) * dx * dy;
                    part.d_conic[2] += d_power * Scalar(-0.5) * dy * dy;
                }
            }
        }
    });

    RasterGrads<Scalar> grads;
    grads.d_center_px.assign(n, Vec2<Scalar>::Zero());
    grads.d_cov2d.assign(n, Mat2<Scalar>::Zero());
    grads.d_color.assign(n, Vec3<Scalar>::Zero());
    grads.d_opacity.assign(n, Scalar(0));
    AlignedVector<Vec3<Scalar>> d_conic(n, Vec3<Scalar>::Zero());
    for (std::size_t e = 0; e < bins.entries.size(); ++e) {
        const std::uint32_t s = bins.entries[e];
        grads.d_center_px[s] += partials[e].d_center;
        d_conic[s] += partials[e].d_conic;
        grads.d_color[s] += partials[e].d_color;
        grads.d_opacity[s] += partials[e].d_opacity;
    }
    for (std::size_t s = 0; s < n; ++s) {
        Mat2<Scalar> g;
        g << d_conic[s][0], d_conic[s][1], d_conic[s][1], d_conic[s][2];
        const Mat2<Scalar>& a = tape.conics[s];
        // A = Sigma^-1  =>  dL/dSigma = -A G A
        grads.d_cov2d[s] = -a * g * a;
    }
    return grads;
}

#define DMSR_INSTANTIATE_RASTER(S)                                                               \
    template TileBinning bin_splats(std::span<const Splat2D<S>>, int, int, const RasterConfig&); \
    template RenderFrame<S> rasterize(std::span<const Splat2D<S>>, std::span<const Vec3<S>>,     \
                                      std::span<const S>, int, int, const Vec3<S>&,              \
                                      const RasterConfig&);                                      \
    template RenderFrame<S> rasterize_reference(std::span<const Splat2D<S>>,                     \
                                                std::span<const Vec3<S>>, std::span<const S>,    \
                                                int, int, const Vec3<S>&, const RasterConfig&);  \
    template RasterGrads<S> rasterize_backward(const RenderFrame<S>&, const Image<S>&);

DMSR_INSTANTIATE_RASTER(float)
DMSR_INSTANTIATE_RASTER(double)

}  // namespace dmsr
