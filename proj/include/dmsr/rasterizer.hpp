// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/camera.hpp"
#include "dmsr/image.hpp"
#include "dmsr/types.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace dmsr {

struct RasterConfig {
    int tile_size = 16;
    double alpha_max = 0.99;
    // Splats with alpha below this are skipped at a pixel.
    double alpha_min = 1.0 / 255.0;
    // A pixel stops compositing once its transmittance drops below this.
    double transmittance_min = 1e-4;
    // Half-width of a splat's screen box in standard deviations. Infinity
    // bins every splat into every tile.
    double extent_sigmas = 3.0;

    // Clamp, skip floor, early termination and box truncation all disabled.
    static RasterConfig oracle() {
        RasterConfig c;
        c.alpha_max = 1.0;
        c.alpha_min = 0.0;
        c.transmittance_min = 0.0;
        c.extent_sigmas = std::numeric_limits<double>::infinity();
        return c;
    }
};

// Per-tile splat lists sorted front to back. Entries index the input splat
// array.
struct TileBinning {
    int tile_size = 16;
    int tiles_x = 0;
    int tiles_y = 0;
    std::vector<std::uint32_t> offsets;  // tiles_x * tiles_y + 1
    std::vector<std::uint32_t> entries;

    std::span<const std::uint32_t> tile(int tx, int ty) const {
        const std::size_t t = static_cast<std::size_t>(ty) * tiles_x + tx;
        return {entries.data() + offsets[t], entries.data() + offsets[t + 1]};
    }
};

template <typename Scalar>
struct RenderFrame {
    Image<Scalar> color;
    std::vector<Scalar> final_transmittance;
    std::vector<std::uint32_t> contrib_counts;
    Vec3<Scalar> background = Vec3<Scalar>::Zero();

    // Retained for the backward pass.
    struct Tape {
        RasterConfig config;
        TileBinning binning;
        AlignedVector<Vec2<Scalar>> centers;
        AlignedVector<Mat2<Scalar>> conics;
        AlignedVector<Vec3<Scalar>> colors;
        std::vector<Scalar> opacities;
        // Per pixel: number of tile-list entries visited before termination.
        std::vector<std::uint32_t> last_entry;
        bool valid = false;
    } tape;

    int width() const { return color.width; }
    int height() const { return color.height; }
};

// Front-to-back alpha compositing over depth-sorted tiles. Ties in depth are
// broken by ascending source_index. Throws Render naming the first splat
// with non-finite parameters.
template <typename Scalar>
RenderFrame<Scalar> rasterize(std::span<const Splat2D<Scalar>> splats,
                              std::span<const Vec3<Scalar>> colors,
                              std::span<const Scalar> opacities, int width, int height,
                              const Vec3<Scalar>& background, const RasterConfig& config = {});

// Untiled per-pixel loop over globally sorted splats. Applies only the
// alpha clamp from config; there is no skip floor, early termination or
// box truncation.
template <typename Scalar>
RenderFrame<Scalar> rasterize_reference(std::span<const Splat2D<Scalar>> splats,
                                        std::span<const Vec3<Scalar>> colors,
                                        std::span<const Scalar> opacities, int width, int height,
                                        const Vec3<Scalar>& background,
                                        const RasterConfig& config = {});

template <typename Scalar>
struct RasterGrads {
    AlignedVector<Vec2<Scalar>> d_center_px;
    AlignedVector<Mat2<Scalar>> d_cov2d;  // symmetric convention
    AlignedVector<Vec3<Scalar>> d_color;
    std::vector<Scalar> d_opacity;
};

// Exact adjoint of rasterize. Per-splat transmittances are rebuilt back to
// front from the stored final transmittance. Throws State if the frame has
// no tape.
template <typename Scalar>
RasterGrads<Scalar> rasterize_backward(const RenderFrame<Scalar>& frame, const Image<Scalar>& d_color);

template <typename Scalar>
TileBinning bin_splats(std::span<const Splat2D<Scalar>> splats, int width, int height,
                       const RasterConfig& config);

}  // namespace dmsr
