// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/types.hpp"

#include <array>
#include <cmath>
#include <filesystem>

namespace dmsr {

// Linear RGB image, one row per pixel in row-major pixel order (y * width + x).
template <typename Scalar>
struct Image {
    using Pixels = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

    int width = 0;
    int height = 0;
    Pixels pixels;

    Image() = default;
    Image(int w, int h) : width(w), height(h), pixels(Pixels::Zero(static_cast<Eigen::Index>(w) * h, 3)) {}

    static Image filled(int w, int h, const Vec3<Scalar>& rgb) {
        Image img(w, h);
        img.pixels.rowwise() = rgb.transpose().array();
        return img;
    }

    Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
    auto at(int x, int y) { return pixels.row(index(x, y)); }
    auto at(int x, int y) const { return pixels.row(index(x, y)); }
    Eigen::Index pixel_count() const { return pixels.rows(); }

    // One channel as a height x width row-major array.
    Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> channel(int c) const {
        Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) out(y, x) = pixels(index(x, y), c);
        return out;
    }

    template <typename Other>
    Image<Other> cast() const {
        Image<Other> out;
        out.width = width;
        out.height = height;
        out.pixels = pixels.template cast<Other>();
        return out;
    }
};

inline double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

// 8-bit sRGB PNG. Linear values are clamped to [0, 1] before encoding.
void write_png(const std::filesystem::path& path, const Image<float>& linear);

// Decodes an 8-bit or 16-bit PNG (gray, RGB or RGBA) to linear RGB. RGBA
// images are composited over `background` (linear) when given.
Image<float> read_png(const std::filesystem::path& path, const Vec3<float>* background = nullptr);
// Width and height from the PNG header without decoding pixels.
std::array<int, 2> png_size(const std::filesystem::path& path);

// Lossless little-endian f32 dump: u32 width, u32 height, then w*h*3 floats.
void write_f32_dump(const std::filesystem::path& path, const Image<float>& img);
Image<float> read_f32_dump(const std::filesystem::path& path);

}  // namespace dmsr
