// SPDX-License-Identifier: Apache-2.0
#include "dmsr/image.hpp"

#include "dmsr/error.hpp"

#include <png.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace dmsr {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Linearization table for 8-bit inputs so every decode maps identically.
const std::array<float, 256>& srgb8_table() {
    static const std::array<float, 256> table = [] {
        std::array<float, 256> t{};
        for (int i = 0; i < 256; ++i) t[i] = static_cast<float>(srgb_to_linear(i / 255.0));
        return t;
    }();
    return table;
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image<float>& linear) {
    FilePtr file(std::fopen(path.c_str(), "wb"));
    if (!file) fail(ErrorKind::Io, "cannot open for writing: " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "libpng initialization failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(linear.width) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "PNG encode failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, linear.width, linear.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed header timestamps etc. are never written, so identical images
    // produce identical bytes.
    png_write_info(png, info);
    for (int y = 0; y < linear.height; ++y) {
        for (int x = 0; x < linear.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double s = linear_to_srgb(static_cast<double>(linear.at(x, y)[c]));
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<png_byte>(std::lround(s * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image<float> read_png(const std::filesystem::path& path, const Vec3<float>* background) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail(ErrorKind::Io, "cannot open image: " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        fail(ErrorKind::Parse, "not a PNG file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Io, "libpng initialization failed");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorKind::Parse, "PNG decode failed: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_packing(png);
    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_add_alpha(png, 0xFF, PNG_FILLER_AFTER);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * static_cast<std::size_t>(height));
    rows.resize(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const auto& lut = srgb8_table();
    Image<float> out(width, height);
    for (int y = 0; y < height; ++y) {
        const png_byte* row = rows[static_cast<std::size_t>(y)];
        for (int x = 0; x < width; ++x) {
            const png_byte* px = row + static_cast<std::size_t>(x) * 4;
            const float alpha = px[3] / 255.0f;
            for (int c = 0; c < 3; ++c) {
                float v = lut[px[c]];
                if (background) v = v * alpha + (*background)[c] * (1.0f - alpha);
                out.at(x, y)[c] = v;
            }
        }
    }
    return out;
}

std::array<int, 2> png_size(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.c_str(), "rb"));
    if (!file) fail(ErrorKind::Io, "cannot open image: " + path.string());
    // Signature (8), IHDR length and tag (8), then big-endian width and height.
    png_byte head[24];
    if (std::fread(head, 1, sizeof(head), file.get()) != sizeof(head) || png_sig_cmp(head, 0, 8) != 0 ||
        std::memcmp(head + 12, "IHDR", 4) != 0) {
        fail(ErrorKind::Parse, "not a PNG file: " + path.string());
    }
    auto be32 = [&](int at) {
        return static_cast<int>((static_cast<std::uint32_t>(head[at]) << 24) | (static_cast<std::uint32_t>(head[at + 1]) << 16) |
                                (static_cast<std::uint32_t>(head[at + 2]) << 8) | static_cast<std::uint32_t>(head[at + 3]));
    };
    return {be32(16), be32(20)};
}

void write_f32_dump(const std::filesystem::path& path, const Image<float>& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(img.width),
                                   static_cast<std::uint32_t>(img.height)};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Image<float> read_f32_dump(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open: " + path.string());
    std::uint32_t dims[2];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) fail(ErrorKind::Parse, "truncated f32 dump: " + path.string());
    Image<float> img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * sizeof(float)));
    if (!in) fail(ErrorKind::Parse, "truncated f32 dump: " + path.string());
    return img;
}

}  // namespace dmsr
