// SPDX-License-Identifier: Apache-2.0
#include "dmsr/image.hpp"
#include "dmsr/loss.hpp"
#include "dmsr/metrics.hpp"

#include "test_util.hpp"

#include <cmath>

namespace dmsr {
namespace {

Image<double> random_image(int w, int h, Rng& rng) {
    Image<double> img(w, h);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = rng.uniform(0, 1);
    return img;
}

// Windowed SSIM written out pixel by pixel.
double brute_ssim(const Image<double>& a, const Image<double>& b, int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        const double d = i - (size - 1) / 2.0;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= sum;
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    int count = 0;
    for (int c = 0; c < 3; ++c)
        for (int y0 = 0; y0 + size <= a.height; ++y0)
            for (int x0 = 0; x0 + size <= a.width; ++x0) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int j = 0; j < size; ++j)
                    for (int i = 0; i < size; ++i) {
                        const double k = w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(j)];
                        const double va = a.at(x0 + i, y0 + j)[c], vb = b.at(x0 + i, y0 + j)[c];
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                saa -= ma * ma;
                sbb -= mb * mb;
                sab -= ma * mb;
                total += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
                ++count;
            }
    return total / count;
}

TEST(Psnr, IdenticalIsInfinite) {
    Rng rng(1);
    const auto a = random_image(8, 8, rng);
    EXPECT_TRUE(is_inf_psnr(psnr(a, a)));
}

TEST(Psnr, UniformOffsetOfTenthIsTwentyDb) {
    const auto a = Image<double>::filled(5, 7, Vec3<double>::Zero());
    const auto b = Image<double>::filled(5, 7, Vec3<double>::Constant(0.1));
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
}

TEST(Psnr, MatchesMseFormula) {
    Rng rng(2);
    const auto a = random_image(9, 6, rng), b = random_image(9, 6, rng);
    const double mse = (a.pixels - b.pixels).square().mean();
    EXPECT_NEAR(psnr(a, b), -10 * std::log10(mse), 1e-10);
}

TEST(Ssim, IdenticalIsOne) {
    Rng rng(3);
    const auto a = random_image(16, 16, rng);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const double u = 0.7, v = 0.2;
    const auto a = Image<double>::filled(12, 12, Vec3<double>::Constant(u));
    const auto b = Image<double>::filled(12, 12, Vec3<double>::Constant(v));
    EXPECT_NEAR(ssim(a, b), (2 * u * v + 1e-4) / (u * u + v * v + 1e-4), 1e-12);
}

TEST(Ssim, MatchesBruteForceWindow) {
    Rng rng(4);
    const auto a = random_image(15, 13, rng), b = random_image(15, 13, rng);
    EXPECT_NEAR(ssim(a, b), brute_ssim(a, b, 11, 1.5), 1e-12);
}

TEST(Ssim, SymmetricAndInverseIsWorse) {
    Rng rng(5);
    const auto a = random_image(16, 16, rng), b = random_image(16, 16, rng);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
    Image<double> inv = a;
    inv.pixels = 1.0 - a.pixels;
    EXPECT_LT(ssim(a, inv), 0.0);
}

TEST(Ssim, TooSmallImageThrows) {
    const auto a = Image<double>::filled(10, 20, Vec3<double>::Zero());
    EXPECT_EQ(test::thrown_kind([&] { ssim(a, a); }), ErrorKind::InvalidParameter);
}

TEST(Window, NormalizedAndSymmetric) {
    const auto w = gaussian_window(11, 1.5);
    double sum = 0;
    for (const double v : w) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-15);
    for (int i = 0; i < 11; ++i) EXPECT_DOUBLE_EQ(w[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(10 - i)]);
}

TEST(Loss, IdenticalImagesGiveZero) {
    Rng rng(6);
    const auto a = random_image(16, 16, rng);
    const auto r = compute_loss(a, a);
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
    EXPECT_EQ(r.l1, 0.0);
    EXPECT_LT(r.d_rendered.pixels.abs().maxCoeff(), 1e-12);
}

TEST(Loss, ConstantExample) {
    const auto r = Image<double>::filled(16, 16, Vec3<double>::Constant(0.5));
    const auto t = Image<double>::filled(16, 16, Vec3<double>::Constant(0.3));
    const auto out = compute_loss(r, t);
    const double s = (2 * 0.5 * 0.3 + 1e-4) / (0.25 + 0.09 + 1e-4);
    EXPECT_NEAR(out.l1, 0.2, 1e-12);
    EXPECT_NEAR(out.ssim, s, 1e-12);
    EXPECT_NEAR(out.loss, 0.8 * 0.2 + 0.2 * (1 - s), 1e-12);
}

TEST(Loss, PureL1Gradient) {
    Rng rng(7);
    const auto r = random_image(12, 12, rng), t = random_image(12, 12, rng);
    const auto out = compute_loss(r, t, {1.0, 0.0});
    const double n = static_cast<double>(r.pixels.size());
    for (Eigen::Index i = 0; i < r.pixels.size(); ++i) {
        const double sign = r.pixels.data()[i] > t.pixels.data()[i] ? 1.0 : -1.0;
        EXPECT_DOUBLE_EQ(out.d_rendered.pixels.data()[i], sign / n);
    }
}

TEST(Png, RoundTripWithinQuantization) {
    Rng rng(8);
    Image<float> img(7, 5);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = static_cast<float>(rng.uniform(0, 1));
    const auto path = test::scratch_dir() / "img.png";
    write_png(path, img);
    EXPECT_EQ(png_size(path), (std::array<int, 2>{7, 5}));
    const Image<float> back = read_png(path);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) {
        const double s = linear_to_srgb(img.pixels.data()[i]);
        const double q = std::round(s * 255) / 255;
        EXPECT_NEAR(back.pixels.data()[i], srgb_to_linear(q), 1e-6);
    }
}

TEST(Png, MissingFileIsIoError) {
    EXPECT_EQ(test::thrown_kind([] { read_png("/nonexistent/x.png"); }), ErrorKind::Io);
}

}  // namespace
}  // namespace dmsr
