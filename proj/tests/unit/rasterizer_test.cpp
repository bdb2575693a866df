// SPDX-License-Identifier: Apache-2.0
#include "dmsr/rasterizer.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <numeric>

namespace dmsr {
namespace {

template <typename S>
struct Scene {
    std::vector<Splat2D<S>> splats;
    AlignedVector<Vec3<S>> colors;
    std::vector<S> opacities;
    Vec3<S> background;
    int width = 64, height = 64;

    RenderFrame<S> render(const RasterConfig& config = {}) const {
        return rasterize<S>(splats, colors, opacities, width, height, background, config);
    }
};

template <typename S>
Scene<S> random_scene(Rng& rng, int n, int w, int h) {
    Scene<S> s;
    s.width = w;
    s.height = h;
    for (int i = 0; i < n; ++i) {
        Splat2D<S> sp;
        sp.center_px = {S(rng.uniform(-5, w + 5)), S(rng.uniform(-5, h + 5))};
        const double a = rng.uniform(0.5, 8), b = rng.uniform(0.5, 8), c = rng.uniform(-0.9, 0.9) * std::sqrt(a * b);
        sp.cov2d << S(a), S(c), S(c), S(b);
        sp.depth = S(rng.uniform(0.5, 20));
        sp.source_index = static_cast<std::uint32_t>(i);
        s.splats.push_back(sp);
        s.colors.push_back(test::uniform3(rng, 0, 1).cast<S>());
        s.opacities.push_back(S(rng.uniform(0.02, 0.98)));
    }
    s.background = test::uniform3(rng, 0, 1).cast<S>();
    return s;
}

// Brute force: every pixel walks every splat in (depth, source_index)
// order with no thresholds at all.
Image<double> brute_force(const Scene<double>& s) {
    std::vector<std::size_t> order(s.splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.splats[a].depth != s.splats[b].depth) return s.splats[a].depth < s.splats[b].depth;
        return s.splats[a].source_index < s.splats[b].source_index;
    });
    Image<double> img(s.width, s.height);
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            const Vec2<double> p(x + 0.5, y + 0.5);
            Vec3<double> c = Vec3<double>::Zero();
            double t = 1;
            for (const std::size_t i : order) {
                const Vec2<double> d = p - s.splats[i].center_px;
                const double alpha = s.opacities[i] * std::exp(-0.5 * d.dot(s.splats[i].cov2d.inverse() * d));
                c += s.colors[i] * alpha * t;
                t *= 1 - alpha;
            }
            img.at(x, y) = (c + s.background * t).transpose().array();
        }
    }
    return img;
}

TEST(Rasterize, EmptyGivesBackground) {
    Scene<double> s;
    s.background = {0.2, 0.4, 0.6};
    const RenderFrame<double> f = s.render();
    for (Eigen::Index p = 0; p < f.color.pixel_count(); ++p) {
        EXPECT_EQ(f.color.pixels.row(p).matrix().transpose(), s.background);
        EXPECT_EQ(f.final_transmittance[static_cast<std::size_t>(p)], 1.0);
    }
}

TEST(Rasterize, SingleSplatOnPixelCenter) {
    for (const double o : {0.5, 0.995}) {
        Scene<double> s;
        s.width = s.height = 8;
        s.background.setZero();
        Splat2D<double> sp;
        sp.center_px = {3.5, 4.5};
        sp.cov2d = Mat2<double>::Identity();
        sp.depth = 1;
        s.splats = {sp};
        s.colors = {Vec3<double>(0.3, 0.6, 0.9)};
        s.opacities = {o};
        const RenderFrame<double> f = s.render();
        const Vec3<double> got = f.color.at(3, 4).matrix().transpose();
        EXPECT_NEAR((got - s.colors[0] * std::min(o, 0.99)).norm(), 0, 1e-15);
    }
}

TEST(Rasterize, TwoOverlappingSplats) {
    Scene<double> s;
    s.width = s.height = 4;
    s.background.setZero();
    Splat2D<double> front, back;
    front.center_px = back.center_px = {1.5, 1.5};
    front.cov2d = back.cov2d = Mat2<double>::Identity() * 0.5;
    front.depth = 1;
    back.depth = 2;
    back.source_index = 1;
    // Submitted back first: sorting is internal.
    s.splats = {back, front};
    const Vec3<double> c1(0.9, 0.1, 0.2), c2(0.1, 0.8, 0.3);
    const double a1 = 0.6, a2 = 0.7;
    s.colors = {c2, c1};
    s.opacities = {a2, a1};
    const Vec3<double> got = s.render().color.at(1, 1).matrix().transpose();
    EXPECT_NEAR((got - (c1 * a1 + c2 * a2 * (1 - a1))).norm(), 0, 1e-15);
}

TEST(Rasterize, OracleModeMatchesBruteForce) {
    Rng rng(31);
    for (int k = 0; k < 10; ++k) {
        const Scene<double> s = random_scene<double>(rng, 30, 40, 24);
        const Image<double> want = brute_force(s);
        const RenderFrame<double> got = s.render(RasterConfig::oracle());
        EXPECT_LT((got.color.pixels - want.pixels).abs().maxCoeff(), 1e-12);
    }
}

TEST(Rasterize, TiledMatchesReference) {
    Rng rng(32);
    for (int k = 0; k < 20; ++k) {
        const Scene<float> s = random_scene<float>(rng, 1 + static_cast<int>(rng.index(50)), 64, 64);
        const RasterConfig config = RasterConfig::oracle();
        const RenderFrame<float> tiled = s.render(config);
        const RenderFrame<float> ref =
            rasterize_reference<float>(s.splats, s.colors, s.opacities, s.width, s.height, s.background, config);
        EXPECT_LE((tiled.color.pixels - ref.color.pixels).abs().maxCoeff(), 1e-6f);
    }
}

TEST(Rasterize, PermutationInvariant) {
    Rng rng(33);
    Scene<float> s = random_scene<float>(rng, 40, 48, 48);
    // Two splats share a depth so the source_index tie-break is exercised.
    s.splats[5].depth = s.splats[9].depth;
    const RenderFrame<float> a = s.render();
    Scene<float> p = s;
    std::vector<std::size_t> perm(s.splats.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[0], perm[7]);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        p.splats[i] = s.splats[perm[i]];
        p.colors[i] = s.colors[perm[i]];
        p.opacities[i] = s.opacities[perm[i]];
    }
    const RenderFrame<float> b = p.render();
    EXPECT_TRUE((a.color.pixels == b.color.pixels).all());
}

TEST(Rasterize, MonotoneInBackgroundAndBounded) {
    Rng rng(34);
    Scene<double> s = random_scene<double>(rng, 25, 32, 32);
    const RenderFrame<double> a = s.render();
    s.background[1] = std::min(1.0, s.background[1] + 0.3);
    const RenderFrame<double> b = s.render();
    EXPECT_TRUE((b.color.pixels.col(1) >= a.color.pixels.col(1)).all());
    EXPECT_TRUE((a.color.pixels >= 0).all());
    EXPECT_TRUE((a.color.pixels <= 1 + 1e-6).all());
    for (const double t : a.final_transmittance) {
        EXPECT_GE(t, 0);
        EXPECT_LE(t, 1);
    }
}

TEST(Rasterize, BinningCoversExactlyTheBox) {
    Rng rng(35);
    const Scene<float> s = random_scene<float>(rng, 30, 70, 50);
    RasterConfig config;
    const TileBinning bins = bin_splats<float>(s.splats, s.width, s.height, config);
    for (int ty = 0; ty < bins.tiles_y; ++ty) {
        for (int tx = 0; tx < bins.tiles_x; ++tx) {
            const auto list = bins.tile(tx, ty);
            for (std::size_t k = 1; k < list.size(); ++k)
                EXPECT_LE(s.splats[list[k - 1]].depth, s.splats[list[k]].depth);
            for (std::size_t i = 0; i < s.splats.size(); ++i) {
                const auto& sp = s.splats[i];
                const double rx = 3 * std::sqrt(sp.cov2d(0, 0)), ry = 3 * std::sqrt(sp.cov2d(1, 1));
                const double x0 = tx * 16.0, y0 = ty * 16.0;
                const bool hits = sp.center_px.x() + rx >= x0 && sp.center_px.x() - rx < x0 + 16 &&
                                  sp.center_px.y() + ry >= y0 && sp.center_px.y() - ry < y0 + 16 &&
                                  sp.center_px.x() - rx <= s.width && sp.center_px.y() - ry <= s.height;
                const bool listed = std::find(list.begin(), list.end(), i) != list.end();
                EXPECT_EQ(hits, listed) << "splat " << i << " tile " << tx << "," << ty;
            }
        }
    }
}

TEST(Rasterize, NonFiniteSplatNamesIndex) {
    Rng rng(36);
    Scene<float> s = random_scene<float>(rng, 5, 16, 16);
    s.splats[3].center_px.x() = std::numeric_limits<float>::quiet_NaN();
    try {
        s.render();
        FAIL() << "expected a render error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Render);
        EXPECT_NE(std::string(e.what()).find('3'), std::string::npos) << e.what();
    }
}

TEST(RasterizeBackward, ZeroUpstreamGivesZero) {
    Rng rng(37);
    const Scene<double> s = random_scene<double>(rng, 10, 24, 24);
    const RasterGrads<double> g = rasterize_backward(s.render(), Image<double>(24, 24));
    for (std::size_t i = 0; i < s.splats.size(); ++i) {
        EXPECT_TRUE(g.d_center_px[i].isZero(0));
        EXPECT_TRUE(g.d_cov2d[i].isZero(0));
        EXPECT_TRUE(g.d_color[i].isZero(0));
        EXPECT_EQ(g.d_opacity[i], 0.0);
    }
}

TEST(RasterizeBackward, SinglePixelOpacityGradient) {
    Scene<double> s;
    s.width = s.height = 1;
    s.background.setZero();
    Splat2D<double> sp;
    sp.center_px = {0.5, 0.5};
    sp.cov2d = Mat2<double>::Identity();
    sp.depth = 1;
    s.splats = {sp};
    s.colors = {Vec3<double>(0.25, 0.5, 0.75)};
    s.opacities = {0.4};
    Image<double> d(1, 1);
    d.pixels(0, 2) = 1.0;  // loss = blue channel of the pixel
    const RasterGrads<double> g = rasterize_backward(s.render(), d);
    EXPECT_NEAR(g.d_opacity[0], 1.0 * 0.75, 1e-15);  // g = 1 at the center
    EXPECT_NEAR(g.d_color[0][2], 0.4, 1e-15);
}

TEST(RasterizeBackward, SkippedSplatGetsNoGradient) {
    Scene<double> s;
    s.width = s.height = 4;
    s.background = {0.5, 0.5, 0.5};
    Splat2D<double> sp;
    sp.center_px = {2, 2};
    sp.cov2d = Mat2<double>::Identity();
    sp.depth = 1;
    s.splats = {sp};
    s.colors = {Vec3<double>(1, 0, 0)};
    s.opacities = {0.003};  // below the 1/255 floor everywhere
    Image<double> d(4, 4);
    d.pixels.setOnes();
    const RasterGrads<double> g = rasterize_backward(s.render(), d);
    EXPECT_EQ(g.d_opacity[0], 0.0);
    EXPECT_TRUE(g.d_color[0].isZero(0));
    EXPECT_TRUE(g.d_center_px[0].isZero(0));
}

TEST(RasterizeBackward, MissingTapeIsStateError) {
    RenderFrame<double> frame;
    try {
        rasterize_backward(frame, Image<double>(1, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::State);
    }
}

}  // namespace
}  // namespace dmsr
