// SPDX-License-Identifier: Apache-2.0
#include "dmsr/saliency.hpp"

#include "test_util.hpp"

namespace dmsr {
namespace {

using test::uniform3;

SaliencyConfig config(double decay = 0.9, double q = 0.3, int warmup = 0) {
    SaliencyConfig c;
    c.ema_decay = decay;
    c.threshold_quantile = q;
    c.warmup_iters = warmup;
    c.reactivation = false;
    return c;
}

Deltas<double> random_deltas(Rng& rng, double scale) {
    Deltas<double> d;
    d.position = uniform3(rng, -scale, scale);
    d.rotation = Vec4<double>(rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                              rng.uniform(-scale, scale));
    d.log_scale = uniform3(rng, -scale, scale);
    return d;
}

DeformationConfig small_field() {
    DeformationConfig c;
    c.levels = 2;
    c.base_resolution = 5;
    c.base_time_resolution = 4;
    c.feature_dim = 4;
    c.trunk_width = 10;
    c.head_width = 8;
    c.enhance_hidden = 6;
    return c;
}

DeformationField<double> random_field(std::uint64_t seed) {
    DeformationField<double> field(small_field(), seed);
    Rng rng(seed);
    for (auto& b : field.params().blocks())
        for (double& v : b.values) v = b.group == ParamGroup::Grids ? rng.uniform(0.6, 1.4) : rng.uniform(-0.5, 0.5);
    return field;
}

GaussianCloud<double> random_cloud(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    GaussianCloud<double> cloud;
    for (std::size_t i = 0; i < n; ++i)
        cloud.push_back(uniform3(rng, -0.9, 0.9), test::random_quat(rng), uniform3(rng, -3, -2), 0.0,
                        ShBlock<double>::Zero());
    return cloud;
}

TEST(Update, ZeroDeltasKeepZeroEma) {
    SaliencyState<double> s(config(), 4);
    const std::vector<Deltas<double>> d(4);
    for (int k = 0; k < 5; ++k) update_saliency<double>(s, d, 1.0);
    for (const double e : s.ema) EXPECT_EQ(e, 0.0);
}

TEST(Update, FullExtentShiftWithNoMemoryIsOne) {
    SaliencyState<double> s(config(0.0), 1);
    std::vector<Deltas<double>> d(1);
    d[0].position = {0, 2.5, 0};
    update_saliency<double>(s, d, 2.5);
    EXPECT_DOUBLE_EQ(s.ema[0], 1.0);
}

TEST(Update, FollowsEmaRecurrence) {
    Rng rng(1);
    SaliencyState<double> s(config(0.8), 6);
    std::vector<double> oracle(6, 0.0);
    for (int k = 0; k < 20; ++k) {
        std::vector<Deltas<double>> d;
        for (int i = 0; i < 6; ++i) d.push_back(random_deltas(rng, 0.1));
        update_saliency<double>(s, d, 3.0);
        for (int i = 0; i < 6; ++i) {
            const double sigma = d[i].position.norm() / 3.0 + d[i].rotation.norm() + d[i].log_scale.norm();
            oracle[i] = 0.8 * oracle[i] + 0.2 * sigma;
            EXPECT_NEAR(s.ema[i], oracle[i], 1e-14);
        }
    }
}

TEST(Update, FrozenEmaIsHeldAndBadDeltasName) {
    SaliencyState<double> s(config(0.5), 3);
    s.frozen[1] = 1;
    std::vector<Deltas<double>> d(3);
    d[1].position = {std::nan(""), 0, 0};
    EXPECT_NO_THROW(update_saliency<double>(s, d, 1.0));
    d[2].log_scale = {0, INFINITY, 0};
    try {
        update_saliency<double>(s, d, 1.0);
        FAIL() << "expected a Training error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Training);
        EXPECT_NE(std::string(e.what()).find("Gaussian 2"), std::string::npos);
    }
}

TEST(Refresh, IdenticalEmasFreezeNothing) {
    SaliencyState<double> s(config(0.9, 0.5), 10);
    std::fill(s.ema.begin(), s.ema.end(), 0.25);
    const RefreshReport r = refresh_partition(s, 0);
    EXPECT_TRUE(r.applied);
    EXPECT_EQ(s.frozen_count(), 0u);
}

TEST(Refresh, MedianSplitFreezesLowerHalf) {
    SaliencyState<double> s(config(0.9, 0.5), 4);
    s.ema = {0, 1, 2, 3};
    refresh_partition(s, 0);
    EXPECT_EQ(s.frozen, (std::vector<std::uint8_t>{1, 1, 0, 0}));
    EXPECT_DOUBLE_EQ(s.last_threshold, 1.5);
}

TEST(Refresh, NoOpDuringWarmup) {
    SaliencyState<double> s(config(0.9, 0.5, 100), 4);
    s.ema = {0, 1, 2, 3};
    EXPECT_FALSE(refresh_partition(s, 99).applied);
    EXPECT_EQ(s.frozen_count(), 0u);
    EXPECT_TRUE(refresh_partition(s, 100).applied);
    EXPECT_EQ(s.frozen_count(), 2u);
}

TEST(Refresh, FrozenSetNeverExceedsCap) {
    Rng rng(2);
    SaliencyState<double> s(config(0.9, 0.3), 50);
    for (int round = 0; round < 10; ++round) {
        for (auto& e : s.ema) e = rng.uniform(0, 1);
        refresh_partition(s, round);
        EXPECT_LE(s.frozen_count(), 15u);
    }
}

TEST(Refresh, ReactivatesLargeScreenGradients) {
    SaliencyConfig c = config(0.9, 0.5);
    c.reactivation = true;
    c.reactivation_percentile = 0.5;
    SaliencyState<double> s(c, 4);
    s.ema = {0, 1, 2, 3};
    refresh_partition(s, 0);
    s.grad_accum = {10, 0, 1, 1};
    const RefreshReport r = refresh_partition(s, 1);
    EXPECT_EQ(r.reactivated, 1u);
    EXPECT_EQ(s.frozen[0], 0);
    EXPECT_EQ(s.frozen[1], 1);
}

TEST(Cache, NearestBinWithEarlierTieBreak) {
    SaliencyConfig c = config();
    c.time_bins = 4;
    SaliencyState<double> s(c, 1);
    EXPECT_EQ(s.cached_deltas(0, 0.5), nullptr);
    Deltas<double> a, b;
    a.position.x() = 1;
    b.position.x() = 2;
    s.record_deltas(0, 0.1, a);  // bin 0
    s.record_deltas(0, 0.6, b);  // bin 2
    EXPECT_EQ(s.cached_deltas(0, 0.3)->position.x(), 1);  // bin 1: tie, earlier wins
    EXPECT_EQ(s.cached_deltas(0, 0.99)->position.x(), 2);
}

TEST(Gated, AllFrozenWithEmptyCacheIsCanonical) {
    const auto field = random_field(3);
    const auto cloud = random_cloud(12, 4);
    SaliencyState<double> s(config(), 12);
    std::fill(s.frozen.begin(), s.frozen.end(), 1);
    const auto r = gated_deform(cloud, field, 0.3, &s);
    EXPECT_EQ(r.network_evaluations, 0u);
    EXPECT_EQ(r.cache_fallbacks, 12u);
    for (const auto& d : r.deltas) EXPECT_TRUE(d.is_zero());
    const std::vector<Deltas<double>> upstream(12, Deltas<double>{{1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1}});
    const auto g = gated_deform_backward<double>(field, r, upstream);
    for (const auto& b : g.params.blocks())
        for (const double v : b.values) EXPECT_EQ(v, 0.0);
}

TEST(Gated, NoFrozenMatchesUngatedBitwise) {
    const auto field = random_field(5);
    const auto cloud = random_cloud(20, 6);
    SaliencyState<double> s(config(), 20);
    const auto gated = gated_deform(cloud, field, 0.7, &s);
    const auto plain = gated_deform<double>(cloud, field, 0.7, nullptr);
    EXPECT_EQ(gated.network_evaluations, 20u);
    for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_EQ(gated.deltas[i].position, plain.deltas[i].position);
        EXPECT_EQ(gated.deltas[i].rotation, plain.deltas[i].rotation);
        EXPECT_EQ(gated.deltas[i].log_scale, plain.deltas[i].log_scale);
    }
}

TEST(Gated, MixedMaskMatchesActiveSubsetOracle) {
    const auto field = random_field(7);
    const auto cloud = random_cloud(25, 8);
    Rng rng(9);
    SaliencyState<double> s(config(), 25);
    for (auto& f : s.frozen) f = rng.uniform(0, 1) < 0.4;
    for (std::size_t i = 0; i < 25; ++i)
        if (s.frozen[i]) s.record_deltas(i, 0.4, random_deltas(rng, 0.05));

    std::vector<Deltas<double>> upstream;
    for (int i = 0; i < 25; ++i) upstream.push_back(random_deltas(rng, 1.0));
    const auto gated = gated_deform(cloud, field, 0.45, &s);
    const auto g = gated_deform_backward<double>(field, gated, upstream);

    // Oracle: run the field on the active subset alone.
    AlignedVector<Vec3<double>> positions;
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < 25; ++i)
        if (!s.frozen[i]) {
            positions.push_back(cloud.positions[i]);
            active.push_back(i);
        }
    const double t = 0.45;
    DeformTape<double> tape;
    const auto out = field.forward(positions, std::span<const double>(&t, 1), &tape);
    const auto m = static_cast<Eigen::Index>(active.size());
    MatX<double> dp(3, m), dr(4, m), ds(3, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& u = upstream[active[static_cast<std::size_t>(k)]];
        dp.col(k) = u.position;
        dr.col(k) = u.rotation;
        ds.col(k) = u.log_scale;
        EXPECT_EQ(gated.deltas[active[static_cast<std::size_t>(k)]].position, out.column(k).position);
    }
    const auto want = field.backward(tape, dp, dr, ds);
    const auto got_blocks = g.params.blocks();
    const auto want_blocks = want.params.blocks();
    ASSERT_EQ(got_blocks.size(), want_blocks.size());
    for (std::size_t b = 0; b < got_blocks.size(); ++b)
        for (std::size_t k = 0; k < got_blocks[b].values.size(); ++k)
            EXPECT_NEAR(got_blocks[b].values[k], want_blocks[b].values[k], 1e-10) << got_blocks[b].name;

    // Frozen Gaussians take their cached deltas.
    for (std::size_t i = 0; i < 25; ++i)
        if (s.frozen[i]) {
            EXPECT_EQ(gated.deltas[i].position, s.cached_deltas(i, 0.45)->position);
        }
}

TEST(Config, Validate) {
    SaliencyConfig c;
    c.threshold_quantile = 1.0;
    EXPECT_EQ(test::thrown_kind([&] { c.validate(); }), ErrorKind::Config);
    c = SaliencyConfig{};
    c.ema_decay = 1.0;
    EXPECT_EQ(test::thrown_kind([&] { c.validate(); }), ErrorKind::Config);
}

}  // namespace
}  // namespace dmsr
