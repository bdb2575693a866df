// SPDX-License-Identifier: Apache-2.0
#include "dmsr/checkpoint.hpp"

#include "test_util.hpp"

#include <cstring>

namespace dmsr {
namespace {

GaussianCloud<float> random_cloud(std::size_t n, int degree, std::uint64_t seed) {
    Rng rng(seed);
    GaussianCloud<float> cloud;
    cloud.sh_degree = degree;
    for (std::size_t i = 0; i < n; ++i) {
        ShBlock<float> sh = ShBlock<float>::Zero();
        for (int k = 0; k < (degree + 1) * (degree + 1); ++k)
            for (int c = 0; c < 3; ++c) sh(k, c) = static_cast<float>(rng.normal());
        cloud.push_back(test::uniform3(rng, -1, 1).cast<float>(), test::random_quat(rng).cast<float>(),
                        test::uniform3(rng, -4, -1).cast<float>(), static_cast<float>(rng.normal()), sh);
    }
    return cloud;
}

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

void expect_bit_equal(const GaussianCloud<float>& a, const GaussianCloud<float>& b) {
    ASSERT_EQ(a.size(), b.size());
    const int k = (a.sh_degree + 1) * (a.sh_degree + 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_TRUE(same_bits(a.positions[i][j], b.positions[i][j]));
            EXPECT_TRUE(same_bits(a.log_scales[i][j], b.log_scales[i][j]));
        }
        for (int j = 0; j < 4; ++j) EXPECT_TRUE(same_bits(a.rotations[i][j], b.rotations[i][j]));
        EXPECT_TRUE(same_bits(a.opacity_logits[i], b.opacity_logits[i]));
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < 3; ++c) EXPECT_TRUE(same_bits(a.sh_coeffs[i](r, c), b.sh_coeffs[i](r, c)));
    }
}

TEST(Checkpoint, CloudRoundTripIsBitExact) {
    for (const int degree : {0, 1}) {
        const auto cloud = random_cloud(37, degree, 1 + degree);
        const auto bytes = encode_checkpoint(cloud, {});
        const auto back = decode_checkpoint(bytes, degree);
        expect_bit_equal(cloud, back.cloud);
        EXPECT_EQ(encode_checkpoint(back.cloud, {}), bytes);
    }
}

TEST(Checkpoint, HeaderLayout) {
    const auto cloud = random_cloud(5, 0, 3);
    const auto bytes = encode_checkpoint(cloud, {});
    ASSERT_GE(bytes.size(), 16u);
    EXPECT_EQ(std::memcmp(bytes.data(), "DMSR", 4), 0);
    std::uint32_t version;
    std::uint64_t count;
    std::memcpy(&version, bytes.data() + 4, 4);
    std::memcpy(&count, bytes.data() + 8, 8);
    EXPECT_EQ(version, kCheckpointVersion);
    EXPECT_EQ(count, 5u);
    EXPECT_EQ(bytes.size(), 16u + 5 * 4 * (3 + 4 + 3 + 1 + 3));
    float x0;
    std::memcpy(&x0, bytes.data() + 16, 4);
    EXPECT_TRUE(same_bits(x0, cloud.positions[0].x()));
}

TEST(Checkpoint, FileAndSectionsRoundTrip) {
    const auto cloud = random_cloud(9, 1, 4);
    DeformationConfig dc;
    dc.levels = 1;
    dc.base_resolution = 4;
    dc.base_time_resolution = 3;
    dc.feature_dim = 2;
    dc.trunk_width = 5;
    dc.head_width = 4;
    dc.enhance_hidden = 3;
    DeformationField<float> field(dc, 11);
    Rng rng(5);
    for (auto& b : field.params().blocks())
        for (float& v : b.values) v = static_cast<float>(rng.normal());
    SaliencyState<float> sal(SaliencyConfig{}, 9);
    sal.ema[3] = 0.5f;
    sal.frozen[2] = 1;
    sal.record_deltas(2, 0.3f, Deltas<float>{{1, 2, 3}, {0, 0, 0, 1}, {0, 0, 0}});

    const std::vector<CheckpointSection> sections = {make_section("DEFM", encode_deformation(field)),
                                                     make_section("SALI", encode_saliency(sal))};
    const auto path = test::scratch_dir() / "model.dmsr";
    write_checkpoint(path, cloud, sections);
    EXPECT_TRUE(std::filesystem::exists(path.string() + ".json"));
    const CheckpointFile file = read_checkpoint(path);
    expect_bit_equal(cloud, file.cloud);
    EXPECT_EQ(file.cloud.sh_degree, 1);
    ASSERT_NE(file.find("DEFM"), nullptr);
    EXPECT_EQ(file.find("OPTM"), nullptr);

    const auto f2 = decode_deformation(file.find("DEFM")->payload);
    const auto a = field.params().blocks();
    const auto b = f2.params().blocks();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < a[i].values.size(); ++k) EXPECT_TRUE(same_bits(a[i].values[k], b[i].values[k]));

    const auto s2 = decode_saliency(file.find("SALI")->payload);
    EXPECT_EQ(s2.ema, sal.ema);
    EXPECT_EQ(s2.frozen, sal.frozen);
    ASSERT_NE(s2.cached_deltas(2, 0.3f), nullptr);
    EXPECT_EQ(s2.cached_deltas(2, 0.3f)->position, Vec3<float>(1, 2, 3));
}

TEST(Checkpoint, OptimizerRoundTrip) {
    OptimizerState<float> s;
    s.step = 17;
    s.slots.push_back({"positions", {1, 2, 3}, {4, 5, 6}});
    const auto back = decode_optimizer(encode_optimizer(s));
    EXPECT_EQ(back.step, 17u);
    ASSERT_EQ(back.slots.size(), 1u);
    EXPECT_EQ(back.slots[0].name, "positions");
    EXPECT_EQ(back.slots[0].v, s.slots[0].v);
}

TEST(Checkpoint, CorruptInputsAreParseErrors) {
    const auto bytes = encode_checkpoint(random_cloud(4, 0, 6), {});
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_EQ(test::thrown_kind([&] { decode_checkpoint(bad, 0); }), ErrorKind::Parse);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 40);
    EXPECT_EQ(test::thrown_kind([&] { decode_checkpoint(cut, 0); }), ErrorKind::Parse);
    EXPECT_EQ(test::thrown_kind([&] { read_checkpoint(test::scratch_dir() / "absent.dmsr"); }), ErrorKind::Io);
}

}  // namespace
}  // namespace dmsr
