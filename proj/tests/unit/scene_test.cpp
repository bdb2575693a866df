// SPDX-License-Identifier: Apache-2.0
#include "dmsr/scene.hpp"
#include "dmsr/checkpoint.hpp"

#include "test_util.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

namespace dmsr {
namespace {

using nlohmann::json;

json pose(double x, double y, double z) {
    return json::array({json::array({1, 0, 0, x}), json::array({0, 1, 0, y}), json::array({0, 0, 1, z}),
                        json::array({0, 0, 0, 1})});
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

// Two-frame train split, 8x6 images.
std::filesystem::path fixture(const json& frames, bool with_images = true) {
    const auto root = test::scratch_dir();
    std::filesystem::create_directories(root / "train");
    if (with_images) {
        write_png(root / "train" / "r_000.png", Image<float>::filled(8, 6, Vec3<float>(0.2f, 0.4f, 0.6f)));
        write_png(root / "train" / "r_001.png", Image<float>::filled(8, 6, Vec3<float>::Zero()));
    }
    json t = {{"camera_angle_x", 0.6911}, {"frames", frames}};
    write_text(root / "transforms_train.json", t.dump());
    return root;
}

json two_frames() {
    return json::array({{{"file_path", "./train/r_000"}, {"time", 0.0}, {"transform_matrix", pose(0, 0, 4)}},
                        {{"file_path", "./train/r_001"}, {"time", 1.0}, {"transform_matrix", pose(1, 0, 4)}}});
}

TEST(Dnerf, LoadsFixture) {
    const auto root = fixture(two_frames());
    const DynamicDataset ds = load_dnerf(root);
    ASSERT_EQ(ds.train.size(), 2u);
    EXPECT_TRUE(ds.val.empty());
    EXPECT_TRUE(ds.test.empty());
    const double focal = 0.5 * 8 / std::tan(0.5 * 0.6911);
    for (const auto& f : ds.train) {
        EXPECT_EQ(f.camera.width, 8);
        EXPECT_EQ(f.camera.height, 6);
        EXPECT_NEAR(f.camera.fx, focal, 1e-12);
        EXPECT_NEAR(f.camera.fy, focal, 1e-12);
    }
    EXPECT_EQ(ds.train[1].time, 1.0);
    EXPECT_NEAR((ds.train[1].camera.center() - Vec3<double>(1, 0, 4)).norm(), 0, 1e-12);
    EXPECT_EQ(ds.train[0].image_path, root / "train" / "r_000.png");

    const auto images = load_split_images(ds, ds.train);
    EXPECT_NEAR(images[0].at(3, 3)[1], srgb_to_linear(std::round(linear_to_srgb(0.4) * 255) / 255), 1e-6);
}

TEST(Dnerf, FrameWithoutTimeIsParseError) {
    json frames = two_frames();
    frames[1].erase("time");
    const auto root = fixture(frames);
    try {
        load_dnerf(root);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos);
    }
}

TEST(Dnerf, EmptySplitIsParseError) {
    const auto root = fixture(json::array());
    EXPECT_EQ(test::thrown_kind([&] { load_dnerf(root); }), ErrorKind::Parse);
}

TEST(Dnerf, MissingImagesAreReportedTogether) {
    const auto root = fixture(two_frames(), false);
    try {
        load_dnerf(root);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Io);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2 missing"), std::string::npos);
        EXPECT_NE(msg.find("r_000.png"), std::string::npos);
        EXPECT_NE(msg.find("r_001.png"), std::string::npos);
    }
}

TEST(Dnerf, MissingTrainSplitIsIoError) {
    const auto root = test::scratch_dir();
    EXPECT_EQ(test::thrown_kind([&] { load_dnerf(root); }), ErrorKind::Io);
}

TEST(Dnerf, SceneBoundsOverride) {
    const auto root = fixture(two_frames());
    json t = {{"camera_angle_x", 0.6911},
              {"frames", two_frames()},
              {"scene_bounds", json::array({json::array({-2, -1, -3}), json::array({2, 1, 3})})}};
    write_text(root / "transforms_train.json", t.dump());
    const DynamicDataset ds = load_dnerf(root);
    EXPECT_EQ(ds.bounds_min, Vec3<double>(-2, -1, -3));
    EXPECT_EQ(ds.scene_extent(), 3.0);
}

TEST(Background, Parsing) {
    EXPECT_EQ(parse_background("white"), Vec3<double>::Ones());
    EXPECT_EQ(parse_background("black"), Vec3<double>::Zero());
    EXPECT_EQ(parse_background("0.25,0.5,1"), Vec3<double>(0.25, 0.5, 1));
    EXPECT_EQ(test::thrown_kind([] { parse_background("1.5,0,0"); }), ErrorKind::InvalidParameter);
    EXPECT_EQ(test::thrown_kind([] { parse_background("mauve"); }), ErrorKind::InvalidParameter);
}

SceneSpec tiny_spec() {
    SceneSpec s;
    s.gaussians = 6;
    s.train_cameras = 3;
    s.timesteps = 2;
    s.val_cameras = 1;
    s.val_timesteps = 1;
    s.test_cameras = 1;
    s.test_timesteps = 2;
    s.width = 24;
    s.height = 20;
    return s;
}

TEST(Procedural, TrajectoriesStayInBounds) {
    SceneSpec s = tiny_spec();
    s.gaussians = 200;
    const ProceduralScene scene = sample_scene(s);
    for (const auto& m : scene.motion)
        for (double t = 0; t <= 1.0; t += 0.01) EXPECT_LE(m.position(t).cwiseAbs().maxCoeff(), 0.8 * s.bounds + 1e-12);
}

TEST(Procedural, MotionFormula) {
    MotionProgram m;
    m.base = {0.1, 0, 0};
    m.velocity = {0.2, 0, 0};
    m.amplitude = {0, 0.3, 0};
    m.frequency = {1, 1, 1};
    m.phase = {0, 0, 0};
    const Vec3<double> p = m.position(0.25);
    EXPECT_NEAR(p.x(), 0.15, 1e-15);
    EXPECT_NEAR(p.y(), 0.3, 1e-15);
}

TEST(Procedural, StaticSingleGaussianRendersSameAtAllTimes) {
    SceneSpec s = tiny_spec();
    s.gaussians = 1;
    s.static_fraction = 1.0;
    s.train_cameras = 1;
    s.timesteps = 3;
    const GeneratedScene gen = generate_scene(s, test::scratch_dir());
    ASSERT_EQ(gen.dataset.train.size(), 3u);
    const auto a = read_file_bytes(gen.dataset.train[0].image_path);
    for (const auto& f : gen.dataset.train) EXPECT_EQ(read_file_bytes(f.image_path), a);
    EXPECT_TRUE(std::filesystem::exists(gen.dataset.root / "manifest.json"));
}

TEST(Procedural, RerunsAreByteIdentical) {
    const auto dir = test::scratch_dir();
    const GeneratedScene a = generate_scene(tiny_spec(), dir / "a");
    const GeneratedScene b = generate_scene(tiny_spec(), dir / "b");
    for (const char* name : {"transforms_train.json", "transforms_val.json", "transforms_test.json", "manifest.json"})
        EXPECT_EQ(read_file_bytes(dir / "a" / name), read_file_bytes(dir / "b" / name)) << name;
    for (std::size_t i = 0; i < a.dataset.train.size(); ++i)
        EXPECT_EQ(read_file_bytes(a.dataset.train[i].image_path), read_file_bytes(b.dataset.train[i].image_path));
}

TEST(Procedural, LoaderRecoversGeneratedCameras) {
    const GeneratedScene gen = generate_scene(tiny_spec(), test::scratch_dir());
    const DynamicDataset ds = load_dnerf(gen.dataset.root, {gen.dataset.background == Vec3<double>::Ones()});
    for (const char* split : {"train", "val", "test"}) {
        const auto& want = gen.dataset.split(split);
        const auto& got = ds.split(split);
        ASSERT_EQ(want.size(), got.size()) << split;
        for (std::size_t i = 0; i < want.size(); ++i) {
            EXPECT_NEAR(got[i].time, want[i].time, 1e-9);
            EXPECT_NEAR(got[i].camera.fx, want[i].camera.fx, 1e-9);
            EXPECT_NEAR((got[i].camera.world_to_camera - want[i].camera.world_to_camera).cwiseAbs().maxCoeff(), 0, 1e-9);
        }
    }
}

TEST(Procedural, InvalidSpecsRejected) {
    SceneSpec s;
    s.max_velocity = 0.5;
    s.max_amplitude = 0.5;
    EXPECT_EQ(test::thrown_kind([&] { s.validate(); }), ErrorKind::InvalidParameter);
    s = SceneSpec{};
    s.gaussians = 0;
    EXPECT_EQ(test::thrown_kind([&] { s.validate(); }), ErrorKind::InvalidParameter);
}

}  // namespace
}  // namespace dmsr
