// SPDX-License-Identifier: Apache-2.0
#include "dmsr/report.hpp"

#include "test_util.hpp"

#include <fstream>
#include <limits>

namespace dmsr {
namespace {

EvalReport sample_report() {
    EvalReport r;
    r.split = "test";
    r.views = {{"./test/r_000", 0.1, 31.25, 0.95, 4.0},
               {"./test/r_001", 0.5, std::numeric_limits<double>::infinity(), 1.0, 6.0},
               {"./test/r_002", 0.9, 0.1 + 0.2, 1.0 / 3.0, 2.0}};
    r.gaussians = 100;
    r.frozen = 30;
    r.active = 70;
    r.checkpoint_bytes = 12345;
    r.finalize();
    return r;
}

TEST(Stats, MedianAndPercentile) {
    EXPECT_EQ(median({3, 1, 2}), 2);
    EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
    EXPECT_EQ(median({}), 0);
    std::vector<double> v;
    for (int i = 1; i <= 20; ++i) v.push_back(i);
    EXPECT_EQ(percentile(v, 95), 19);
    EXPECT_EQ(percentile(v, 100), 20);
    EXPECT_EQ(percentile({7}, 50), 7);
}

TEST(EvalReport, Aggregates) {
    const EvalReport r = sample_report();
    EXPECT_TRUE(std::isinf(r.mean_psnr));
    EXPECT_EQ(r.median_psnr, 31.25);
    EXPECT_DOUBLE_EQ(r.mean_render_ms, 4.0);
    EXPECT_DOUBLE_EQ(r.fps, 250.0);
    EXPECT_DOUBLE_EQ(r.median_ssim, 0.95);
}

TEST(EvalReport, CsvRoundTrip) {
    const EvalReport r = sample_report();
    const std::string csv = r.to_csv();
    EXPECT_NE(csv.find("inf"), std::string::npos);
    EXPECT_EQ(EvalReport::from_csv(csv), r);
}

TEST(EvalReport, JsonRoundTrip) {
    const EvalReport r = sample_report();
    EXPECT_EQ(EvalReport::from_json(r.to_json()), r);
}

TEST(EvalReport, MalformedInputIsParseError) {
    EXPECT_EQ(test::thrown_kind([] { EvalReport::from_csv("# bogus,1\n"); }), ErrorKind::Parse);
    EXPECT_EQ(test::thrown_kind([] { EvalReport::from_csv("name,time,psnr,ssim,render_ms\na,b,c,d,e\n"); }),
              ErrorKind::Parse);
    EXPECT_EQ(test::thrown_kind([] { EvalReport::from_json("{}"); }), ErrorKind::Parse);
}

SceneModel tiny_model() {
    SceneModel m;
    Rng rng(1);
    for (int i = 0; i < 10; ++i)
        m.cloud.push_back(test::uniform3(rng, -0.5, 0.5).cast<float>(), test::random_quat(rng).cast<float>(),
                          Vec3<float>::Constant(-2.5f), 1.f, ShBlock<float>::Constant(0.2f));
    return m;
}

std::vector<CameraPose> one_pose() {
    return {{look_at_camera<float>({0, 0, 3}, Vec3<float>::Zero(), Vec3<float>::UnitY(), 0.8f, 16, 12), 0.f}};
}

TEST(Bench, ZeroRepetitionsIsInvalid) {
    try {
        bench_render(tiny_model(), one_pose(), 0, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidParameter);
        EXPECT_NE(std::string(e.what()).find("repetitions >= 1"), std::string::npos);
    }
}

TEST(Bench, FpsIsInverseMeanFrameTime) {
    const BenchReport b = bench_render(tiny_model(), one_pose(), 3, {});
    EXPECT_EQ(b.frames, 1);
    EXPECT_EQ(b.repetitions, 3);
    EXPECT_EQ(b.width, 16);
    EXPECT_EQ(b.height, 12);
    EXPECT_GT(b.mean_ms, 0);
    EXPECT_DOUBLE_EQ(b.fps, 1000.0 / b.mean_ms);
    EXPECT_LE(b.median_ms, b.p95_ms);
}

TEST(CameraPath, ReadsFramesAndRejectsEmpty) {
    const auto dir = test::scratch_dir();
    std::ofstream(dir / "path.json")
        << R"({"camera_angle_x": 0.7, "width": 20, "height": 10, "frames": [)"
        << R"({"transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,3],[0,0,0,1]], "time": 0.25}]})";
    const auto poses = read_camera_path(dir / "path.json");
    ASSERT_EQ(poses.size(), 1u);
    EXPECT_EQ(poses[0].time, 0.25f);
    EXPECT_EQ(poses[0].camera.width, 20);
    std::ofstream(dir / "empty.json") << R"({"camera_angle_x": 0.7, "width": 20, "height": 10, "frames": []})";
    EXPECT_EQ(test::thrown_kind([&] { read_camera_path(dir / "empty.json"); }), ErrorKind::Parse);
}

}  // namespace
}  // namespace dmsr
