// SPDX-License-Identifier: Apache-2.0
#include "dmsr/trainer.hpp"

#include "test_util.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace dmsr {
namespace {

GaussianCloud<float> cloud_with_opacities(const std::vector<double>& opacities) {
    Rng rng(1);
    GaussianCloud<float> cloud;
    for (const double o : opacities)
        cloud.push_back(test::uniform3(rng, -1, 1).cast<float>(), test::random_quat(rng).cast<float>(),
                        test::uniform3(rng, -3, -1).cast<float>(), static_cast<float>(std::log(o / (1 - o))),
                        ShBlock<float>::Constant(static_cast<float>(rng.normal())));
    return cloud;
}

TEST(Prune, NothingBelowFloorIsIdentity) {
    auto cloud = cloud_with_opacities({0.5, 0.2, 0.9});
    const auto before = cloud;
    const PruneResult r = prune<float>(cloud, nullptr, {}, nullptr, 0.01);
    EXPECT_EQ(r.removed, 0u);
    EXPECT_EQ(r.remap, (std::vector<std::int64_t>{0, 1, 2}));
    EXPECT_EQ(cloud.positions, before.positions);
}

TEST(Prune, RemovesLowOpacityAndCompactsState) {
    auto cloud = cloud_with_opacities({0.9, 0.001, 0.8});
    const auto before = cloud;
    OptimizerState<float> opt;
    opt.slots.push_back({"opacity", {1, 2, 3}, {4, 5, 6}});
    opt.slots.push_back({"weights", {7}, {8}});
    SaliencyState<float> sal(SaliencyConfig{}, 3);
    sal.ema = {0.1f, 0.2f, 0.3f};
    sal.frozen = {0, 1, 1};

    const PruneResult r = prune<float>(cloud, &opt, {1, 0}, &sal, 0.01);
    EXPECT_EQ(r.removed, 1u);
    EXPECT_EQ(r.remap, (std::vector<std::int64_t>{0, -1, 1}));
    ASSERT_EQ(cloud.size(), 2u);
    for (const auto [to, from] : {std::pair{0, 0}, std::pair{1, 2}}) {
        EXPECT_EQ(cloud.positions[to], before.positions[from]);
        EXPECT_EQ(cloud.rotations[to], before.rotations[from]);
        EXPECT_EQ(cloud.log_scales[to], before.log_scales[from]);
        EXPECT_EQ(cloud.opacity_logits[to], before.opacity_logits[from]);
        EXPECT_EQ(cloud.sh_coeffs[to], before.sh_coeffs[from]);
    }
    EXPECT_EQ(opt.slots[0].m, (std::vector<float>{1, 3}));
    EXPECT_EQ(opt.slots[0].v, (std::vector<float>{4, 6}));
    EXPECT_EQ(opt.slots[1].m, (std::vector<float>{7}));
    EXPECT_EQ(sal.ema, (std::vector<float>{0.1f, 0.3f}));
    EXPECT_EQ(sal.frozen, (std::vector<std::uint8_t>{0, 1}));
}

TEST(Prune, FloorOutsideUnitIntervalThrows) {
    auto cloud = cloud_with_opacities({0.5});
    EXPECT_EQ(test::thrown_kind([&] { prune<float>(cloud, nullptr, {}, nullptr, 0.0); }), ErrorKind::InvalidParameter);
    EXPECT_EQ(test::thrown_kind([&] { prune<float>(cloud, nullptr, {}, nullptr, 1.0); }), ErrorKind::InvalidParameter);
}

TEST(Config, KeyValueParsing) {
    const KeyValues kv = parse_key_values("# comment\niterations = 12\n\nlr.sh=0.5  # inline\n");
    EXPECT_EQ(kv.at("iterations"), "12");
    EXPECT_EQ(kv.at("lr.sh"), "0.5");
    EXPECT_EQ(test::thrown_kind([] { parse_key_values("a = 1\na = 2\n"); }), ErrorKind::Parse);
    EXPECT_EQ(test::thrown_kind([] { parse_key_values("no equals sign\n"); }), ErrorKind::Parse);
}

TEST(Config, SchemaRejectsUnknownKeysAndBadValues) {
    TrainConfig c;
    ConfigSchema s;
    c.bind(s);
    EXPECT_EQ(test::thrown_kind([&] { s.set("no.such.key", "1"); }), ErrorKind::Config);
    EXPECT_EQ(test::thrown_kind([&] { s.set("iterations", "many"); }), ErrorKind::Config);
    s.set("saliency.ema_decay", "0.75");
    EXPECT_EQ(c.saliency.ema_decay, 0.75);
    EXPECT_EQ(ConfigSchema::env_name("saliency.ema_decay"), "DMSR_SALIENCY_EMA_DECAY");
}

TEST(Config, EnvironmentOverridesFile) {
    const auto path = test::scratch_dir() / "run.cfg";
    std::ofstream(path) << "iterations = 5\nstatic_warmup = 3\n";
    ::setenv("DMSR_STATIC_WARMUP", "7", 1);
    const TrainConfig c = load_train_config(path);
    ::unsetenv("DMSR_STATIC_WARMUP");
    EXPECT_EQ(c.iterations, 5);
    EXPECT_EQ(c.static_warmup, 7);
}

TEST(Config, ValidationFailuresAreConfigErrors) {
    TrainConfig c;
    c.iterations = -1;
    EXPECT_EQ(test::thrown_kind([&] { c.validate(); }), ErrorKind::Config);
    c = TrainConfig{};
    c.eval_split = "holdout";
    EXPECT_EQ(test::thrown_kind([&] { c.validate(); }), ErrorKind::Config);
}

struct TinyRun : ::testing::Test {
    void SetUp() override {
        root = test::scratch_dir();
        SceneSpec s;
        s.gaussians = 5;
        s.train_cameras = 3;
        s.timesteps = 3;
        s.val_cameras = 0;
        s.test_cameras = 1;
        s.test_timesteps = 2;
        s.width = 32;
        s.height = 24;
        dataset = generate_scene(s, root / "scene").dataset;
        config.output_dir = (root / "run").string();
        config.iterations = 12;
        config.static_warmup = 4;
        config.saliency.warmup_iters = 2;
        config.saliency.refresh_interval = 2;
        config.init_count = 40;
        config.eval_interval = 6;
        config.deformation.base_resolution = 6;
        config.deformation.base_time_resolution = 4;
        config.deformation.feature_dim = 4;
        config.deformation.trunk_width = 16;
        config.deformation.head_width = 16;
        config.deformation.enhance_hidden = 16;
    }
    std::filesystem::path root;
    DynamicDataset dataset;
    TrainConfig config;
};

TEST_F(TinyRun, ZeroIterationsWritesOnlyCheckpoint) {
    config.iterations = 0;
    Trainer t(config, dataset);
    const TrainSummary s = t.run();
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(root / "run")) files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());
    EXPECT_EQ(files, (std::vector<std::string>{"checkpoint.dmsr", "checkpoint.dmsr.json"}));
    EXPECT_EQ(s.gaussians, 40u);
    EXPECT_EQ(load_model(s.checkpoint).cloud.size(), 40u);
}

TEST_F(TinyRun, ShortRunWritesOutputs) {
    Trainer t(config, dataset);
    const TrainSummary s = t.run();
    EXPECT_EQ(s.iterations, 12);
    EXPECT_TRUE(std::isfinite(s.final_psnr));
    EXPECT_GT(s.network_evaluations, 0u);
    for (const char* name : {"metrics.csv", "timing.csv", "eval.csv", "saliency.csv", "config.txt", "summary.json",
                             "checkpoint.dmsr", "checkpoint.dmsr.json"})
        EXPECT_TRUE(std::filesystem::exists(root / "run" / name)) << name;

    std::ifstream in(root / "run" / "metrics.csv");
    std::string header, line;
    std::getline(in, header);
    EXPECT_EQ(header, "iteration,loss,psnr,gaussians,active_count,network_evals");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 12);

    const SceneModel m = load_model(s.checkpoint);
    EXPECT_EQ(m.iteration, 12);
    EXPECT_EQ(m.static_warmup, 4);
    EXPECT_TRUE(m.deformation_active());
    EXPECT_EQ(m.cloud.size(), t.cloud().size());
}

TEST_F(TinyRun, NoNetworkBeforeStaticWarmupEnds) {
    config.output_dir.clear();
    Trainer t(config, dataset);
    for (int i = 0; i < 4; ++i) EXPECT_EQ(t.step().network_evaluations, 0u);
    EXPECT_GT(t.step().network_evaluations, 0u);
}

}  // namespace
}  // namespace dmsr
