// SPDX-License-Identifier: Apache-2.0
#include "dmsr/ablation.hpp"
#include "dmsr/error.hpp"
#include "dmsr/gradcheck.hpp"
#include "dmsr/parallel.hpp"
#include "dmsr/report.hpp"
#include "dmsr/scene.hpp"
#include "dmsr/trainer.hpp"

#include "CLI11.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace {

using namespace dmsr;
namespace fs = std::filesystem;

struct CommonFlags {
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
    std::string background;
};

void add_common(CLI::App* app, CommonFlags& flags) {
    app->add_option("--seed", flags.seed, "Override the random seed")->each([&](const std::string&) { flags.seed_set = true; });
    app->add_option("--threads", flags.threads, "Worker threads (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    app->add_option("--background", flags.background, "white, black, green or r,g,b");
}

void apply_threads(const CommonFlags& flags) {
    if (flags.threads >= 0) set_thread_count(flags.threads);
}

RenderOptions<float> render_options(const CommonFlags& flags, const Vec3<double>& fallback_background) {
    RenderOptions<float> options;
    options.background = (flags.background.empty() ? fallback_background : parse_background(flags.background)).cast<float>();
    return options;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
}

TrainConfig train_config_from(const std::string& path, const CommonFlags& flags, const std::string& output) {
    TrainConfig config = load_train_config(path);
    if (flags.seed_set) config.seed = flags.seed;
    if (flags.threads >= 0) config.threads = flags.threads;
    if (!flags.background.empty()) config.background = flags.background;
    if (!output.empty()) config.output_dir = output;
    config.validate();
    if (config.dataset.empty()) fail(ErrorKind::Config, "train config: 'dataset' is required");
    return config;
}

int cmd_train(const std::string& config_path, const CommonFlags& flags, const std::string& output) {
    const TrainConfig config = train_config_from(config_path, flags, output);
    Trainer trainer(config, load_dnerf(config.dataset));
    const TrainSummary s = trainer.run();
    std::cout << "iterations " << s.iterations << "\nfinal_psnr " << s.final_psnr << "\nfinal_ssim " << s.final_ssim
              << "\ntrain_ms " << s.train_ms << "\nnetwork_evaluations " << s.network_evaluations << "\ngaussians "
              << s.gaussians << "\nfrozen " << s.frozen << '\n';
    if (s.ms_to_target) std::cout << "ms_to_target " << *s.ms_to_target << '\n';
    if (!s.checkpoint.empty()) std::cout << "checkpoint " << s.checkpoint.string() << '\n';
    return 0;
}

int cmd_gen_scene(const std::string& spec_path, const CommonFlags& flags, const std::string& output) {
    SceneSpec spec;
    ConfigSchema schema;
    spec.bind(schema, "scene.");
    if (!spec_path.empty()) schema.apply(read_key_value_file(spec_path), spec_path);
    schema.apply_environment();
    if (flags.seed_set) spec.seed = flags.seed;
    if (!flags.background.empty()) spec.background = flags.background;
    apply_threads(flags);
    const GeneratedScene g = generate_scene(spec, output);
    std::cout << "wrote " << g.dataset.train.size() << " train, " << g.dataset.val.size() << " val, "
              << g.dataset.test.size() << " test frames to " << output << '\n';
    return 0;
}

struct RenderFlags {
    std::string checkpoint, camera_path, time, output;
    int frames = 30;
};

int cmd_render(const RenderFlags& rf, const CommonFlags& flags) {
    apply_threads(flags);
    const SceneModel model = load_model(rf.checkpoint);
    std::vector<CameraPose> poses = read_camera_path(rf.camera_path);
    if (rf.time == "sweep") {
        // A single pose is repeated so the sweep still covers [0, 1].
        if (poses.size() == 1) poses.assign(static_cast<std::size_t>(std::max(rf.frames, 2)), poses.front());
        for (std::size_t i = 0; i < poses.size(); ++i)
            poses[i].time = poses.size() > 1 ? static_cast<float>(static_cast<double>(i) / static_cast<double>(poses.size() - 1)) : 0.f;
    } else if (!rf.time.empty()) {
        double t = 0;
        const auto [ptr, ec] = std::from_chars(rf.time.data(), rf.time.data() + rf.time.size(), t);
        if (ec != std::errc{} || ptr != rf.time.data() + rf.time.size() || !(t >= 0 && t <= 1)) {
            fail(ErrorKind::InvalidParameter, "--t must be a time in [0, 1] or 'sweep', got '" + rf.time + "'");
        }
        for (auto& p : poses) p.time = static_cast<float>(t);
    }
    const RenderOptions<float> options = render_options(flags, Vec3<double>::Ones());
    fs::create_directories(rf.output);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", i);
        const ViewForward<float> view = render_model(model, poses[i].camera, poses[i].time, options);
        write_png(fs::path(rf.output) / name, view.frame.color);
    }
    std::cout << "rendered " << poses.size() << " frames to " << rf.output << '\n';
    return 0;
}

struct EvalFlags {
    std::string checkpoint, dataset, split = "test", csv, json;
};

int cmd_eval(const EvalFlags& ef, const CommonFlags& flags) {
    apply_threads(flags);
    const SceneModel model = load_model(ef.checkpoint);
    const DynamicDataset dataset = load_dnerf(ef.dataset);
    const EvalReport report = make_eval_report(model, dataset, ef.split, render_options(flags, dataset.background),
                                               fs::file_size(ef.checkpoint));
    if (!ef.csv.empty()) write_text(ef.csv, report.to_csv());
    if (!ef.json.empty()) write_text(ef.json, report.to_json());
    std::cout << "split " << report.split << "\nviews " << report.views.size() << "\nmean_psnr " << report.mean_psnr
              << "\nmedian_psnr " << report.median_psnr << "\nmean_ssim " << report.mean_ssim << "\nmedian_ssim "
              << report.median_ssim << "\nfps " << report.fps << "\ngaussians " << report.gaussians << "\nfrozen "
              << report.frozen << "\ncheckpoint_bytes " << report.checkpoint_bytes << '\n';
    return 0;
}

struct BenchFlags {
    std::string checkpoint, camera_path, dataset, split = "test", json;
    int repetitions = 10;
};

int cmd_bench(const BenchFlags& bf, const CommonFlags& flags) {
    apply_threads(flags);
    if (bf.camera_path.empty() == bf.dataset.empty()) {
        fail(ErrorKind::InvalidParameter, "bench: give exactly one of --camera-path or --dataset");
    }
    const SceneModel model = load_model(bf.checkpoint);
    std::vector<CameraPose> poses;
    Vec3<double> background = Vec3<double>::Ones();
    if (!bf.camera_path.empty()) {
        poses = read_camera_path(bf.camera_path);
    } else {
        const DynamicDataset dataset = load_dnerf(bf.dataset);
        background = dataset.background;
        for (const auto& f : dataset.split(bf.split)) poses.push_back({f.camera.cast<float>(), static_cast<float>(f.time)});
    }
    const BenchReport report = bench_render(model, poses, bf.repetitions, render_options(flags, background));
    if (!bf.json.empty()) write_text(bf.json, report.to_json());
    std::cout << report.to_json() << '\n';
    return 0;
}

struct GradcheckFlags {
    GradcheckOptions options;
    bool verbose = false;
};

int cmd_gradcheck(const GradcheckFlags& gf, const CommonFlags& flags) {
    apply_threads(flags);
    GradcheckOptions options = gf.options;
    if (flags.seed_set) options.first_seed = flags.seed;
    const GradcheckReport report = run_gradcheck(options);
    std::map<std::string, std::pair<double, std::size_t>> per_suite;
    for (const auto& r : report.results) {
        auto& [worst, count] = per_suite[r.suite];
        worst = std::max(worst, r.rel_error);
        count += r.components;
        if (gf.verbose) {
            std::printf("%-15s %-28s seed %-4llu n %-5zu |g| %.3e  rel %.3e\n", r.suite.c_str(), r.tensor.c_str(),
                        static_cast<unsigned long long>(r.seed), r.components, r.analytic_norm, r.rel_error);
        }
    }
    for (const auto& [suite, v] : per_suite) {
        std::printf("%-15s components %-7zu worst rel err %.3e  %s\n", suite.c_str(), v.second, v.first,
                    v.first < options.tolerance ? "ok" : "FAIL");
    }
    std::printf("seeds %d  tolerance %.1e  worst %.3e  %.2f s  %s\n", options.seeds, options.tolerance, report.worst(),
                report.seconds, report.passed() ? "PASS" : "FAIL");
    return report.passed() ? 0 : 2;
}

int cmd_ablate(const std::string& config_path, const CommonFlags& flags, const std::string& output,
               const std::string& csv) {
    const TrainConfig config = train_config_from(config_path, flags, output);
    const AblationTable table = run_ablation(config, load_dnerf(config.dataset));
    std::cout << table.to_text();
    std::printf("full minus best ablation: %+.3f dB\n", table.full_margin());
    if (!csv.empty()) write_text(csv, table.to_csv());
    return 0;
}

int cmd_defaults() {
    TrainConfig train;
    SceneSpec scene;
    ConfigSchema schema;
    train.bind(schema);
    scene.bind(schema, "scene.");
    std::cout << "# train keys, then gen-scene keys; DMSR_<KEY> overrides any of them\n";
    schema.print(std::cout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic Gaussian splatting with motion-saliency gating"};
    app.require_subcommand(1);
    CommonFlags flags;
    std::string config_path, output, csv;

    auto* train = app.add_subcommand("train", "Train on a D-NeRF layout dataset");
    train->add_option("config", config_path, "key = value config file")->required();
    train->add_option("--out", output, "Run directory (overrides output_dir)");
    add_common(train, flags);

    auto* gen = app.add_subcommand("gen-scene", "Generate the procedural dynamic scene");
    gen->add_option("spec", config_path, "key = value scene spec (scene.* keys)");
    gen->add_option("--out", output, "Output directory")->required();
    add_common(gen, flags);

    RenderFlags rf;
    auto* render = app.add_subcommand("render", "Render a checkpoint along a camera path");
    render->add_option("checkpoint", rf.checkpoint)->required();
    render->add_option("--camera-path", rf.camera_path, "transforms-style JSON")->required();
    render->add_option("--t", rf.time, "Time in [0, 1] for every frame, or 'sweep'");
    render->add_option("--frames", rf.frames, "Frame count when sweeping a single pose")->check(CLI::PositiveNumber);
    render->add_option("--out", rf.output, "Output directory for PNGs")->required();
    add_common(render, flags);

    EvalFlags ef;
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a dataset split");
    eval->add_option("checkpoint", ef.checkpoint)->required();
    eval->add_option("dataset", ef.dataset)->required();
    eval->add_option("--split", ef.split, "train, val or test");
    eval->add_option("--csv", ef.csv, "Write the report as CSV");
    eval->add_option("--json", ef.json, "Write the report as JSON");
    add_common(eval, flags);

    BenchFlags bf;
    auto* bench = app.add_subcommand("bench", "Render throughput of a checkpoint");
    bench->add_option("checkpoint", bf.checkpoint)->required();
    bench->add_option("--repetitions", bf.repetitions, "Timed passes over the path");
    bench->add_option("--camera-path", bf.camera_path, "transforms-style JSON");
    bench->add_option("--dataset", bf.dataset, "Use the cameras of a dataset split");
    bench->add_option("--split", bf.split);
    bench->add_option("--json", bf.json, "Write the report as JSON");
    add_common(bench, flags);

    GradcheckFlags gf;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of every analytic gradient");
    gradcheck->add_option("--seeds", gf.options.seeds)->check(CLI::PositiveNumber);
    gradcheck->add_option("--suite", gf.options.suites, "Restrict to these suites");
    gradcheck->add_option("--tolerance", gf.options.tolerance);
    gradcheck->add_option("--step", gf.options.step);
    gradcheck->add_flag("--verbose", gf.verbose, "One line per checked tensor");
    add_common(gradcheck, flags);

    auto* ablate = app.add_subcommand("ablate", "Train full, no-saliency and no-manifold variants");
    ablate->add_option("config", config_path)->required();
    ablate->add_option("--out", output, "Parent directory for the three runs");
    ablate->add_option("--csv", csv, "Write the comparison as CSV");
    add_common(ablate, flags);

    auto* defaults = app.add_subcommand("defaults", "Print every config key with its default");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        if (*train) return cmd_train(config_path, flags, output);
        if (*gen) return cmd_gen_scene(config_path, flags, output);
        if (*render) return cmd_render(rf, flags);
        if (*eval) return cmd_eval(ef, flags);
        if (*bench) return cmd_bench(bf, flags);
        if (*gradcheck) return cmd_gradcheck(gf, flags);
        if (*ablate) return cmd_ablate(config_path, flags, output, csv);
        if (*defaults) return cmd_defaults();
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return e.is_validation() ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
