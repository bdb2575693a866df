// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/camera.hpp"
#include "dmsr/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dmsr {

struct ViewReport {
    std::string name;
    double time = 0;
    double psnr = 0;  // +inf for identical images, written as "inf"
    double ssim = 0;
    double render_ms = 0;

    bool operator==(const ViewReport&) const = default;
};

struct EvalReport {
    std::string split;
    std::vector<ViewReport> views;
    double mean_psnr = 0;
    double median_psnr = 0;
    double mean_ssim = 0;
    double median_ssim = 0;
    double mean_render_ms = 0;
    double fps = 0;
    std::uint64_t gaussians = 0;
    std::uint64_t active = 0;
    std::uint64_t frozen = 0;
    std::uint64_t checkpoint_bytes = 0;

    // Fills the aggregates from `views`.
    void finalize();

    // Summary lines as "# key,value" followed by a per-view table.
    std::string to_csv() const;
    std::string to_json() const;
    static EvalReport from_csv(const std::string& text);
    static EvalReport from_json(const std::string& text);

    bool operator==(const EvalReport&) const = default;
};

EvalReport make_eval_report(const SceneModel& model, const DynamicDataset& dataset, const std::string& split,
                            const RenderOptions<float>& options, std::uint64_t checkpoint_bytes = 0);

struct CameraPose {
    Camera<float> camera;
    float time = 0;
};

// Camera path file: transforms-style JSON with camera_angle_x, width,
// height and frames[{transform_matrix, time?}].
std::vector<CameraPose> read_camera_path(const std::filesystem::path& path);

struct BenchReport {
    int repetitions = 0;
    int frames = 0;
    int threads = 0;
    int width = 0;
    int height = 0;
    double mean_ms = 0;
    double median_ms = 0;
    double p95_ms = 0;
    double fps = 0;

    std::string to_json() const;
};

// Renders the path once as warmup, then `repetitions` times, timing every
// frame. Throws InvalidParameter "repetitions >= 1" when repetitions < 1.
BenchReport bench_render(const SceneModel& model, const std::vector<CameraPose>& path, int repetitions,
                         const RenderOptions<float>& options);

double median(std::vector<double> values);
// Nearest-rank percentile, p in (0, 100].
double percentile(std::vector<double> values, double p);

}  // namespace dmsr
