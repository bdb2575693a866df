// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/camera.hpp"
#include "dmsr/config.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dmsr {

// "white", "black", "green" or "r,g,b" with linear components in [0, 1].
Vec3<double> parse_background(const std::string& text);

struct DatasetFrame {
    Camera<double> camera;
    double time = 0;
    std::string file_path;  // as written in the transforms file
    std::filesystem::path image_path;
};

struct DynamicDataset {
    std::filesystem::path root;
    std::vector<DatasetFrame> train, val, test;
    Vec3<double> bounds_min = Vec3<double>::Constant(-1.5);
    Vec3<double> bounds_max = Vec3<double>::Constant(1.5);
    Vec3<double> background = Vec3<double>::Ones();

    // "train", "val" or "test"; throws InvalidParameter otherwise.
    const std::vector<DatasetFrame>& split(std::string_view name) const;
    // Largest half-extent of the bounds.
    double scene_extent() const;
};

struct LoadOptions {
    bool white_background = true;
    double near_plane = 0.01;
    double far_plane = 100.0;
};

// Reads transforms_{train,val,test}.json under root. The train split is
// required; val and test are optional. Image paths without an extension
// get ".png". An optional top-level "scene_bounds": [[x,y,z],[x,y,z]]
// overrides the default bounds.
DynamicDataset load_dnerf(const std::filesystem::path& root, const LoadOptions& options = {});

// Decodes one split's images to linear RGB composited over the dataset
// background.
std::vector<Image<float>> load_split_images(const DynamicDataset& dataset, const std::vector<DatasetFrame>& frames);

struct SceneSpec {
    int gaussians = 25;
    int train_cameras = 20;
    int timesteps = 10;
    int val_cameras = 2;
    int val_timesteps = 3;
    int test_cameras = 4;
    int test_timesteps = 5;
    int width = 128;
    int height = 128;
    double fov_x_degrees = 40.0;
    double orbit_radius = 4.0;
    double bounds = 1.0;  // scene cube is [-bounds, bounds]^3
    double static_fraction = 0.4;
    double max_velocity = 0.2;
    double max_amplitude = 0.25;
    double min_scale = 0.06;
    double max_scale = 0.16;
    double min_opacity = 0.75;
    double max_opacity = 0.95;
    std::string background = "white";
    std::uint64_t seed = 7;

    void bind(ConfigSchema& schema, const std::string& prefix = "scene.");
    // Throws InvalidParameter, including when the motion budget cannot keep
    // every Gaussian inside the bounds.
    void validate() const;
};

// Position trajectory X(t) = base + velocity t + amplitude * sin(2 pi frequency t + phase).
struct MotionProgram {
    Vec3<double> base = Vec3<double>::Zero();
    Vec3<double> velocity = Vec3<double>::Zero();
    Vec3<double> amplitude = Vec3<double>::Zero();
    Vec3<double> frequency = Vec3<double>::Zero();
    Vec3<double> phase = Vec3<double>::Zero();

    Vec3<double> position(double t) const;
};

struct ProceduralScene {
    SceneSpec spec;
    GaussianCloud<double> cloud;  // canonical attributes; positions = X(0)
    std::vector<MotionProgram> motion;

    GaussianCloud<double> at(double t) const;
};

struct GeneratedScene {
    ProceduralScene scene;
    DynamicDataset dataset;
};

// Samples the scene from spec.seed, renders every frame with oracle
// thresholds and writes a D-NeRF layout plus manifest.json to output_dir.
GeneratedScene generate_scene(const SceneSpec& spec, const std::filesystem::path& output_dir);

// Scene sampling alone, without rendering or file output.
ProceduralScene sample_scene(const SceneSpec& spec);

}  // namespace dmsr
