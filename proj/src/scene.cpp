// SPDX-License-Identifier: Apache-2.0
#include "dmsr/scene.hpp"

#include "dmsr/error.hpp"
#include "dmsr/parallel.hpp"
#include "dmsr/pipeline.hpp"
#include "dmsr/random.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace dmsr {

using nlohmann::json;

namespace {

constexpr const char* kSplitNames[3] = {"train", "val", "test"};

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

Mat4<double> matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() < 3) fail(ErrorKind::Parse, where + ": transform_matrix must be a 4x4 array");
    Mat4<double> m = Mat4<double>::Identity();
    for (std::size_t r = 0; r < j.size() && r < 4; ++r) {
        if (!j[r].is_array() || j[r].size() != 4) fail(ErrorKind::Parse, where + ": transform_matrix must be a 4x4 array");
        for (std::size_t c = 0; c < 4; ++c) {
            if (!j[r][c].is_number()) fail(ErrorKind::Parse, where + ": non-numeric transform_matrix entry");
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

json matrix_to_json(const Mat4<double>& m) {
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2), m(r, 3)});
    return rows;
}

json vec_to_json(const Vec3<double>& v) { return {v.x(), v.y(), v.z()}; }

std::filesystem::path resolve_image(const std::filesystem::path& root, const std::string& file_path) {
    std::filesystem::path p = root / file_path;
    if (!p.has_extension()) p += ".png";
    return p.lexically_normal();
}

}  // namespace

Vec3<double> parse_background(const std::string& text) {
    if (text == "white") return Vec3<double>::Ones();
    if (text == "black") return Vec3<double>::Zero();
    if (text == "green") return {0.0, 1.0, 0.0};
    const std::string message = "background must be white, black, green or r,g,b in [0, 1]: '" + text + "'";
    std::stringstream ss(text);
    std::vector<double> parts;
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            fail(ErrorKind::InvalidParameter, message);
        }
        if (used != item.size() || !(v >= 0.0 && v <= 1.0)) fail(ErrorKind::InvalidParameter, message);
        parts.push_back(v);
    }
    if (parts.size() != 3) fail(ErrorKind::InvalidParameter, message);
    return {parts[0], parts[1], parts[2]};
}

const std::vector<DatasetFrame>& DynamicDataset::split(std::string_view name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    fail(ErrorKind::InvalidParameter, "unknown split '" + std::string(name) + "'");
}

double DynamicDataset::scene_extent() const { return (0.5 * (bounds_max - bounds_min)).maxCoeff(); }

DynamicDataset load_dnerf(const std::filesystem::path& root, const LoadOptions& options) {
    DynamicDataset ds;
    ds.root = root;
    ds.background = options.white_background ? Vec3<double>::Ones() : Vec3<double>::Zero();
    std::vector<std::string> missing;
    bool bounds_set = false;
    for (int s = 0; s < 3; ++s) {
        const std::string name = kSplitNames[s];
        const std::filesystem::path path = root / ("transforms_" + name + ".json");
        if (!std::filesystem::exists(path)) {
            if (s == 0) fail(ErrorKind::Io, "missing " + path.string());
            continue;
        }
        const json j = read_json(path);
        const std::string where = path.string();
        if (!j.is_object()) fail(ErrorKind::Parse, where + ": expected a JSON object");
        if (!j.contains("camera_angle_x") || !j["camera_angle_x"].is_number()) {
            fail(ErrorKind::Parse, where + ": missing numeric camera_angle_x");
        }
        const double fov_x = j["camera_angle_x"].get<double>();
        if (!(fov_x > 0.0 && fov_x < std::numbers::pi)) fail(ErrorKind::Parse, where + ": camera_angle_x out of range");
        if (!j.contains("frames") || !j["frames"].is_array()) fail(ErrorKind::Parse, where + ": missing frames array");
        if (j["frames"].empty()) fail(ErrorKind::Parse, where + ": empty split");
        if (j.contains("scene_bounds") && !bounds_set) {
            const json& b = j["scene_bounds"];
            try {
                for (int k = 0; k < 3; ++k) {
                    ds.bounds_min[k] = b.at(0).at(k).get<double>();
                    ds.bounds_max[k] = b.at(1).at(k).get<double>();
                }
            } catch (const json::exception& e) {
                fail(ErrorKind::Parse, where + ": malformed scene_bounds: " + e.what());
            }
            if (!((ds.bounds_max - ds.bounds_min).array() > 0.0).all()) fail(ErrorKind::Parse, where + ": empty scene_bounds");
            bounds_set = true;
        }

        auto& frames = s == 0 ? ds.train : (s == 1 ? ds.val : ds.test);
        const json& list = j["frames"];
        for (std::size_t f = 0; f < list.size(); ++f) {
            const json& fr = list[f];
            const std::string fwhere = where + ": frame " + std::to_string(f);
            if (!fr.is_object()) fail(ErrorKind::Parse, fwhere + " is not an object");
            if (!fr.contains("time")) fail(ErrorKind::Parse, fwhere + " has no 'time' field");
            if (!fr["time"].is_number()) fail(ErrorKind::Parse, fwhere + ": 'time' is not a number");
            if (!fr.contains("file_path") || !fr["file_path"].is_string()) fail(ErrorKind::Parse, fwhere + " has no file_path");
            if (!fr.contains("transform_matrix")) fail(ErrorKind::Parse, fwhere + " has no transform_matrix");
            DatasetFrame frame;
            frame.time = fr["time"].get<double>();
            if (!(frame.time >= 0.0 && frame.time <= 1.0)) fail(ErrorKind::Parse, fwhere + ": time outside [0, 1]");
            frame.file_path = fr["file_path"].get<std::string>();
            frame.image_path = resolve_image(root, frame.file_path);
            const Mat4<double> c2w = matrix_from_json(fr["transform_matrix"], fwhere);
            if (!std::filesystem::exists(frame.image_path)) {
                missing.push_back(frame.image_path.string());
                frames.push_back(std::move(frame));
                continue;
            }
            const auto [w, h] = png_size(frame.image_path);
            frame.camera = camera_from_opengl_c2w<double>(c2w, fov_x, w, h, frame.time, options.near_plane,
                                                          options.far_plane);
            frame.camera.validate();
            frames.push_back(std::move(frame));
        }
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " missing image(s):";
        for (const auto& m : missing) msg += "\n  " + m;
        fail(ErrorKind::Io, msg);
    }
    std::set<std::filesystem::path> seen;
    for (const auto* frames : {&ds.train, &ds.val, &ds.test}) {
        std::set<std::filesystem::path> mine;
        for (const auto& f : *frames) mine.insert(f.image_path);
        for (const auto& p : mine)
            if (!seen.insert(p).second) fail(ErrorKind::Parse, "image used by more than one split: " + p.string());
    }
    return ds;
}

std::vector<Image<float>> load_split_images(const DynamicDataset& dataset, const std::vector<DatasetFrame>& frames) {
    std::vector<Image<float>> images(frames.size());
    const Vec3<float> bg = dataset.background.cast<float>();
    parallel_for(frames.size(), [&](std::size_t i) {
        images[i] = read_png(frames[i].image_path, &bg);
        if (images[i].width != frames[i].camera.width || images[i].height != frames[i].camera.height) {
            fail(ErrorKind::Parse, "image size changed since load: " + frames[i].image_path.string());
        }
    });
    return images;
}

void SceneSpec::bind(ConfigSchema& s, const std::string& p) {
    s.add(p + "gaussians", gaussians, "ground-truth Gaussian count");
    s.add(p + "train_cameras", train_cameras);
    s.add(p + "timesteps", timesteps, "train timestamps, uniform over [0, 1]");
    s.add(p + "val_cameras", val_cameras);
    s.add(p + "val_timesteps", val_timesteps);
    s.add(p + "test_cameras", test_cameras);
    s.add(p + "test_timesteps", test_timesteps, "held-out timestamps at bin centers");
    s.add(p + "width", width);
    s.add(p + "height", height);
    s.add(p + "fov_x_degrees", fov_x_degrees);
    s.add(p + "orbit_radius", orbit_radius);
    s.add(p + "bounds", bounds, "half-extent of the scene cube");
    s.add(p + "static_fraction", static_fraction);
    s.add(p + "max_velocity", max_velocity);
    s.add(p + "max_amplitude", max_amplitude);
    s.add(p + "min_scale", min_scale);
    s.add(p + "max_scale", max_scale);
    s.add(p + "min_opacity", min_opacity);
    s.add(p + "max_opacity", max_opacity);
    s.add(p + "background", background, "white, black, green or r,g,b");
    s.add(p + "seed", seed);
}

void SceneSpec::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) fail(ErrorKind::InvalidParameter, "scene spec: " + msg);
    };
    require(gaussians >= 1, "gaussians must be >= 1");
    require(train_cameras >= 1 && timesteps >= 1, "train_cameras and timesteps must be >= 1");
    require(val_cameras >= 0 && val_timesteps >= 1 && test_cameras >= 0 && test_timesteps >= 1,
            "val/test counts must be non-negative with >= 1 timestep");
    require(width >= 1 && height >= 1, "image size must be positive");
    require(fov_x_degrees > 0.0 && fov_x_degrees < 180.0, "fov_x_degrees must be in (0, 180)");
    require(bounds > 0.0, "bounds must be > 0");
    require(orbit_radius > 2.0 * bounds, "orbit_radius must exceed twice the bounds");
    require(static_fraction >= 0.0 && static_fraction <= 1.0, "static_fraction must be in [0, 1]");
    require(max_velocity >= 0.0 && max_amplitude >= 0.0, "motion magnitudes must be >= 0");
    require(max_velocity + max_amplitude < 0.8 * bounds,
            "max_velocity + max_amplitude must stay below 0.8 * bounds to keep trajectories inside the scene");
    require(min_scale > 0.0 && max_scale >= min_scale && max_scale < bounds, "scales must satisfy 0 < min <= max < bounds");
    require(min_opacity > 0.0 && max_opacity >= min_opacity && max_opacity < 1.0, "opacities must satisfy 0 < min <= max < 1");
    parse_background(background);
}

Vec3<double> MotionProgram::position(double t) const {
    const Vec3<double> wave = (2.0 * std::numbers::pi * frequency * t + phase).array().sin();
    return base + velocity * t + amplitude.cwiseProduct(wave);
}

GaussianCloud<double> ProceduralScene::at(double t) const {
    GaussianCloud<double> out = cloud;
    for (std::size_t i = 0; i < motion.size(); ++i) out.positions[i] = motion[i].position(t);
    return out;
}

ProceduralScene sample_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    ProceduralScene scene;
    scene.spec = spec;
    scene.cloud.sh_degree = 0;
    const double reach = 0.8 * spec.bounds;
    for (int k = 0; k < spec.gaussians; ++k) {
        MotionProgram m;
        const bool moving = rng.uniform() >= spec.static_fraction;
        for (int a = 0; a < 3; ++a) {
            m.velocity[a] = moving ? rng.uniform(-spec.max_velocity, spec.max_velocity) : 0.0;
            m.amplitude[a] = moving ? rng.uniform(0.0, spec.max_amplitude) : 0.0;
            m.frequency[a] = rng.uniform(0.5, 1.5);
            m.phase[a] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            // Start point chosen so that X(t) stays within +-reach for t in [0, 1].
            const double lo = -reach + m.amplitude[a] + std::max(0.0, -m.velocity[a]);
            const double hi = reach - m.amplitude[a] - std::max(0.0, m.velocity[a]);
            m.base[a] = rng.uniform(lo, hi);
        }
        QuatCoeffs<double> q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        q.normalize();
        Vec3<double> log_scale;
        for (int a = 0; a < 3; ++a) log_scale[a] = std::log(rng.uniform(spec.min_scale, spec.max_scale));
        const double opacity = rng.uniform(spec.min_opacity, spec.max_opacity);
        ShBlock<double> sh = ShBlock<double>::Zero();
        for (int c = 0; c < 3; ++c) sh(0, c) = (rng.uniform(0.05, 0.95) - 0.5) / kShC0;
        scene.cloud.push_back(m.position(0.0), q, log_scale, logit(opacity), sh);
        scene.motion.push_back(m);
    }
    return scene;
}

namespace {

// Points on a latitude band between -20 and 60 degrees elevation, spread
// with the golden angle.
std::vector<Vec3<double>> orbit_positions(int count, double radius, double azimuth_offset) {
    std::vector<Vec3<double>> out;
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    const double z_lo = std::sin(-20.0 * std::numbers::pi / 180.0), z_hi = std::sin(60.0 * std::numbers::pi / 180.0);
    for (int i = 0; i < count; ++i) {
        const double z = z_lo + (z_hi - z_lo) * (i + 0.5) / count;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = i * golden + azimuth_offset;
        out.push_back(radius * Vec3<double>(r * std::cos(phi), r * std::sin(phi), z));
    }
    return out;
}

}  // namespace

GeneratedScene generate_scene(const SceneSpec& spec, const std::filesystem::path& output_dir) {
    GeneratedScene gen;
    gen.scene = sample_scene(spec);
    const ProceduralScene& scene = gen.scene;
    auto& ds = gen.dataset;
    ds.root = output_dir;
    ds.bounds_min = Vec3<double>::Constant(-spec.bounds);
    ds.bounds_max = Vec3<double>::Constant(spec.bounds);
    ds.background = parse_background(spec.background);

    const double fov = spec.fov_x_degrees * std::numbers::pi / 180.0;
    const Vec3<double> up(0, 0, 1);
    const RenderOptions<double> oracle = RenderOptions<double>::oracle(ds.background);

    struct SplitPlan {
        const char* name;
        int cameras;
        int timesteps;
        double azimuth_offset;
        bool centered_times;
        std::vector<DatasetFrame>* frames;
    };
    const SplitPlan plans[3] = {
        {"train", spec.train_cameras, spec.timesteps, 0.0, false, &ds.train},
        {"val", spec.val_cameras, spec.val_timesteps, 0.37, true, &ds.val},
        {"test", spec.test_cameras, spec.test_timesteps, 1.21, true, &ds.test},
    };
    std::filesystem::create_directories(output_dir);
    json manifest;
    for (const auto& plan : plans) {
        if (plan.cameras == 0) continue;
        std::filesystem::create_directories(output_dir / plan.name);
        const auto eyes = orbit_positions(plan.cameras, spec.orbit_radius, plan.azimuth_offset);
        json frames = json::array();
        int index = 0;
        for (int s = 0; s < plan.timesteps; ++s) {
            double t;
            if (plan.centered_times) {
                t = (s + 0.5) / plan.timesteps;
            } else {
                t = plan.timesteps == 1 ? 0.0 : static_cast<double>(s) / (plan.timesteps - 1);
            }
            const GaussianCloud<double> posed = scene.at(t);
            for (const auto& eye : eyes) {
                DatasetFrame frame;
                frame.camera = look_at_camera<double>(eye, Vec3<double>::Zero(), up, fov, spec.width, spec.height, t);
                frame.time = t;
                char name[32];
                std::snprintf(name, sizeof(name), "r_%03d", index++);
                frame.file_path = std::string("./") + plan.name + "/" + name;
                frame.image_path = resolve_image(output_dir, frame.file_path);
                const ViewForward<double> view = render_view<double>(posed, nullptr, nullptr, frame.camera, t, oracle);
                write_png(frame.image_path, view.frame.color.cast<float>());
                frames.push_back({{"file_path", frame.file_path},
                                  {"time", t},
                                  {"transform_matrix", matrix_to_json(opengl_c2w_from_camera(frame.camera))}});
                plan.frames->push_back(std::move(frame));
            }
        }
        json transforms = {{"camera_angle_x", fov},
                           {"scene_bounds", {vec_to_json(ds.bounds_min), vec_to_json(ds.bounds_max)}},
                           {"frames", frames}};
        write_json(output_dir / (std::string("transforms_") + plan.name + ".json"), transforms);
    }

    manifest["seed"] = spec.seed;
    ConfigSchema schema;
    SceneSpec copy = spec;
    copy.bind(schema, "");
    json spec_json = json::object();
    for (const auto& e : schema.entries()) spec_json[e.key] = schema.get(e.key);
    manifest["spec"] = spec_json;
    json gaussians = json::array();
    for (std::size_t i = 0; i < scene.motion.size(); ++i) {
        const auto& m = scene.motion[i];
        const auto& q = scene.cloud.rotations[i];
        gaussians.push_back({{"position_t0", vec_to_json(scene.cloud.positions[i])},
                             {"rotation_wxyz", {q[0], q[1], q[2], q[3]}},
                             {"log_scale", vec_to_json(scene.cloud.log_scales[i])},
                             {"opacity_logit", scene.cloud.opacity_logits[i]},
                             {"sh_dc", {scene.cloud.sh_coeffs[i](0, 0), scene.cloud.sh_coeffs[i](0, 1),
                                        scene.cloud.sh_coeffs[i](0, 2)}},
                             {"motion",
                              {{"base", vec_to_json(m.base)},
                               {"velocity", vec_to_json(m.velocity)},
                               {"amplitude", vec_to_json(m.amplitude)},
                               {"frequency", vec_to_json(m.frequency)},
                               {"phase", vec_to_json(m.phase)}}}});
    }
    manifest["motion_model"] = "X(t) = base + velocity*t + amplitude*sin(2*pi*frequency*t + phase)";
    manifest["gaussians"] = gaussians;
    write_json(output_dir / "manifest.json", manifest);
    return gen;
}

}  // namespace dmsr
