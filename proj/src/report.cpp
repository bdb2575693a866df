// SPDX-License-Identifier: Apache-2.0
#include "dmsr/report.hpp"

#include "dmsr/error.hpp"
#include "dmsr/metrics.hpp"
#include "dmsr/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace dmsr {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double parse_double(const std::string& text, const char* what) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        fail(ErrorKind::Parse, std::string("eval report: bad number for ") + what + ": '" + text + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        fail(ErrorKind::Parse, std::string("eval report: bad integer for ") + what + ": '" + text + "'");
    }
    return v;
}

// JSON has no infinity; the PSNR sentinel is the string "inf".
json number_or_inf(double v) { return std::isinf(v) ? json("inf") : json(v); }

double from_number_or_inf(const json& j) {
    if (j.is_string() && j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = std::ceil(p / 100.0 * static_cast<double>(values.size()));
    const std::size_t idx = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
    return values[idx];
}

void EvalReport::finalize() {
    std::vector<double> p, s, ms;
    for (const auto& v : views) {
        p.push_back(v.psnr);
        s.push_back(v.ssim);
        ms.push_back(v.render_ms);
    }
    auto mean = [](const std::vector<double>& x) {
        double sum = 0;
        for (const double v : x) sum += v;
        return x.empty() ? 0.0 : sum / static_cast<double>(x.size());
    };
    mean_psnr = mean(p);
    median_psnr = median(p);
    mean_ssim = mean(s);
    median_ssim = median(s);
    mean_render_ms = mean(ms);
    fps = mean_render_ms > 0 ? 1000.0 / mean_render_ms : 0.0;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "# split," << split << '\n'
        << "# mean_psnr," << format_double(mean_psnr) << '\n'
        << "# median_psnr," << format_double(median_psnr) << '\n'
        << "# mean_ssim," << format_double(mean_ssim) << '\n'
        << "# median_ssim," << format_double(median_ssim) << '\n'
        << "# mean_render_ms," << format_double(mean_render_ms) << '\n'
        << "# fps," << format_double(fps) << '\n'
        << "# gaussians," << gaussians << '\n'
        << "# active," << active << '\n'
        << "# frozen," << frozen << '\n'
        << "# checkpoint_bytes," << checkpoint_bytes << '\n'
        << "name,time,psnr,ssim,render_ms\n";
    for (const auto& v : views) {
        out << v.name << ',' << format_double(v.time) << ',' << format_double(v.psnr) << ',' << format_double(v.ssim)
            << ',' << format_double(v.render_ms) << '\n';
    }
    return out.str();
}

EvalReport EvalReport::from_csv(const std::string& text) {
    EvalReport r;
    std::stringstream ss(text);
    std::string line;
    bool header_seen = false;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        if (line.rfind("# ", 0) == 0) {
            const auto parts = split_csv(line.substr(2));
            if (parts.size() != 2) fail(ErrorKind::Parse, "eval report: malformed summary line '" + line + "'");
            const std::string& k = parts[0];
            const std::string& v = parts[1];
            if (k == "split") r.split = v;
            else if (k == "mean_psnr") r.mean_psnr = parse_double(v, "mean_psnr");
            else if (k == "median_psnr") r.median_psnr = parse_double(v, "median_psnr");
            else if (k == "mean_ssim") r.mean_ssim = parse_double(v, "mean_ssim");
            else if (k == "median_ssim") r.median_ssim = parse_double(v, "median_ssim");
            else if (k == "mean_render_ms") r.mean_render_ms = parse_double(v, "mean_render_ms");
            else if (k == "fps") r.fps = parse_double(v, "fps");
            else if (k == "gaussians") r.gaussians = parse_u64(v, "gaussians");
            else if (k == "active") r.active = parse_u64(v, "active");
            else if (k == "frozen") r.frozen = parse_u64(v, "frozen");
            else if (k == "checkpoint_bytes") r.checkpoint_bytes = parse_u64(v, "checkpoint_bytes");
            else fail(ErrorKind::Parse, "eval report: unknown summary key '" + k + "'");
            continue;
        }
        if (!header_seen) {
            if (line != "name,time,psnr,ssim,render_ms") fail(ErrorKind::Parse, "eval report: unexpected header '" + line + "'");
            header_seen = true;
            continue;
        }
        const auto parts = split_csv(line);
        if (parts.size() != 5) fail(ErrorKind::Parse, "eval report: malformed row '" + line + "'");
        r.views.push_back({parts[0], parse_double(parts[1], "time"), parse_double(parts[2], "psnr"),
                           parse_double(parts[3], "ssim"), parse_double(parts[4], "render_ms")});
    }
    return r;
}

std::string EvalReport::to_json() const {
    json views_json = json::array();
    for (const auto& v : views) {
        views_json.push_back({{"name", v.name},
                              {"time", v.time},
                              {"psnr", number_or_inf(v.psnr)},
                              {"ssim", v.ssim},
                              {"render_ms", v.render_ms}});
    }
    const json j = {{"split", split},
                    {"mean_psnr", number_or_inf(mean_psnr)},
                    {"median_psnr", number_or_inf(median_psnr)},
                    {"mean_ssim", mean_ssim},
                    {"median_ssim", median_ssim},
                    {"mean_render_ms", mean_render_ms},
                    {"fps", fps},
                    {"gaussians", gaussians},
                    {"active", active},
                    {"frozen", frozen},
                    {"checkpoint_bytes", checkpoint_bytes},
                    {"views", views_json}};
    return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
    EvalReport r;
    try {
        const json j = json::parse(text);
        r.split = j.at("split").get<std::string>();
        r.mean_psnr = from_number_or_inf(j.at("mean_psnr"));
        r.median_psnr = from_number_or_inf(j.at("median_psnr"));
        r.mean_ssim = j.at("mean_ssim").get<double>();
        r.median_ssim = j.at("median_ssim").get<double>();
        r.mean_render_ms = j.at("mean_render_ms").get<double>();
        r.fps = j.at("fps").get<double>();
        r.gaussians = j.at("gaussians").get<std::uint64_t>();
        r.active = j.at("active").get<std::uint64_t>();
        r.frozen = j.at("frozen").get<std::uint64_t>();
        r.checkpoint_bytes = j.at("checkpoint_bytes").get<std::uint64_t>();
        for (const auto& v : j.at("views")) {
            r.views.push_back({v.at("name").get<std::string>(), v.at("time").get<double>(),
                               from_number_or_inf(v.at("psnr")), v.at("ssim").get<double>(),
                               v.at("render_ms").get<double>()});
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("eval report: ") + e.what());
    }
    return r;
}

EvalReport make_eval_report(const SceneModel& model, const DynamicDataset& dataset, const std::string& split,
                            const RenderOptions<float>& options, std::uint64_t checkpoint_bytes) {
    const auto& frames = dataset.split(split);
    const std::vector<Image<float>> images = load_split_images(dataset, frames);
    const EvalResult result = evaluate_model(model, dataset, split, images, options);
    EvalReport r;
    r.split = split;
    for (std::size_t i = 0; i < frames.size(); ++i)
        r.views.push_back({frames[i].file_path, frames[i].time, result.psnr[i], result.ssim[i], result.render_ms[i]});
    r.gaussians = model.cloud.size();
    r.frozen = model.saliency && model.saliency->config.enabled ? model.saliency->frozen_count() : 0;
    r.active = r.gaussians - r.frozen;
    r.checkpoint_bytes = checkpoint_bytes;
    r.finalize();
    return r;
}

std::vector<CameraPose> read_camera_path(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open camera path: " + path.string());
    std::vector<CameraPose> out;
    try {
        const json j = json::parse(in);
        const double fov = j.at("camera_angle_x").get<double>();
        const int w = j.at("width").get<int>(), h = j.at("height").get<int>();
        if (w < 1 || h < 1) fail(ErrorKind::Parse, path.string() + ": width and height must be positive");
        for (const auto& f : j.at("frames")) {
            Mat4<double> c2w;
            const auto& m = f.at("transform_matrix");
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) c2w(r, c) = m.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
            const double t = f.value("time", 0.0);
            out.push_back({camera_from_opengl_c2w<double>(c2w, fov, w, h, t).cast<float>(), static_cast<float>(t)});
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    if (out.empty()) fail(ErrorKind::Parse, path.string() + ": camera path has no frames");
    return out;
}

std::string BenchReport::to_json() const {
    const json j = {{"repetitions", repetitions}, {"frames", frames},       {"threads", threads},
                    {"width", width},             {"height", height},       {"mean_ms", mean_ms},
                    {"median_ms", median_ms},     {"p95_ms", p95_ms},       {"fps", fps}};
    return j.dump(2);
}

BenchReport bench_render(const SceneModel& model, const std::vector<CameraPose>& path, int repetitions,
                         const RenderOptions<float>& options) {
    if (repetitions < 1) fail(ErrorKind::InvalidParameter, "repetitions >= 1");
    if (path.empty()) fail(ErrorKind::InvalidParameter, "bench: empty camera path");
    for (const auto& pose : path) render_model(model, pose.camera, pose.time, options);
    std::vector<double> times;
    for (int r = 0; r < repetitions; ++r) {
        for (const auto& pose : path) {
            const auto start = Clock::now();
            render_model(model, pose.camera, pose.time, options);
            times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
        }
    }
    BenchReport b;
    b.repetitions = repetitions;
    b.frames = static_cast<int>(path.size());
    b.threads = thread_count();
    b.width = path.front().camera.width;
    b.height = path.front().camera.height;
    double sum = 0;
    for (const double t : times) sum += t;
    b.mean_ms = sum / static_cast<double>(times.size());
    b.median_ms = median(times);
    b.p95_ms = percentile(times, 95.0);
    b.fps = 1000.0 / b.mean_ms;
    return b;
}

}  // namespace dmsr
