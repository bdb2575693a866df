// SPDX-License-Identifier: Apache-2.0
#include "dmsr/gradcheck.hpp"

#include "dmsr/camera.hpp"
#include "dmsr/deformation.hpp"
#include "dmsr/error.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/loss.hpp"
#include "dmsr/metrics.hpp"
#include "dmsr/pipeline.hpp"
#include "dmsr/random.hpp"
#include "dmsr/rasterizer.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

namespace dmsr {

namespace {

using V2 = Vec2<double>;
using V3 = Vec3<double>;
using V4 = Vec4<double>;
using M2 = Mat2<double>;
using M3 = Mat3<double>;
using VX = VecX<double>;
using MX = MatX<double>;

// A scalar degree of freedom. Off-diagonal entries of symmetric matrices
// move both mirrored slots together.
struct Param {
    double* a = nullptr;
    double* b = nullptr;

    void add(double delta) const {
        *a += delta;
        if (b) *b += delta;
    }
};

using Params = std::vector<Param>;

Params params_of(double* data, std::size_t n) {
    Params out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({data + i, nullptr});
    return out;
}

template <int N>
Params params_of(Eigen::Matrix<double, N, 1>& v) {
    return params_of(v.data(), static_cast<std::size_t>(v.size()));
}

template <int N>
Params sym_params(Eigen::Matrix<double, N, N>& m) {
    Params out;
    for (int i = 0; i < N; ++i) out.push_back({&m(i, i), nullptr});
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) out.push_back({&m(i, j), &m(j, i)});
    return out;
}

template <int N>
VX sym_grad(const Eigen::Matrix<double, N, N>& d) {
    VX out(N * (N + 1) / 2);
    int k = 0;
    for (int i = 0; i < N; ++i) out[k++] = d(i, i);
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) out[k++] = d(i, j) + d(j, i);
    return out;
}

template <typename T>
VX flatten(const std::vector<T>& values) {
    VX out(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<Eigen::Index>(i)] = static_cast<double>(values[i]);
    return out;
}

template <typename M, typename A>
VX flatten(const std::vector<M, A>& values) {
    VX out;
    if (values.empty()) return out;
    const Eigen::Index n = values.front().size();
    out.resize(n * static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i)
        out.segment(static_cast<Eigen::Index>(i) * n, n) = Eigen::Map<const VX>(values[i].data(), n);
    return out;
}

template <typename M, typename A>
Params params_of(std::vector<M, A>& values) {
    Params out;
    for (auto& v : values)
        for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back({v.data() + k, nullptr});
    return out;
}

V3 uniform3(Rng& rng, double lo, double hi) { return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)}; }

V4 random_quat(Rng& rng) {
    V4 q;
    do {
        q = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    } while (q.norm() < 0.3);
    return q;
}

template <int N>
Eigen::Matrix<double, N, N> random_sym(Rng& rng) {
    Eigen::Matrix<double, N, N> m;
    for (int i = 0; i < N; ++i)
        for (int j = i; j < N; ++j) m(i, j) = m(j, i) = rng.uniform(-1, 1);
    return m;
}

Camera<double> random_camera(Rng& rng, int width, int height) {
    V3 dir;
    do {
        dir = {rng.normal(), 0.5 * rng.normal(), rng.normal()};
    } while (dir.norm() < 0.2 || std::abs(dir.normalized().y()) > 0.8);
    return look_at_camera<double>(4.0 * dir.normalized(), uniform3(rng, -0.2, 0.2), V3::UnitY(), 0.8, width, height);
}

Image<double> random_image(Rng& rng, int w, int h, double lo = 0, double hi = 1) {
    Image<double> img(w, h);
    for (Eigen::Index i = 0; i < img.pixels.size(); ++i) img.pixels.data()[i] = rng.uniform(lo, hi);
    return img;
}

MX random_matrix(Rng& rng, int rows, int cols) {
    MX m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
    return m;
}

double dot(const Image<double>& a, const Image<double>& b) { return (a.pixels * b.pixels).sum(); }

struct Checker {
    const GradcheckOptions& options;
    GradcheckReport& report;
    std::string suite;
    std::uint64_t seed = 0;

    void check(const std::string& tensor, const Params& params, const VX& analytic,
               const std::function<double()>& loss) const {
        if (static_cast<Eigen::Index>(params.size()) != analytic.size()) {
            fail(ErrorKind::State, "gradcheck " + suite + "/" + tensor + ": size mismatch");
        }
        const double h = options.step;
        VX numeric(analytic.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i].add(h);
            const double up = loss();
            params[i].add(-2 * h);
            const double down = loss();
            params[i].add(h);
            numeric[static_cast<Eigen::Index>(i)] = (up - down) / (2 * h);
        }
        report.results.push_back({suite, tensor, seed, params.size(), analytic.norm(), relative_error(analytic, numeric)});
    }
};

void suite_projection(const Checker& c, Rng& rng) {
    const ProjectionConfig config = ProjectionConfig::oracle();
    for (int g = 0; g < 3; ++g) {
        const Camera<double> cam = random_camera(rng, 64, 48);
        V3 mean = uniform3(rng, -0.8, 0.8);
        M3 cov = build_covariance<double>(random_quat(rng), uniform3(rng, -2.5, -1.0));
        const V2 wc(rng.uniform(-1, 1), rng.uniform(-1, 1));
        const M2 wcov = random_sym<2>(rng);
        const double wd = rng.uniform(-1, 1);
        auto loss = [&] {
            const auto s = project_gaussian(mean, cov, cam, config);
            if (!s) fail(ErrorKind::State, "gradcheck projection: splat culled");
            return wc.dot(s->center_px) + (wcov.array() * s->cov2d.array()).sum() + wd * s->depth;
        };
        const ProjectionGrad<double> grad = project_gaussian_backward(mean, cov, cam, wc, wcov, wd);
        const std::string tag = "[" + std::to_string(g) + "]";
        c.check("mean" + tag, params_of(mean), grad.d_mean, loss);
        c.check("cov" + tag, sym_params(cov), sym_grad(grad.d_cov), loss);
    }
}

void suite_covariance(const Checker& c, Rng& rng) {
    for (int g = 0; g < 3; ++g) {
        V4 q = random_quat(rng);
        V3 log_scale = uniform3(rng, -2, 0.5);
        const M3 w = random_sym<3>(rng);
        auto loss = [&] { return (w.array() * build_covariance(q, log_scale).array()).sum(); };
        const CovarianceGrad<double> grad = build_covariance_backward(q, log_scale, w);
        const std::string tag = "[" + std::to_string(g) + "]";
        c.check("rotation" + tag, params_of(q), grad.d_rotation, loss);
        c.check("log_scale" + tag, params_of(log_scale), grad.d_log_scale, loss);
    }
}

void suite_sh(const Checker& c, Rng& rng) {
    for (int g = 0; g < 3; ++g) {
        // |coeff| <= 0.15 keeps every channel above the clamp at 0.
        ShBlock<double> coeffs;
        for (Eigen::Index i = 0; i < coeffs.size(); ++i) coeffs.data()[i] = rng.uniform(-0.15, 0.15);
        V3 dir = uniform3(rng, -1, 1);
        while (dir.norm() < 0.2) dir = uniform3(rng, -1, 1);
        const V3 w = uniform3(rng, -1, 1);
        auto loss = [&] { return w.dot(eval_sh_color(coeffs, dir, 1)); };
        const ShGrad<double> grad = eval_sh_color_backward(coeffs, dir, 1, w);
        const std::string tag = "[" + std::to_string(g) + "]";
        c.check("coeffs" + tag, params_of(coeffs.data(), 12), Eigen::Map<const VX>(grad.d_coeffs.data(), 12), loss);
        c.check("view_dir" + tag, params_of(dir), grad.d_view_dir, loss);
    }
}

void suite_rasterizer(const Checker& c, Rng& rng) {
    const int w = 32, h = 32, n = 20;
    std::vector<Splat2D<double>> splats(n);
    AlignedVector<V3> colors(n);
    std::vector<double> opacities(n);
    for (int i = 0; i < n; ++i) {
        auto& s = splats[static_cast<std::size_t>(i)];
        s.center_px = {rng.uniform(-4, w + 4), rng.uniform(-4, h + 4)};
        const double angle = rng.uniform(0, 3.141592653589793);
        M2 r;
        r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
        const V2 sd(rng.uniform(1.5, 6), rng.uniform(1.5, 6));
        s.cov2d = r * sd.array().square().matrix().asDiagonal() * r.transpose();
        s.depth = rng.uniform(1, 10);
        s.source_index = static_cast<std::uint32_t>(i);
        colors[static_cast<std::size_t>(i)] = uniform3(rng, 0, 1);
        // Below 0.99 so the alpha clamp never binds.
        opacities[static_cast<std::size_t>(i)] = rng.uniform(0.05, 0.9);
    }
    const V3 background = uniform3(rng, 0, 1);
    const Image<double> weights = random_image(rng, w, h, -1, 1);
    const RasterConfig config = RasterConfig::oracle();
    auto render = [&] {
        return rasterize<double>(splats, colors, opacities, w, h, background, config);
    };
    auto loss = [&] { return dot(render().color, weights); };
    const RasterGrads<double> grad = rasterize_backward(render(), weights);

    Params centers, covs;
    VX d_cov(3 * n);
    for (int i = 0; i < n; ++i) {
        auto& s = splats[static_cast<std::size_t>(i)];
        for (int k = 0; k < 2; ++k) centers.push_back({&s.center_px[k], nullptr});
        for (const Param& p : sym_params(s.cov2d)) covs.push_back(p);
        d_cov.segment(3 * i, 3) = sym_grad(grad.d_cov2d[static_cast<std::size_t>(i)]);
    }
    c.check("center_px", centers, flatten(grad.d_center_px), loss);
    c.check("cov2d", covs, d_cov, loss);
    c.check("color", params_of(colors), flatten(grad.d_color), loss);
    c.check("opacity", params_of(opacities.data(), opacities.size()), flatten(grad.d_opacity), loss);
}

DeformationConfig small_deform_config() {
    DeformationConfig cfg;
    cfg.levels = 2;
    cfg.base_resolution = 4;
    cfg.base_time_resolution = 3;
    cfg.multiplier = 2;
    cfg.feature_dim = 4;
    cfg.trunk_width = 8;
    cfg.trunk_depth = 2;
    cfg.head_width = 8;
    cfg.head_depth = 1;
    cfg.enhance_hidden = 8;
    return cfg;
}

// Zero-initialized output layers would hide most of the decoder from the
// check, so every parameter gets a random value.
DeformationField<double> random_field(Rng& rng, double head_gain) {
    DeformationField<double> field(small_deform_config(), rng.next());
    auto& p = field.params();
    for (auto& g : p.grids)
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(0.6, 1.4);
    auto randomize = [&](Linear<double>& layer, double gain) {
        const double bound = gain * 1.5 / std::sqrt(static_cast<double>(layer.in_dim()));
        for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = rng.uniform(-bound, bound);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-0.3, 0.3) * gain;
    };
    for (auto& l : p.trunk) randomize(l, 1);
    for (auto& head : p.heads)
        for (std::size_t k = 0; k < head.size(); ++k) randomize(head[k], k + 1 == head.size() ? head_gain : 1);
    randomize(p.adapter, 1);
    for (auto& l : p.fusion) randomize(l, 1);
    return field;
}

// True when no query sits within `margin` of a grid vertex, where the
// bilinear lookup has a kink.
bool away_from_vertices(const DeformTape<double>& tape, double margin) {
    for (std::size_t s = 0; s < tape.frac.size(); ++s) {
        for (int k = 0; k < 2; ++k) {
            if (tape.clamped[s][k] || tape.frac[s][k] < margin || tape.frac[s][k] > 1 - margin) return false;
        }
    }
    return true;
}

void suite_deform_field(const Checker& encode, const Checker& enhance, const Checker& decode, bool run_encode,
                        bool run_enhance, bool run_decode, Rng& rng) {
    DeformationField<double> field = random_field(rng, 1.0);
    const int n = 6;
    AlignedVector<V3> positions(n);
    std::vector<double> times(n);
    DeformTape<double> tape;
    for (int attempt = 0;; ++attempt) {
        if (attempt == 100) fail(ErrorKind::State, "gradcheck deform: no query set away from grid vertices");
        for (int i = 0; i < n; ++i) {
            positions[static_cast<std::size_t>(i)] = uniform3(rng, -0.9, 0.9);
            times[static_cast<std::size_t>(i)] = rng.uniform(0.05, 0.95);
        }
        field.forward(positions, times, &tape);
        if (away_from_vertices(tape, 1e-3)) break;
    }
    const MX wp = random_matrix(rng, 3, n), wr = random_matrix(rng, 4, n), ws = random_matrix(rng, 3, n);
    auto loss = [&] {
        const DeformOutput<double> out = field.forward(positions, times);
        return (wp.array() * out.position.array()).sum() + (wr.array() * out.rotation.array()).sum() +
               (ws.array() * out.log_scale.array()).sum();
    };
    const DeformOutput<double> out = field.forward(positions, times, &tape);
    (void)out;
    const DeformBackward<double> grad = field.backward(tape, wp, wr, ws);

    if (run_encode) encode.check("positions", params_of(positions), Eigen::Map<const VX>(grad.d_positions.data(), 3 * n), loss);
    auto blocks = field.params().blocks();
    const auto grad_blocks = grad.params.blocks();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::string& name = blocks[b].name;
        const Checker* target = nullptr;
        if (name.rfind("grid.", 0) == 0) {
            if (run_encode) target = &encode;
        } else if (name.rfind("adapter", 0) == 0 || name.rfind("fusion", 0) == 0) {
            if (run_enhance) target = &enhance;
        } else if (run_decode) {
            target = &decode;
        }
        if (!target) continue;
        const auto& g = grad_blocks[b].values;
        target->check(name, params_of(blocks[b].values.data(), blocks[b].values.size()),
                      Eigen::Map<const VX>(g.data(), static_cast<Eigen::Index>(g.size())), loss);
    }
}

void suite_deform_apply(const Checker& c, Rng& rng) {
    for (int g = 0; g < 3; ++g) {
        V3 position = uniform3(rng, -1, 1);
        V4 rotation = random_quat(rng);
        V3 log_scale = uniform3(rng, -3, 0);
        Deltas<double> deltas;
        deltas.position = uniform3(rng, -0.3, 0.3);
        deltas.rotation = 0.3 * random_quat(rng);
        deltas.log_scale = uniform3(rng, -0.3, 0.3);
        const V3 wx = uniform3(rng, -1, 1), ws = uniform3(rng, -1, 1);
        const V4 wr(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        auto loss = [&] {
            const auto a = apply_deformation(position, rotation, log_scale, deltas);
            return wx.dot(a.position) + wr.dot(a.rotation) + ws.dot(a.log_scale);
        };
        const auto grad = apply_deformation_backward(rotation, deltas, wx, wr, ws);
        const std::string tag = "[" + std::to_string(g) + "]";
        c.check("position" + tag, params_of(position), grad.d_position, loss);
        c.check("rotation" + tag, params_of(rotation), grad.d_rotation, loss);
        c.check("log_scale" + tag, params_of(log_scale), grad.d_log_scale, loss);
        c.check("delta_position" + tag, params_of(deltas.position), grad.d_deltas.position, loss);
        c.check("delta_rotation" + tag, params_of(deltas.rotation), grad.d_deltas.rotation, loss);
        c.check("delta_log_scale" + tag, params_of(deltas.log_scale), grad.d_deltas.log_scale, loss);
    }
}

void suite_ssim(const Checker& c, Rng& rng) {
    Image<double> a = random_image(rng, 16, 16);
    const Image<double> b = random_image(rng, 16, 16);
    Image<double> d_a;
    ssim_with_grad(a, b, d_a);
    auto loss = [&] { return ssim(a, b); };
    c.check("image", params_of(a.pixels.data(), static_cast<std::size_t>(a.pixels.size())),
            Eigen::Map<const VX>(d_a.pixels.data(), d_a.pixels.size()), loss);
}

void suite_loss(const Checker& c, Rng& rng) {
    Image<double> r = random_image(rng, 16, 16);
    Image<double> t = random_image(rng, 16, 16);
    // Keep every pixel away from the L1 kink at r == t.
    for (Eigen::Index i = 0; i < r.pixels.size(); ++i) {
        double& v = r.pixels.data()[i];
        const double target = t.pixels.data()[i];
        if (std::abs(v - target) < 1e-2) v = target + (v < target ? -1e-2 : 1e-2);
    }
    const LossResult<double> result = compute_loss(r, t);
    auto loss = [&] { return compute_loss(r, t).loss; };
    c.check("rendered", params_of(r.pixels.data(), static_cast<std::size_t>(r.pixels.size())),
            Eigen::Map<const VX>(result.d_rendered.pixels.data(), result.d_rendered.pixels.size()), loss);
}

GaussianCloud<double> random_cloud(Rng& rng, int n) {
    GaussianCloud<double> cloud;
    cloud.sh_degree = 1;
    for (int i = 0; i < n; ++i) {
        ShBlock<double> sh;
        for (Eigen::Index k = 0; k < sh.size(); ++k) sh.data()[k] = rng.uniform(-0.15, 0.15);
        cloud.push_back(uniform3(rng, -0.6, 0.6), random_quat(rng), uniform3(rng, -2.2, -1.5), rng.uniform(-1.5, 1.5), sh);
    }
    return cloud;
}

void check_cloud(const Checker& c, const std::string& prefix, GaussianCloud<double>& cloud,
                 const CloudGrads<double>& grad, const std::function<double()>& loss) {
    c.check(prefix + "positions", params_of(cloud.positions), flatten(grad.positions), loss);
    c.check(prefix + "rotations", params_of(cloud.rotations), flatten(grad.rotations), loss);
    c.check(prefix + "log_scales", params_of(cloud.log_scales), flatten(grad.log_scales), loss);
    c.check(prefix + "opacity_logits", params_of(cloud.opacity_logits.data(), cloud.size()),
            flatten(grad.opacity_logits), loss);
    c.check(prefix + "sh_coeffs", params_of(cloud.sh_coeffs), flatten(grad.sh_coeffs), loss);
}

void suite_pipeline(const Checker& c, Rng& rng) {
    const int w = 32, h = 32;
    const Camera<double> cam = random_camera(rng, w, h);
    const RenderOptions<double> options = RenderOptions<double>::oracle(uniform3(rng, 0, 1));
    const Image<double> weights = random_image(rng, w, h, -1, 1);

    {
        GaussianCloud<double> cloud = random_cloud(rng, 8);
        auto loss = [&] { return dot(render_view<double>(cloud, nullptr, nullptr, cam, 0, options).frame.color, weights); };
        const auto fwd = render_view<double>(cloud, nullptr, nullptr, cam, 0, options);
        const ViewBackward<double> grad = backward_view<double>(cloud, nullptr, fwd, weights);
        check_cloud(c, "static.", cloud, grad.cloud, loss);
    }

    DeformationField<double> field = random_field(rng, 0.1);
    const double t = rng.uniform(0.1, 0.9);
    GaussianCloud<double> cloud;
    for (int attempt = 0;; ++attempt) {
        if (attempt == 100) fail(ErrorKind::State, "gradcheck pipeline: no cloud away from grid vertices");
        cloud = random_cloud(rng, 8);
        const auto fwd = render_view<double>(cloud, &field, nullptr, cam, t, options);
        if (away_from_vertices(fwd.deform.tape, 1e-3)) break;
    }
    auto loss = [&] { return dot(render_view<double>(cloud, &field, nullptr, cam, t, options).frame.color, weights); };
    const auto fwd = render_view<double>(cloud, &field, nullptr, cam, t, options);
    const ViewBackward<double> grad = backward_view<double>(cloud, &field, fwd, weights);
    if (!grad.deform) fail(ErrorKind::State, "gradcheck pipeline: no deformation gradient");
    check_cloud(c, "deformed.", cloud, grad.cloud, loss);

    // A random sample of field parameters across every block.
    auto blocks = field.params().blocks();
    const auto grad_blocks = grad.deform->params.blocks();
    Params sampled;
    VX analytic(64);
    for (Eigen::Index k = 0; k < analytic.size(); ++k) {
        const std::size_t b = static_cast<std::size_t>(rng.index(blocks.size()));
        const std::size_t i = static_cast<std::size_t>(rng.index(blocks[b].values.size()));
        sampled.push_back({&blocks[b].values[i], nullptr});
        analytic[k] = grad_blocks[b].values[i];
    }
    c.check("field(sampled)", sampled, analytic, loss);
}

bool selected(const GradcheckOptions& options, const std::string& suite) {
    return options.suites.empty() ||
           std::find(options.suites.begin(), options.suites.end(), suite) != options.suites.end();
}

}  // namespace

double GradcheckReport::worst() const {
    double w = 0;
    for (const auto& r : results) w = std::max(w, r.rel_error);
    return w;
}

const std::vector<std::string>& gradcheck_suites() {
    static const std::vector<std::string> suites{"projection",     "covariance",     "sh",           "rasterizer",
                                                 "deform.encode",  "deform.enhance", "deform.decode", "deform.apply",
                                                 "ssim",           "loss",           "pipeline"};
    return suites;
}

double relative_error(const VecX<double>& analytic, const VecX<double>& numeric) {
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-6});
    return (analytic - numeric).norm() / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    if (options.seeds < 1) fail(ErrorKind::InvalidParameter, "gradcheck: seeds >= 1");
    if (!(options.step > 0)) fail(ErrorKind::InvalidParameter, "gradcheck: step > 0");
    for (const auto& s : options.suites) {
        const auto& all = gradcheck_suites();
        if (std::find(all.begin(), all.end(), s) == all.end()) {
            fail(ErrorKind::InvalidParameter, "gradcheck: unknown suite '" + s + "'");
        }
    }
    const auto start = std::chrono::steady_clock::now();
    GradcheckReport report;
    report.tolerance = options.tolerance;
    for (int k = 0; k < options.seeds; ++k) {
        const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(k);
        auto checker = [&](const std::string& suite) { return Checker{options, report, suite, seed}; };
        // Each suite draws from its own stream so selecting a subset does
        // not change the cases.
        auto rng_for = [&](std::uint64_t salt) { return Rng(seed * 1000003u + salt); };
        if (selected(options, "projection")) {
            Rng rng = rng_for(1);
            suite_projection(checker("projection"), rng);
        }
        if (selected(options, "covariance")) {
            Rng rng = rng_for(2);
            suite_covariance(checker("covariance"), rng);
        }
        if (selected(options, "sh")) {
            Rng rng = rng_for(3);
            suite_sh(checker("sh"), rng);
        }
        if (selected(options, "rasterizer")) {
            Rng rng = rng_for(4);
            suite_rasterizer(checker("rasterizer"), rng);
        }
        const bool enc = selected(options, "deform.encode"), enh = selected(options, "deform.enhance"),
                   dec = selected(options, "deform.decode");
        if (enc || enh || dec) {
            Rng rng = rng_for(5);
            suite_deform_field(checker("deform.encode"), checker("deform.enhance"), checker("deform.decode"), enc, enh,
                               dec, rng);
        }
        if (selected(options, "deform.apply")) {
            Rng rng = rng_for(6);
            suite_deform_apply(checker("deform.apply"), rng);
        }
        if (selected(options, "ssim")) {
            Rng rng = rng_for(7);
            suite_ssim(checker("ssim"), rng);
        }
        if (selected(options, "loss")) {
            Rng rng = rng_for(8);
            suite_loss(checker("loss"), rng);
        }
        if (selected(options, "pipeline")) {
            Rng rng = rng_for(9);
            suite_pipeline(checker("pipeline"), rng);
        }
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace dmsr
