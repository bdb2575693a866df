// SPDX-License-Identifier: Apache-2.0
#include "dmsr/trainer.hpp"

#include "dmsr/error.hpp"
#include "dmsr/metrics.hpp"
#include "dmsr/parallel.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>

namespace dmsr {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

class GroupRates : public LearningRates {
public:
    GroupRates(const LearningRateConfig& lr, double position_rate) : lr_(lr), position_(position_rate) {}

    double rate(const std::string& group) const override {
        if (group == "positions") return position_;
        if (group == "rotations") return lr_.rotations;
        if (group == "scales") return lr_.scales;
        if (group == "opacities") return lr_.opacities;
        if (group == "sh") return lr_.sh;
        if (group == "grids") return lr_.grids;
        if (group == "decoder") return lr_.decoder;
        fail(ErrorKind::State, "no learning rate for group '" + group + "'");
    }

private:
    const LearningRateConfig& lr_;
    double position_;
};

template <typename Vec>
std::span<float> flat(Vec& v, std::size_t width) {
    return {v.empty() ? nullptr : v.data()->data(), v.size() * width};
}

template <typename Vec>
std::span<const float> flat(const Vec& v, std::size_t width) {
    return {v.empty() ? nullptr : v.data()->data(), v.size() * width};
}

constexpr std::size_t kShStride = 12;

}  // namespace

void TrainConfig::bind(ConfigSchema& s) {
    s.add("dataset", dataset, "D-NeRF layout directory");
    s.add("output_dir", output_dir, "run directory; empty disables file output");
    s.add("iterations", iterations, "0 writes the initial checkpoint only");
    s.add("seed", seed);
    s.add("threads", threads, "0 = hardware concurrency");
    s.add("lr.positions", lr.positions);
    s.add("lr.position_final_factor", lr.position_final_factor, "log-linear decay target");
    s.add("lr.scale_positions_by_extent", lr.scale_positions_by_extent);
    s.add("lr.rotations", lr.rotations);
    s.add("lr.scales", lr.scales);
    s.add("lr.opacities", lr.opacities);
    s.add("lr.sh", lr.sh);
    s.add("lr.grids", lr.grids);
    s.add("lr.decoder", lr.decoder);
    s.add("loss.l1", loss.l1);
    s.add("loss.ssim", loss.ssim);
    s.add("static_warmup", static_warmup, "canonical-only iterations");
    s.add("saliency.enabled", saliency.enabled);
    s.add("saliency.ema_decay", saliency.ema_decay);
    s.add("saliency.threshold_quantile", saliency.threshold_quantile);
    s.add("saliency.warmup_iters", saliency.warmup_iters, "counted from the end of static_warmup");
    s.add("saliency.refresh_interval", saliency.refresh_interval);
    s.add("saliency.time_bins", saliency.time_bins);
    s.add("saliency.reactivation", saliency.reactivation);
    s.add("saliency.reactivation_percentile", saliency.reactivation_percentile);
    s.add("saliency.render_cached", saliency.render_cached);
    s.add("saliency.freeze_canonical", saliency.freeze_canonical);
    s.add("deform.levels", deformation.levels);
    s.add("deform.base_resolution", deformation.base_resolution);
    s.add("deform.base_time_resolution", deformation.base_time_resolution);
    s.add("deform.multiplier", deformation.multiplier);
    s.add("deform.feature_dim", deformation.feature_dim);
    s.add("deform.trunk_width", deformation.trunk_width);
    s.add("deform.trunk_depth", deformation.trunk_depth);
    s.add("deform.head_width", deformation.head_width);
    s.add("deform.head_depth", deformation.head_depth);
    s.add("deform.enhance_hidden", deformation.enhance_hidden);
    s.add("deform.manifold_enhance", deformation.manifold_enhance);
    s.add("deform.grid_init_jitter", deformation.grid_init_jitter);
    s.add("disable_saliency", disable_saliency, "ablation: all Gaussians active");
    s.add("disable_manifold", disable_manifold, "ablation: bypass manifold enhancement");
    s.add("prune.enabled", prune.enabled);
    s.add("prune.opacity_floor", prune.opacity_floor);
    s.add("prune.start", prune.start);
    s.add("prune.interval", prune.interval);
    s.add("init.count", init_count);
    s.add("init.opacity", init_opacity);
    s.add("init.scale_factor", init_scale_factor, "times mean nearest-neighbour distance");
    s.add("sh_degree", sh_degree, "0 or 1");
    s.add("background", background, "white, black, green or r,g,b");
    s.add("tile_size", tile_size);
    s.add("eval.interval", eval_interval, "0 = final evaluation only");
    s.add("eval.split", eval_split);
    s.add("eval.target_psnr", target_psnr, "records wall time to reach this held-out PSNR");
    s.add("checkpoint_interval", checkpoint_interval, "0 = final checkpoint only");
    s.add("log_interval", log_interval, "progress lines on stderr; 0 = quiet");
}

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) fail(ErrorKind::Config, "train config: " + msg);
    };
    require(iterations >= 0, "iterations must be >= 0");
    require(threads >= 0, "threads must be >= 0");
    for (const double r : {lr.positions, lr.rotations, lr.scales, lr.opacities, lr.sh, lr.grids, lr.decoder}) {
        require(r > 0.0 && std::isfinite(r), "learning rates must be > 0");
    }
    require(lr.position_final_factor > 0.0, "lr.position_final_factor must be > 0");
    require(loss.l1 >= 0.0 && loss.ssim >= 0.0 && loss.l1 + loss.ssim > 0.0, "loss weights must be >= 0 with a positive sum");
    require(static_warmup >= 0, "static_warmup must be >= 0");
    require(prune.opacity_floor > 0.0 && prune.opacity_floor < 1.0, "prune.opacity_floor must be in (0, 1)");
    require(prune.start >= 0 && prune.interval >= 1, "prune.start >= 0 and prune.interval >= 1 required");
    require(init_count >= 1, "init.count must be >= 1");
    require(init_opacity > 0.0 && init_opacity < 1.0, "init.opacity must be in (0, 1)");
    require(init_scale_factor > 0.0, "init.scale_factor must be > 0");
    require(sh_degree == 0 || sh_degree == 1, "sh_degree must be 0 or 1");
    require(tile_size >= 1, "tile_size must be >= 1");
    require(eval_interval >= 0 && checkpoint_interval >= 0 && log_interval >= 0, "intervals must be >= 0");
    require(eval_split == "train" || eval_split == "val" || eval_split == "test", "eval.split must be train, val or test");
    parse_background(background);
    saliency.validate();
    deformation.validate();
}

SaliencyConfig TrainConfig::effective_saliency() const {
    SaliencyConfig s = saliency;
    if (disable_saliency) s.enabled = false;
    return s;
}

DeformationConfig TrainConfig::effective_deformation(const DynamicDataset& dataset) const {
    DeformationConfig d = deformation;
    if (disable_manifold) d.manifold_enhance = false;
    d.bounds_min = dataset.bounds_min;
    d.bounds_max = dataset.bounds_max;
    return d;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    TrainConfig config;
    ConfigSchema schema;
    config.bind(schema);
    if (!path.empty()) schema.apply(read_key_value_file(path), path.string());
    schema.apply_environment();
    config.validate();
    return config;
}

template <typename Scalar>
PruneResult prune(GaussianCloud<Scalar>& cloud, OptimizerState<Scalar>* optimizer,
                  const std::vector<std::size_t>& slot_strides, SaliencyState<Scalar>* saliency, double floor) {
    if (!(floor > 0.0 && floor < 1.0)) fail(ErrorKind::InvalidParameter, "prune: floor must be in (0, 1)");
    const std::size_t n = cloud.size();
    PruneResult result;
    result.remap.assign(n, -1);
    std::unique_ptr<bool[]> keep(new bool[n]);
    std::int64_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        keep[i] = static_cast<double>(sigmoid(cloud.opacity_logits[i])) >= floor;
        if (keep[i]) result.remap[i] = next++;
    }
    result.removed = n - static_cast<std::size_t>(next);
    if (result.removed == 0) return result;
    const std::span<const bool> mask(keep.get(), n);
    cloud.compact(mask);
    if (optimizer && !optimizer->slots.empty()) optimizer->compact(mask, slot_strides);
    if (saliency) saliency->compact(mask);
    return result;
}

template PruneResult prune(GaussianCloud<float>&, OptimizerState<float>*, const std::vector<std::size_t>&,
                           SaliencyState<float>*, double);
template PruneResult prune(GaussianCloud<double>&, OptimizerState<double>*, const std::vector<std::size_t>&,
                           SaliencyState<double>*, double);

SceneModel load_model(const std::filesystem::path& checkpoint) {
    CheckpointFile file = read_checkpoint(checkpoint);
    SceneModel model;
    model.cloud = std::move(file.cloud);
    if (const auto* s = file.find("DEFM")) model.field = decode_deformation(s->payload);
    if (const auto* s = file.find("SALI")) {
        model.saliency = decode_saliency(s->payload);
        if (model.saliency->size() != model.cloud.size()) fail(ErrorKind::Parse, "checkpoint: saliency size mismatch");
    }
    if (const auto* s = file.find("TRNS")) {
        ByteReader r(s->payload, "train-state section");
        model.iteration = static_cast<int>(r.get<std::uint32_t>());
        model.static_warmup = static_cast<int>(r.get<std::uint32_t>());
    }
    return model;
}

ViewForward<float> render_model(const SceneModel& model, const Camera<float>& camera, float t,
                                const RenderOptions<float>& options) {
    const bool deform = model.deformation_active();
    const bool gate = deform && model.saliency && model.saliency->config.enabled;
    return render_view<float>(model.cloud, deform ? &*model.field : nullptr, gate ? &*model.saliency : nullptr,
                              camera, t, options);
}

EvalResult evaluate_model(const SceneModel& model, const DynamicDataset& dataset, const std::string& split,
                          const std::vector<Image<float>>& images, const RenderOptions<float>& options) {
    const auto& frames = dataset.split(split);
    if (frames.empty()) fail(ErrorKind::InvalidParameter, "evaluate: split '" + split + "' is empty");
    if (images.size() != frames.size()) fail(ErrorKind::State, "evaluate: image count does not match the split");
    EvalResult out;
    out.split = split;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto start = Clock::now();
        const ViewForward<float> view =
            render_model(model, frames[i].camera.cast<float>(), static_cast<float>(frames[i].time), options);
        out.render_ms.push_back(elapsed_ms(start));
        out.psnr.push_back(psnr(view.frame.color, images[i]));
        out.ssim.push_back(static_cast<double>(ssim(view.frame.color, images[i])));
    }
    double sp = 0, ss = 0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        sp += out.psnr[i];
        ss += out.ssim[i];
    }
    out.mean_psnr = sp / static_cast<double>(frames.size());
    out.mean_ssim = ss / static_cast<double>(frames.size());
    return out;
}

Trainer::Trainer(TrainConfig config, DynamicDataset dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)), rng_(config_.seed) {
    config_.validate();
    if (dataset_.train.empty()) fail(ErrorKind::InvalidParameter, "trainer: dataset has no training frames");
    set_thread_count(config_.threads);
    dataset_.background = parse_background(config_.background);
    train_images_ = load_split_images(dataset_, dataset_.train);
    options_.raster.tile_size = config_.tile_size;
    options_.background = dataset_.background.cast<float>();
    scene_extent_ = static_cast<float>(dataset_.scene_extent());

    field_ = DeformationField<float>(config_.effective_deformation(dataset_), config_.seed ^ 0x9e3779b97f4a7c15ULL);
    zero_deform_grads_ = field_.params().zeros_like();
    initialize_cloud();
    saliency_ = SaliencyState<float>(config_.effective_saliency(), cloud_.size());
}

void Trainer::initialize_cloud() {
    Rng rng(config_.seed + 1);
    const std::size_t n = static_cast<std::size_t>(config_.init_count);
    AlignedVector<Vec3<double>> points(n);
    for (auto& p : points)
        for (int a = 0; a < 3; ++a) p[a] = rng.uniform(dataset_.bounds_min[a], dataset_.bounds_max[a]);
    double mean_nn = 0.1 * dataset_.scene_extent();
    if (n > 1) {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) best = std::min(best, (points[i] - points[j]).squaredNorm());
            sum += std::sqrt(best);
        }
        mean_nn = sum / static_cast<double>(n);
    }
    const float log_scale = static_cast<float>(std::log(config_.init_scale_factor * mean_nn));
    const float opacity_logit = static_cast<float>(logit(config_.init_opacity));
    cloud_ = GaussianCloud<float>{};
    cloud_.sh_degree = config_.sh_degree;
    for (const auto& p : points) {
        cloud_.push_back(p.cast<float>(), QuatCoeffs<float>(1, 0, 0, 0), Vec3<float>::Constant(log_scale), opacity_logit,
                         ShBlock<float>::Zero());
    }
}

std::vector<std::size_t> Trainer::slot_strides() const {
    std::vector<std::size_t> strides = {3, 4, 3, 1, kShStride};
    strides.resize(strides.size() + field_.params().blocks().size(), 0);
    return strides;
}

double Trainer::position_rate() const {
    const double base = config_.lr.positions * (config_.lr.scale_positions_by_extent ? dataset_.scene_extent() : 1.0);
    const double progress =
        config_.iterations > 0 ? std::min(1.0, static_cast<double>(iteration_) / config_.iterations) : 0.0;
    return base * std::pow(config_.lr.position_final_factor, progress);
}

StepStats Trainer::step() {
    try {
        return step_impl();
    } catch (const Error& e) {
        throw Error(e.kind(), "iteration " + std::to_string(iteration_ + 1) + ": " + e.what());
    }
}

StepStats Trainer::step_impl() {
    const auto start = Clock::now();
    StepStats stats;
    const std::size_t f = static_cast<std::size_t>(rng_.index(dataset_.train.size()));
    const DatasetFrame& frame = dataset_.train[f];
    const Camera<float> camera = frame.camera.cast<float>();
    const float t = static_cast<float>(frame.time);
    const bool deform = deformation_on();
    const bool gate = deform && gating();

    const ViewForward<float> fwd =
        render_view<float>(cloud_, deform ? &field_ : nullptr, gate ? &saliency_ : nullptr, camera, t, options_);
    const LossResult<float> loss = compute_loss(fwd.frame.color, train_images_[f], config_.loss);
    const ViewBackward<float> bwd = backward_view<float>(cloud_, deform ? &field_ : nullptr, fwd, loss.d_rendered);

    stats.loss = static_cast<double>(loss.loss);
    stats.psnr = psnr(fwd.frame.color, train_images_[f]);
    stats.gaussians = cloud_.size();
    stats.active = gate ? saliency_.active_count() : cloud_.size();
    if (deform) {
        stats.network_evaluations = fwd.deform.network_evaluations;
        network_evaluations_ += fwd.deform.network_evaluations;
        cache_fallbacks_ += fwd.deform.cache_fallbacks;
    }
    if (gate) {
        update_saliency<float>(saliency_, fwd.deform.deltas, scene_extent_);
        for (const std::uint32_t i : fwd.deform.active) saliency_.record_deltas(i, t, fwd.deform.deltas[i]);
        for (std::size_t i = 0; i < cloud_.size(); ++i) saliency_.grad_accum[i] += bwd.cloud.screen_grad[i];
    }

    const auto& g = bwd.cloud;
    std::vector<OptimTensor<float>> tensors = {
        {"positions", "positions", flat(cloud_.positions, 3), flat(g.positions, 3), 3},
        {"rotations", "rotations", flat(cloud_.rotations, 4), flat(g.rotations, 4), 4},
        {"log_scales", "scales", flat(cloud_.log_scales, 3), flat(g.log_scales, 3), 3},
        {"opacity_logits", "opacities", std::span<float>(cloud_.opacity_logits), std::span<const float>(g.opacity_logits), 1},
        {"sh_coeffs", "sh", flat(cloud_.sh_coeffs, kShStride), flat(g.sh_coeffs, kShStride), kShStride},
    };
    const DeformParams<float>& dgrads = bwd.deform ? bwd.deform->params : zero_deform_grads_;
    auto value_blocks = field_.params().blocks();
    const auto grad_blocks = dgrads.blocks();
    for (std::size_t b = 0; b < value_blocks.size(); ++b) {
        tensors.push_back({value_blocks[b].name, value_blocks[b].group == ParamGroup::Grids ? "grids" : "decoder",
                           value_blocks[b].values, grad_blocks[b].values, 0});
    }
    std::span<const std::uint8_t> skip;
    if (gate && saliency_.config.freeze_canonical) skip = saliency_.frozen;
    const GroupRates rates(config_.lr, position_rate());
    optimizer_step<float>(tensors, optimizer_, rates, skip);
    cloud_.normalize_rotations();
    ++iteration_;
    stats.iteration = iteration_;

    if (gate) {
        const int deform_iters = iteration_ - config_.static_warmup;
        if (deform_iters % saliency_.config.refresh_interval == 0) {
            RefreshReport report = refresh_partition(saliency_, deform_iters);
            report.iteration = iteration_;
            if (report.applied) stats.refresh = report;
        }
    }
    const auto& pc = config_.prune;
    if (pc.enabled && iteration_ >= pc.start && iteration_ % pc.interval == 0 && iteration_ < config_.iterations) {
        std::size_t survivors = 0;
        for (const float o : cloud_.opacity_logits)
            if (static_cast<double>(sigmoid(o)) >= pc.opacity_floor) ++survivors;
        if (survivors > 0) stats.pruned = prune(cloud_, &optimizer_, slot_strides(), &saliency_, pc.opacity_floor).removed;
    }
    stats.wall_ms = elapsed_ms(start);
    return stats;
}

EvalResult Trainer::evaluate(const std::string& split) const {
    if (eval_images_split_ != split) {
        eval_images_ = load_split_images(dataset_, dataset_.split(split));
        eval_images_split_ = split;
    }
    return evaluate_model(model(), dataset_, split, eval_images_, options_);
}

SceneModel Trainer::model() const {
    SceneModel m;
    m.cloud = cloud_;
    m.field = field_;
    m.saliency = saliency_;
    m.iteration = iteration_;
    m.static_warmup = config_.static_warmup;
    return m;
}

std::vector<CheckpointSection> Trainer::checkpoint_sections() const {
    ByteWriter w;
    w.put(static_cast<std::uint32_t>(iteration_));
    w.put(static_cast<std::uint32_t>(config_.static_warmup));
    w.put(network_evaluations_);
    w.put(cache_fallbacks_);
    w.put_string(rng_.state());
    // Run placement does not affect results and stays out of the checkpoint.
    TrainConfig copy = config_;
    copy.output_dir.clear();
    copy.threads = 0;
    ConfigSchema schema;
    copy.bind(schema);
    std::ostringstream cfg;
    schema.print(cfg);
    w.put_string(cfg.str());
    std::vector<CheckpointSection> sections;
    sections.push_back(make_section("DEFM", encode_deformation(field_)));
    sections.push_back(make_section("SALI", encode_saliency(saliency_)));
    sections.push_back(make_section("OPTM", encode_optimizer(optimizer_)));
    sections.push_back(make_section("TRNS", std::move(w.bytes())));
    return sections;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    write_checkpoint(path, cloud_, checkpoint_sections());
}

TrainSummary Trainer::run() {
    TrainSummary summary;
    const bool write = !config_.output_dir.empty();
    const std::filesystem::path dir = config_.output_dir;
    if (write) std::filesystem::create_directories(dir);
    if (config_.iterations == 0) {
        summary.gaussians = cloud_.size();
        if (write) {
            summary.checkpoint = dir / "checkpoint.dmsr";
            save_checkpoint(summary.checkpoint);
        }
        return summary;
    }

    std::ofstream metrics, timing, evals, refresh;
    auto open = [&](std::ofstream& out, const char* name) {
        out.open(dir / name);
        if (!out) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
    };
    if (write) {
        std::ofstream cfg(dir / "config.txt");
        TrainConfig copy = config_;
        ConfigSchema schema;
        copy.bind(schema);
        schema.print(cfg);
        open(metrics, "metrics.csv");
        open(timing, "timing.csv");
        open(evals, "eval.csv");
        open(refresh, "saliency.csv");
        metrics << "iteration,loss,psnr,gaussians,active_count,network_evals\n";
        timing << "iteration,wall_ms\n";
        evals << "iteration,split,psnr,ssim,gaussians,frozen\n";
        write_refresh_csv_header(refresh);
    }

    const bool can_eval = !dataset_.split(config_.eval_split).empty();
    std::optional<EvalResult> last_eval;
    while (iteration_ < config_.iterations) {
        const StepStats s = step();
        summary.train_ms += s.wall_ms;
        if (write) {
            metrics << s.iteration << ',' << format_double(s.loss) << ',' << format_double(s.psnr) << ',' << s.gaussians
                    << ',' << s.active << ',' << s.network_evaluations << '\n';
            timing << s.iteration << ',' << format_double(s.wall_ms) << '\n';
            if (s.refresh) write_refresh_csv_row(refresh, *s.refresh);
        }
        const bool last = iteration_ == config_.iterations;
        if (can_eval && (last || (config_.eval_interval > 0 && iteration_ % config_.eval_interval == 0))) {
            last_eval = evaluate(config_.eval_split);
            if (!summary.ms_to_target && last_eval->mean_psnr >= config_.target_psnr) {
                summary.ms_to_target = summary.train_ms;
                summary.iterations_to_target = iteration_;
            }
            if (write) {
                evals << iteration_ << ',' << config_.eval_split << ',' << format_double(last_eval->mean_psnr) << ','
                      << format_double(last_eval->mean_ssim) << ',' << cloud_.size() << ',' << saliency_.frozen_count()
                      << '\n';
            }
        }
        if (write && config_.checkpoint_interval > 0 && iteration_ % config_.checkpoint_interval == 0 && !last) {
            save_checkpoint(dir / ("checkpoint_" + std::to_string(iteration_) + ".dmsr"));
        }
        if (config_.log_interval > 0 && (iteration_ % config_.log_interval == 0 || last)) {
            std::cerr << "iter " << iteration_ << "  loss " << s.loss << "  train_psnr " << s.psnr << "  gaussians "
                      << cloud_.size() << "  frozen " << saliency_.frozen_count();
            if (last_eval) std::cerr << "  " << config_.eval_split << "_psnr " << last_eval->mean_psnr;
            std::cerr << "  ms " << s.wall_ms << '\n';
        }
    }

    summary.iterations = iteration_;
    summary.network_evaluations = network_evaluations_;
    summary.cache_fallbacks = cache_fallbacks_;
    summary.gaussians = cloud_.size();
    summary.frozen = saliency_.frozen_count();
    if (last_eval) {
        summary.final_psnr = last_eval->mean_psnr;
        summary.final_ssim = last_eval->mean_ssim;
    } else {
        summary.final_psnr = summary.final_ssim = std::numeric_limits<double>::quiet_NaN();
    }
    if (write) {
        summary.checkpoint = dir / "checkpoint.dmsr";
        save_checkpoint(summary.checkpoint);
        nlohmann::json j = {{"iterations", summary.iterations},
                            {"final_psnr", summary.final_psnr},
                            {"final_ssim", summary.final_ssim},
                            {"train_ms", summary.train_ms},
                            {"network_evaluations", summary.network_evaluations},
                            {"cache_fallbacks", summary.cache_fallbacks},
                            {"gaussians", summary.gaussians},
                            {"frozen", summary.frozen}};
        j["ms_to_target"] = summary.ms_to_target ? nlohmann::json(*summary.ms_to_target) : nlohmann::json(nullptr);
        j["iterations_to_target"] =
            summary.iterations_to_target ? nlohmann::json(*summary.iterations_to_target) : nlohmann::json(nullptr);
        std::ofstream out(dir / "summary.json");
        out << j.dump(2) << '\n';
    }
    return summary;
}

}  // namespace dmsr
