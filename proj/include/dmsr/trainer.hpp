// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dmsr/checkpoint.hpp"
#include "dmsr/config.hpp"
#include "dmsr/deformation.hpp"
#include "dmsr/gaussian.hpp"
#include "dmsr/loss.hpp"
#include "dmsr/optimizer.hpp"
#include "dmsr/pipeline.hpp"
#include "dmsr/random.hpp"
#include "dmsr/saliency.hpp"
#include "dmsr/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dmsr {

struct LearningRateConfig {
    double positions = 1.6e-4;
    // Position rate decays log-linearly to positions * final_factor.
    double position_final_factor = 0.01;
    bool scale_positions_by_extent = true;
    double rotations = 1e-3;
    double scales = 5e-3;
    double opacities = 5e-2;
    double sh = 2.5e-3;
    double grids = 1.6e-3;
    double decoder = 1.6e-3;
};

struct PruneConfig {
    bool enabled = true;
    double opacity_floor = 0.005;
    int start = 500;
    int interval = 500;
};

struct TrainConfig {
    std::string dataset;
    std::string output_dir;
    int iterations = 4000;
    std::uint64_t seed = 0;
    int threads = 0;
    LearningRateConfig lr;
    LossWeights loss;
    // Canonical-only iterations before the deformation field switches on.
    int static_warmup = 500;
    SaliencyConfig saliency;
    DeformationConfig deformation;
    bool disable_saliency = false;
    bool disable_manifold = false;
    PruneConfig prune;
    int init_count = 600;
    double init_opacity = 0.1;
    double init_scale_factor = 0.5;
    int sh_degree = 1;
    std::string background = "white";
    int tile_size = 16;
    int eval_interval = 100;
    std::string eval_split = "test";
    double target_psnr = 28.0;
    int checkpoint_interval = 0;
    int log_interval = 0;

    void bind(ConfigSchema& schema);
    void validate() const;
    // Saliency and deformation configs with the ablation flags applied.
    SaliencyConfig effective_saliency() const;
    DeformationConfig effective_deformation(const DynamicDataset& dataset) const;
};

// Loads a key=value file (if path is non-empty), then DMSR_* environment
// overrides, then validates.
TrainConfig load_train_config(const std::filesystem::path& path);

struct PruneResult {
    // remap[old] = new index, or -1 when removed.
    std::vector<std::int64_t> remap;
    std::size_t removed = 0;
};

// Removes Gaussians with sigmoid(opacity_logit) < floor and compacts the
// cloud, the optimizer moments of per-Gaussian tensors (slot_strides[s] > 0)
// and the saliency state when given.
template <typename Scalar>
PruneResult prune(GaussianCloud<Scalar>& cloud, OptimizerState<Scalar>* optimizer,
                  const std::vector<std::size_t>& slot_strides, SaliencyState<Scalar>* saliency, double floor);

struct EvalResult {
    std::string split;
    std::vector<double> psnr;
    std::vector<double> ssim;
    std::vector<double> render_ms;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

struct TrainSummary {
    int iterations = 0;
    double final_psnr = 0;
    double final_ssim = 0;
    double train_ms = 0;
    std::optional<double> ms_to_target;
    std::optional<int> iterations_to_target;
    std::uint64_t network_evaluations = 0;
    std::uint64_t cache_fallbacks = 0;
    std::size_t gaussians = 0;
    std::size_t frozen = 0;
    std::filesystem::path checkpoint;
};

// A trained model as stored in a checkpoint.
struct SceneModel {
    GaussianCloud<float> cloud;
    std::optional<DeformationField<float>> field;
    std::optional<SaliencyState<float>> saliency;
    int iteration = 0;
    int static_warmup = 0;

    bool deformation_active() const { return field && iteration >= static_warmup; }
};

SceneModel load_model(const std::filesystem::path& checkpoint);

// Renders one frame of a model with the training-time pipeline.
ViewForward<float> render_model(const SceneModel& model, const Camera<float>& camera, float t,
                                const RenderOptions<float>& options);

EvalResult evaluate_model(const SceneModel& model, const DynamicDataset& dataset, const std::string& split,
                          const std::vector<Image<float>>& images, const RenderOptions<float>& options);

struct StepStats {
    int iteration = 0;  // 1-based index of the finished iteration
    double loss = 0;
    double psnr = 0;  // training view
    std::size_t gaussians = 0;
    std::size_t active = 0;
    std::size_t network_evaluations = 0;
    double wall_ms = 0;
    std::optional<RefreshReport> refresh;
    std::size_t pruned = 0;
};

class Trainer {
public:
    Trainer(TrainConfig config, DynamicDataset dataset);

    // One optimization iteration. Errors are rethrown with the iteration
    // number prepended.
    StepStats step();
    // Runs the remaining iterations, evaluating and logging along the way.
    // Writes outputs when config.output_dir is non-empty.
    TrainSummary run();

    EvalResult evaluate(const std::string& split) const;
    SceneModel model() const;
    std::vector<CheckpointSection> checkpoint_sections() const;
    void save_checkpoint(const std::filesystem::path& path) const;

    const TrainConfig& config() const { return config_; }
    const DynamicDataset& dataset() const { return dataset_; }
    const GaussianCloud<float>& cloud() const { return cloud_; }
    const DeformationField<float>& field() const { return field_; }
    const SaliencyState<float>& saliency() const { return saliency_; }
    const RenderOptions<float>& render_options() const { return options_; }
    int iteration() const { return iteration_; }
    std::uint64_t network_evaluations() const { return network_evaluations_; }
    bool gating() const { return saliency_.config.enabled; }
    bool deformation_on() const { return iteration_ >= config_.static_warmup; }

private:
    void initialize_cloud();
    StepStats step_impl();
    std::vector<std::size_t> slot_strides() const;
    double position_rate() const;

    TrainConfig config_;
    DynamicDataset dataset_;
    std::vector<Image<float>> train_images_;
    mutable std::vector<Image<float>> eval_images_;
    mutable std::string eval_images_split_;
    RenderOptions<float> options_;
    float scene_extent_ = 1;

    GaussianCloud<float> cloud_;
    DeformationField<float> field_;
    DeformParams<float> zero_deform_grads_;
    SaliencyState<float> saliency_;
    OptimizerState<float> optimizer_;
    Rng rng_;

    int iteration_ = 0;
    std::uint64_t network_evaluations_ = 0;
    std::uint64_t cache_fallbacks_ = 0;
};

}  // namespace dmsr
