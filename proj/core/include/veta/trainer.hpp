#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "veta/adam.hpp"
#include "veta/camera.hpp"
#include "veta/deformation.hpp"
#include "veta/gaussian.hpp"
#include "veta/losses.hpp"
#include "veta/tfe.hpp"

namespace veta {

struct LearningRates {
    double position_init = 1.6e-4;  // multiplied by the scene extent
    double position_final = 1.6e-6;
    double opacity = 0.05;
    double scale = 5e-3;
    double rotation = 1e-3;
    double sh = 2.5e-3;
    double sh_rest_divisor = 20.0;  // higher-order SH use sh / divisor
    double deform_init = 1.6e-4;
    double deform_final = 1.6e-6;
};

struct TrainConfig {
    long total_iters = 30000;
    long densify_from = 500;
    long densify_until = 20000;
    long densify_interval = 100;
    long opacity_reset_interval = 3000;
    double grad_threshold = 2e-4;
    double min_opacity = 0.005;
    double percent_dense = 0.01;
    double split_factor = 1.6;
    std::size_t max_gaussians = 200000;

    LossConfig loss;
    LearningRates lr;
    DeformationConfig net;

    bool use_deformation = true;
    bool frustum_mask = true;
    double background = 0.0;
    double scene_extent = 1.0;
    int sh_degree = kMaxShDegree;
    std::uint64_t seed = 0;
    std::uint64_t tfe_seed = 0;

    /// Defaults with every iteration horizon scaled by total_iters / 30000.
    static TrainConfig desk_scale(long total_iters);

    /// Throws ConfigError on inconsistent settings.
    void validate() const;

    /// Canonical "key=value" lines sorted by key; parse_text inverts it
    /// exactly (doubles are written with 17 significant digits).
    std::string to_text() const;
    static TrainConfig parse_text(const std::string& text);
    std::map<std::string, std::string> to_map() const;
    void set(const std::string& key, const std::string& value);
};

/// lr_final + ½(lr0 − lr_final)(1 + cos(π·iter/total)).
double cosine_anneal(double lr0, double lr_final, long iter, long total);

/// Log-linear interpolation from lr0 to lr_final over `total` iterations.
double exponential_decay(double lr0, double lr_final, long iter, long total);

struct TrainState {
    long iteration = 0;
    GaussianAdam gaussian_adam;
    AdamState net_adam;
    Eigen::VectorXd grad_accum;  // Σ ‖∇μ̂‖ (NDC units) per Gaussian
    Eigen::VectorXd grad_count;  // views in which the Gaussian was visible
    std::mt19937_64 rng;
    std::vector<std::uint32_t> view_order;
    std::size_t view_cursor = 0;

    static TrainState fresh(const GaussianCloud& cloud, const DeformationNet& net, std::uint64_t seed);
    bool aligned_with(const GaussianCloud& cloud) const;
};

/// Next training view index from a seeded, reshuffled-per-epoch order.
std::uint32_t next_view(TrainState& state, std::size_t view_count);

struct TrainingView {
    CameraView cam;
    Image image;
};

struct StepLog {
    long iter = 0;
    double l1 = 0.0;
    double dssim = 0.0;
    double mono = 0.0;
    double total = 0.0;
    LossWeights weights;
    bool mono_active = false;
    std::size_t gaussians = 0;
    std::size_t deform_evals = 0;
    double step_ms = 0.0;
    std::uint32_t view = 0;
    bool densified = false;
    bool opacity_reset = false;

    /// `iter=<n> l1=<f> dssim=<f> mono=<f> total=<f> gaussians=<n> deform_evals=<n> step_ms=<f>`
    std::string format() const;
};

/// Renders the (optionally deformed) cloud for one view.
Image render_view(const GaussianCloud& cloud, const DeformationNet& net, const CameraView& cam,
                  const TrainConfig& cfg);

/// One optimization step on `view`: mask, deform, render, loss, backward,
/// Adam, statistics and, on schedule, densification and opacity reset.
StepLog train_step(TrainState& state, GaussianCloud& cloud, DeformationNet& net, const ThermalFeatureExtractor& tfe,
                   const TrainingView& view, std::uint32_t view_index, const TrainConfig& cfg);

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
    bool capped = false;  // growth skipped because of max_gaussians
};

/// Clone/split by mean positional gradient, then prune by opacity. Moments
/// of new rows are zero and statistics are reset afterwards.
DensifyReport densify_and_prune(TrainState& state, GaussianCloud& cloud, const TrainConfig& cfg);

/// Caps every opacity at 0.01 and clears the opacity moments.
void reset_opacity(TrainState& state, GaussianCloud& cloud);

/// Everything needed to resume or evaluate a run.
struct Model {
    TrainConfig config;
    GaussianCloud cloud;
    DeformationNet net;
    ThermalFeatureExtractor tfe;
    TrainState state;
    /// Camera model of the scene the model was trained on, when known.
    std::optional<Intrinsics> intrinsics;

    /// Fresh model around an initial cloud. The cloud and network are
    /// rounded to float precision.
    static Model create(const TrainConfig& config, GaussianCloud initial);
};

/// Runs train_step over a fixed set of views.
class Trainer {
public:
    Trainer(Model model, std::vector<TrainingView> views);

    StepLog step();
    /// Steps until model().state.iteration == until; `on_step` sees each log.
    void run(long until, const std::function<void(const StepLog&)>& on_step = {});

    Model& model() { return model_; }
    const Model& model() const { return model_; }

private:
    Model model_;
    std::vector<TrainingView> views_;
};

}  // namespace veta
