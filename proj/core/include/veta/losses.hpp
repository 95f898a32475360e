#pragma once

#include <array>
#include <string_view>

#include "veta/tfe.hpp"
#include "veta/types.hpp"

namespace veta {

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

/// A scalar objective together with its gradient w.r.t. the prediction.
struct LossValue {
    double value = 0.0;
    Image grad;
};

/// Mean absolute difference.
double l1_loss(const Image& pred, const Image& gt);
LossValue l1_loss_with_grad(const Image& pred, const Image& gt);

/// Mean SSIM over all fully covered 11×11 windows (no padding).
double ssim(const Image& pred, const Image& gt, const SsimConfig& cfg = {});

/// 1 − mean SSIM and its gradient.
LossValue dssim_loss(const Image& pred, const Image& gt, const SsimConfig& cfg = {});

enum class MonoMode {
    Literal,    // Π_r sim_r
    Corrected,  // 1 − Π_r sim_r
};

MonoMode parse_mono_mode(std::string_view s);
std::string_view mono_mode_name(MonoMode m);

struct MonoResult {
    double value = 0.0;
    std::array<double, 3> similarity{};  // clamped cosine similarity per aspect (App, Edg, Frq)
    Image grad;
};

/// Feature-space similarity loss over the three TFE aspects.
MonoResult mono_ssim(const Image& pred, const Image& gt, const ThermalFeatureExtractor& tfe, MonoMode mode,
                     bool with_grad = true);

/// Cosine similarity clamped to [0, 1]; zero-norm vectors give 0.
double clamped_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct LossConfig {
    double lambda = 0.2;        // D-SSIM weight
    double lambda_mono = 0.2;   // MonoSSIM weight once the switch iteration is reached
    long switch_iter = 20000;
    MonoMode mono_mode = MonoMode::Corrected;
    SsimConfig ssim;

    /// Throws ConfigError unless 0 <= λ, 0 <= λ_Mono and λ + λ_Mono < 1.
    void validate() const;
};

struct LossWeights {
    double l1 = 0.0;
    double mono = 0.0;
    double dssim = 0.0;
};

/// Coefficients on (L1, Mono, D-SSIM) in effect at `iter`.
LossWeights loss_weights(long iter, const LossConfig& cfg);

struct LossBreakdown {
    double l1 = 0.0;
    double dssim = 0.0;
    double mono = 0.0;  // 0 while the Mono term is inactive
    bool mono_active = false;
    LossWeights weights;
    double total = 0.0;
    Image grad;
};

/// Staged photometric objective: (1−λ)L1 + λ·D-SSIM before the switch,
/// (1−λ_Mono−λ)L1 + λ_Mono·Mono + λ·D-SSIM from the switch on.
LossBreakdown total_loss(const Image& pred, const Image& gt, long iter, const LossConfig& cfg,
                         const ThermalFeatureExtractor& tfe);

}  // namespace veta
