#include <algorithm>
#include <cmath>
#include <random>

#include "veta/trainer.hpp"

namespace veta {

DensifyReport densify_and_prune(TrainState& state, GaussianCloud& cloud, const TrainConfig& cfg) {
    if (!state.aligned_with(cloud)) throw ShapeMismatch("densify_and_prune: state is not aligned with the cloud");
    const std::size_t n = cloud.size();
    const double dense_limit = cfg.percent_dense * cfg.scene_extent;
    std::vector<std::uint8_t> clone(n, 0), split(n, 0);
    std::size_t n_clone = 0, n_split = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double count = state.grad_count[r];
        const double mean_grad = count > 0.0 ? state.grad_accum[r] / count : 0.0;
        if (!(mean_grad > cfg.grad_threshold)) continue;
        const double max_scale = std::exp(cloud.log_scales.row(r).maxCoeff());
        if (max_scale < dense_limit) {
            clone[i] = 1;
            ++n_clone;
        } else {
            split[i] = 1;
            ++n_split;
        }
    }

    DensifyReport report;
    if (n + n_clone + n_split > cfg.max_gaussians) {
        report.capped = true;
        std::fill(clone.begin(), clone.end(), 0);
        std::fill(split.begin(), split.end(), 0);
        n_clone = n_split = 0;
    }

    GaussianCloud grown = cloud;
    if (n_clone > 0) grown.append(cloud.select(clone));
    if (n_split > 0) {
        GaussianCloud children(2 * n_split, cloud.sh_degree);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double log_factor = std::log(cfg.split_factor);
        Eigen::Index c = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!split[i]) continue;
            const auto r = static_cast<Eigen::Index>(i);
            const Vec3 scale = cloud.log_scale(i).array().exp();
            const Mat3 rot = quat_to_rotation(normalize_quat(cloud.rotation(i)));
            for (int k = 0; k < 2; ++k, ++c) {
                Vec3 z;
                for (int d = 0; d < 3; ++d) z[d] = normal(state.rng) * scale[d];
                children.positions.row(c) = (rot * z + cloud.position(i)).transpose();
                children.rotations.row(c) = cloud.rotations.row(r);
                children.log_scales.row(c) = cloud.log_scales.row(r).array() - log_factor;
                children.opacity_logits.row(c) = cloud.opacity_logits.row(r);
                children.sh_coeffs.row(c) = cloud.sh_coeffs.row(r);
            }
        }
        grown.append(children);
    }
    GaussianAdam adam = state.gaussian_adam;
    adam.append_zero(n_clone + 2 * n_split, cloud);

    const std::size_t total = grown.size();
    std::vector<std::uint8_t> keep(total, 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (split[i]) keep[i] = 0;
    }
    for (std::size_t i = 0; i < total; ++i) {
        if (sigmoid(grown.opacity_logit(i)) < cfg.min_opacity) keep[i] = 0;
    }
    std::size_t kept = 0;
    for (auto k : keep) kept += k;
    report.cloned = n_clone;
    report.split = n_split;
    report.pruned = total - kept - n_split;

    cloud = grown.select(keep);
    quantize_to_float(cloud);
    adam.select(keep, cloud);
    state.gaussian_adam = std::move(adam);
    state.grad_accum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cloud.size()));
    state.grad_count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cloud.size()));
    return report;
}

void reset_opacity(TrainState& state, GaussianCloud& cloud) {
    const double cap = logit(0.01);
    for (Eigen::Index i = 0; i < cloud.opacity_logits.rows(); ++i) {
        cloud.opacity_logits(i, 0) = std::min(cloud.opacity_logits(i, 0), cap);
    }
    quantize_to_float({cloud.opacity_logits.data(), static_cast<std::size_t>(cloud.opacity_logits.size())});
    AdamState& s = state.gaussian_adam.fields[3];
    s.m.setZero();
    s.v.setZero();
}

}  // namespace veta
