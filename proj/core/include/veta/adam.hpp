#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Core>

#include "veta/gaussian.hpp"

namespace veta {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

/// First/second moments for one flat parameter group. For a per-Gaussian
/// field with C columns, row i occupies [i·C, (i+1)·C).
struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;

    static AdamState zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
    Eigen::Index size() const { return m.size(); }
};

/// One bias-corrected Adam update of `param` in place. When `column_scale`
/// is non-empty, entry i uses lr · column_scale[i % column_scale.size()].
void adam_update(std::span<double> param, std::span<const double> grad, AdamState& state, double lr,
                 const AdamConfig& cfg, std::span<const double> column_scale = {});

/// Moments for the five GaussianCloud fields, in kFieldNames order.
struct GaussianAdam {
    std::array<AdamState, 5> fields;

    static GaussianAdam zeros_like(const GaussianCloud& cloud);
    /// Keeps the rows selected by `keep`.
    void select(std::span<const std::uint8_t> keep, const GaussianCloud& shape);
    /// Appends `count` zero rows.
    void append_zero(std::size_t count, const GaussianCloud& shape);
    bool aligned_with(const GaussianCloud& cloud) const;
};

/// Rounds every entry to the nearest float so that float32 checkpoints store
/// the exact training state.
void quantize_to_float(std::span<double> values);
void quantize_to_float(GaussianCloud& cloud);
void quantize_to_float(AdamState& state);

}  // namespace veta
