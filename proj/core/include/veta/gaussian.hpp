#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "veta/types.hpp"

namespace veta {

/// Row-major parameter block; one row per Gaussian.
using ParamBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMaxShDegree = 3;
inline constexpr double kShOffset = 0.5;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Structure-of-arrays store of N Gaussian primitives.
///
/// Scales live in log space and opacities as logits so that an unconstrained
/// optimizer never leaves the valid range. Rotations are (w, x, y, z)
/// quaternions that the trainer renormalizes after every update.
struct GaussianCloud {
    ParamBlock positions;       // N x 3
    ParamBlock rotations;       // N x 4
    ParamBlock log_scales;      // N x 3
    ParamBlock opacity_logits;  // N x 1
    ParamBlock sh_coeffs;       // N x K, K = (sh_degree + 1)^2
    int sh_degree = kMaxShDegree;

    GaussianCloud() = default;
    GaussianCloud(std::size_t n, int degree);

    std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
    int sh_count() const { return sh_coeff_count(sh_degree); }

    Vec3 position(std::size_t i) const { return positions.row(static_cast<Eigen::Index>(i)).transpose(); }
    Quat rotation(std::size_t i) const { return rotations.row(static_cast<Eigen::Index>(i)).transpose(); }
    Vec3 log_scale(std::size_t i) const { return log_scales.row(static_cast<Eigen::Index>(i)).transpose(); }
    double opacity_logit(std::size_t i) const { return opacity_logits(static_cast<Eigen::Index>(i), 0); }
    std::span<const double> sh(std::size_t i) const {
        return {sh_coeffs.data() + i * static_cast<std::size_t>(sh_coeffs.cols()),
                static_cast<std::size_t>(sh_coeffs.cols())};
    }

    /// Throws InvalidParameter when the leading dimensions disagree, a value is
    /// non-finite, or a quaternion is degenerate.
    void validate() const;

    /// Keeps rows where keep[i] is true, preserving order.
    GaussianCloud select(std::span<const std::uint8_t> keep) const;
    void append(const GaussianCloud& other);
    void renormalize_rotations();

    static constexpr std::array<std::string_view, 5> kFieldNames = {
        "positions", "rotations", "log_scales", "opacity_logits", "sh_coeffs"};

    template <typename F>
    void for_each_field(F&& f) {
        f(kFieldNames[0], positions);
        f(kFieldNames[1], rotations);
        f(kFieldNames[2], log_scales);
        f(kFieldNames[3], opacity_logits);
        f(kFieldNames[4], sh_coeffs);
    }
    template <typename F>
    void for_each_field(F&& f) const {
        f(kFieldNames[0], positions);
        f(kFieldNames[1], rotations);
        f(kFieldNames[2], log_scales);
        f(kFieldNames[3], opacity_logits);
        f(kFieldNames[4], sh_coeffs);
    }
};

/// Gradients with the same shapes as a GaussianCloud.
struct ParamGradients {
    ParamBlock positions;
    ParamBlock rotations;
    ParamBlock log_scales;
    ParamBlock opacity_logits;
    ParamBlock sh_coeffs;

    static ParamGradients zeros_like(const GaussianCloud& cloud);
    std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
    void set_zero();
    bool all_finite() const;
    ParamGradients& operator+=(const ParamGradients& other);

    template <typename F>
    void for_each_field(F&& f) {
        f(GaussianCloud::kFieldNames[0], positions);
        f(GaussianCloud::kFieldNames[1], rotations);
        f(GaussianCloud::kFieldNames[2], log_scales);
        f(GaussianCloud::kFieldNames[3], opacity_logits);
        f(GaussianCloud::kFieldNames[4], sh_coeffs);
    }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a (w, x, y, z) quaternion. The formula assumes unit norm.
Mat3 quat_to_rotation(const Quat& q);

/// Σ = R S Sᵀ Rᵀ with S = diag(exp(log_scale)). Requires a unit quaternion
/// (within 1e-6) and finite inputs.
Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale);

struct CovarianceGrad {
    Quat d_rotation = Quat::Zero();
    Vec3 d_log_scale = Vec3::Zero();
};

/// Pulls dL/dΣ (symmetric) back to the quaternion and log-scales.
CovarianceGrad build_covariance_backward(const Quat& rotation, const Vec3& log_scale, const Mat3& dL_dcov);

Quat normalize_quat(const Quat& q);
/// Gradient through q / |q|.
Quat normalize_quat_backward(const Quat& q, const Quat& dL_dnormalized);

struct Activated {
    Eigen::VectorXd opacities;  // σ(o)
    ParamBlock scales;          // exp(s)
    ParamBlock rotations;       // unit quaternions
};

Activated activations(const GaussianCloud& cloud);

/// Real spherical-harmonic basis up to `degree` evaluated at a unit direction.
std::array<double, 16> sh_basis(int degree, const Vec3& dir);

/// Raw SH sum Σ_k SH_k Y_k(dir).
double eval_thermal_intensity(std::span<const double> sh, const Vec3& view_dir);

/// Renderer intensity: clamp(Σ_k SH_k Y_k(dir) + 0.5, 0, 1).
double thermal_intensity(std::span<const double> sh, const Vec3& view_dir);

struct ShGrad {
    std::array<double, 16> d_sh{};
    Vec3 d_dir = Vec3::Zero();  // w.r.t. the unit direction components
};

/// Gradient of the raw SH sum given dL/d(raw).
ShGrad eval_thermal_intensity_backward(std::span<const double> sh, const Vec3& view_dir, double dL_dvalue);

}  // namespace veta
