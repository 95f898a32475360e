#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "veta/camera.hpp"
#include "veta/gaussian.hpp"

namespace veta {

/// Sinusoidal encoding [x, sin(2^k π x), cos(2^k π x)]_{k < num_freqs},
/// grouped per input component.
struct PositionalEncoding {
    int num_freqs = 0;
    bool include_input = true;

    int output_dim(int input_dim) const { return input_dim * (2 * num_freqs + (include_input ? 1 : 0)); }
    void encode(std::span<const double> x, std::span<double> out) const;
    std::vector<double> encode(std::span<const double> x) const;
};

inline constexpr double kTranslationBoundFraction = 0.05;

struct DeformationConfig {
    int depth = 8;
    int width = 256;
    int skip_layer = 4;  // the raw input is re-injected after this hidden layer
    int position_freqs = 10;
    int time_freqs = 6;
    /// Feed camera position and optical axis (unencoded) to the network.
    bool view_dependent = true;
    /// Per-component clamp B on δμ, applied as B·tanh(raw/B). Scenes set it
    /// to kTranslationBoundFraction · scene extent.
    double translation_bound = 0.05;
    /// Clamp on δs (log-scale offset), applied the same way.
    double log_scale_bound = 0.25;
    /// Camera positions enter as (x − scene_center) / scene_extent.
    Vec3 scene_center = Vec3::Zero();
    double scene_extent = 1.0;
    std::uint64_t seed = 0;
};

/// MLP F_θ mapping (γ(μ), γ(t), x, v) to (δμ, δr, δs).
///
/// All weights live in one flat vector; layer l occupies a column-major
/// (out × in) weight block followed by its bias. The last three layers are the
/// δμ, δr and δs heads, zero-initialized so the field starts as the identity.
class DeformationNet {
public:
    struct LayerShape {
        int in = 0;
        int out = 0;
        std::size_t weight_offset = 0;
        std::size_t bias_offset = 0;
    };

    DeformationNet() = default;
    explicit DeformationNet(const DeformationConfig& config);

    const DeformationConfig& config() const { return config_; }
    int input_dim() const { return input_dim_; }
    const std::vector<LayerShape>& layers() const { return layers_; }
    std::size_t hidden_layer_count() const { return static_cast<std::size_t>(config_.depth); }

    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

    /// Fills one input column (γ(μ), γ(t), x_normalized, v).
    void build_input(const Vec3& position, const CameraView& cam, std::span<double> out) const;

    /// Replaces all head weights with random values (used by tests and MI
    /// diagnostics that need a non-trivial field).
    void randomize_heads(double stddev, std::uint64_t seed);

private:
    DeformationConfig config_;
    PositionalEncoding position_encoding_;
    PositionalEncoding time_encoding_;
    int input_dim_ = 0;
    std::vector<LayerShape> layers_;
    Eigen::VectorXd params_;
};

/// The clamp B on each component of δμ.
double deformation_bound(const DeformationNet& net);

/// Frustum settings for which masking cannot drop a Gaussian that the
/// deformation could move or grow into view: margin √3·B and radius
/// inflation exp(B_s).
struct FrustumEnvelope {
    double margin = 0.0;
    FrustumOptions options;
};
FrustumEnvelope deformation_envelope(const DeformationNet& net);

/// Saved activations for the backward pass.
struct DeformContext {
    std::vector<std::uint32_t> indices;  // masked Gaussians, ascending
    std::vector<Eigen::MatrixXd> inputs;                       // per chunk: input_dim × m
    std::vector<std::vector<Eigen::MatrixXd>> activations;    // per chunk, per hidden layer: width × m
    std::vector<Eigen::MatrixXd> head_raw;                     // per chunk: 10 × m (δμ raw, δr, δs raw)
    ParamBlock pre_normalized_rotations;                       // |indices| × 4, r + δr
};

struct DeformResult {
    GaussianCloud cloud;
    DeformContext ctx;
    std::size_t evaluations = 0;  // MLP forward evaluations == popcount(mask)
};

/// Offsets masked Gaussians by F_θ(γ(sg(μ)), γ(t), x, v). Unmasked rows are
/// copied bit-for-bit.
DeformResult deform(const DeformationNet& net, const GaussianCloud& cloud, const CameraView& cam, const Mask& mask);

struct DeformGradients {
    ParamGradients cloud;
    Eigen::VectorXd net;
};

/// Pulls gradients on the deformed cloud back to the base cloud and to θ.
/// The network input carries a stop-gradient, so dL/dμ only flows through
/// μ + δμ.
DeformGradients deform_backward(const DeformationNet& net, const DeformContext& ctx,
                                const ParamGradients& dL_ddeformed);

/// Raw head outputs (δμ, δr, δs) for one Gaussian, mostly for diagnostics.
struct DeformationOffsets {
    Vec3 d_position = Vec3::Zero();
    Quat d_rotation = Quat::Zero();
    Vec3 d_log_scale = Vec3::Zero();
};
DeformationOffsets evaluate_offsets(const DeformationNet& net, const Vec3& position, const CameraView& cam);

}  // namespace veta
