#pragma once

#include <cstdint>
#include <vector>

#include "veta/camera.hpp"
#include "veta/gaussian.hpp"
#include "veta/types.hpp"

namespace veta {

inline constexpr double kAlphaMax = 0.99;
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kTransmittanceMin = 1e-4;

struct RenderOptions {
    double background = 0.0;
    /// Oracle-comparison mode: every projected Gaussian is tested against
    /// every pixel, and neither the 1/255 alpha floor nor the transmittance
    /// early exit is applied. The 0.99 alpha cap stays on.
    bool exact = false;
    int tile_size = 16;
};

struct RenderedImage {
    Image intensity;
    Image alpha;
};

/// Per-Gaussian state kept from the forward pass.
struct SplatRecord {
    bool visible = false;
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;  // Σ̂⁻¹ = [[a, b], [b, c]]
    double depth = 0.0;
    double radius = 0.0;
    double opacity = 0.0;  // σ(o)
    double color = 0.0;    // clamped intensity
    bool color_clamped = false;
    Vec3 view_vec = Vec3::Zero();  // μ - camera center
    Quat unit_rotation = Quat::Zero();
    Mat3 cov3d = Mat3::Zero();
};

/// Everything render_backward needs, recorded by render.
struct RenderContext {
    GaussianCloud cloud;
    CameraView cam;
    RenderOptions options;
    std::vector<SplatRecord> splats;
    std::vector<std::uint32_t> order;  // visible Gaussians by (depth, index)
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> tile_lists;
    Image final_transmittance;
    std::vector<std::uint32_t> n_contrib;  // per pixel: how far into its tile list blending ran
};

struct RenderResult {
    RenderedImage image;
    RenderContext ctx;
};

/// Alpha-composites the cloud front to back:
/// C(p) = Σ_i c_i α_i Π_{j<i}(1 − α_j) + background · Π_j(1 − α_j).
RenderResult render(const GaussianCloud& cloud, const CameraView& cam, const RenderOptions& options = {});

struct RenderGradients {
    ParamGradients params;
    /// dL/dμ̂ per Gaussian in pixel units (zero for culled Gaussians).
    Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor> mean2d;
};

/// Analytic gradients of Σ_p dL/dC(p) · C(p) with respect to every parameter.
RenderGradients render_backward(const RenderContext& ctx, const Image& dL_dimage);

/// 10·log10(1/MSE), capped at 100 dB.
double psnr(const Image& pred, const Image& gt);

inline constexpr double kPsnrCap = 100.0;

}  // namespace veta
