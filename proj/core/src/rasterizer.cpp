#include "veta/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "veta/parallel.hpp"

namespace veta {
namespace {

constexpr std::size_t kGaussianChunk = 256;

std::size_t chunk_count(std::size_t n) { return (n + kGaussianChunk - 1) / kGaussianChunk; }

template <typename F>
void for_each_chunked(std::size_t n, F&& f) {
    parallel_for(chunk_count(n), [&](std::size_t c) {
        const std::size_t end = std::min(n, (c + 1) * kGaussianChunk);
        for (std::size_t i = c * kGaussianChunk; i < end; ++i) f(i);
    });
}

SplatRecord preprocess(const GaussianCloud& cloud, std::size_t i, const CameraView& cam) {
    SplatRecord s;
    s.unit_rotation = normalize_quat(cloud.rotation(i));
    s.cov3d = build_covariance(s.unit_rotation, cloud.log_scale(i));
    const auto proj = project_gaussian(cloud.position(i), s.cov3d, cam);
    if (!proj) return s;

    const Mat2& cov = proj->cov2d;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    s.visible = true;
    s.mean2d = proj->mean2d;
    s.cov2d = cov;
    s.conic_a = cov(1, 1) / det;
    s.conic_b = -cov(0, 1) / det;
    s.conic_c = cov(0, 0) / det;
    s.depth = proj->depth;
    s.radius = proj->radius;
    s.opacity = sigmoid(cloud.opacity_logit(i));
    s.view_vec = cloud.position(i) - cam.cam_center;
    const double raw = eval_thermal_intensity(cloud.sh(i), s.view_vec.normalized()) + kShOffset;
    s.color_clamped = raw < 0.0 || raw > 1.0;
    s.color = std::clamp(raw, 0.0, 1.0);
    return s;
}

struct PixelRange {
    int x0, x1, y0, y1;  // inclusive
};

PixelRange pixel_range(const SplatRecord& s, int width, int height) {
    PixelRange r;
    r.x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - s.radius)));
    r.x1 = std::min(width - 1, static_cast<int>(std::floor(s.mean2d.x() + s.radius)));
    r.y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.radius)));
    r.y1 = std::min(height - 1, static_cast<int>(std::floor(s.mean2d.y() + s.radius)));
    return r;
}

// A splat covers only the pixels of its own range, whatever tile they fall in.
bool outside_range(const SplatRecord& s, int px, int py) {
    return px < s.mean2d.x() - s.radius || px > s.mean2d.x() + s.radius || py < s.mean2d.y() - s.radius ||
           py > s.mean2d.y() + s.radius;
}

struct TileBounds {
    int x0, x1, y0, y1;  // half-open pixel bounds
};

TileBounds tile_bounds(const RenderContext& ctx, std::size_t tile) {
    const int ts = ctx.options.tile_size;
    const int tx = static_cast<int>(tile) % ctx.tiles_x;
    const int ty = static_cast<int>(tile) / ctx.tiles_x;
    return {tx * ts, std::min(ctx.cam.width(), (tx + 1) * ts), ty * ts, std::min(ctx.cam.height(), (ty + 1) * ts)};
}

// Per-splat gradients w.r.t. the 2D quantities, gathered over pixels.
struct SplatGrad {
    double d_mean_x = 0.0, d_mean_y = 0.0;
    double d_conic_a = 0.0, d_conic_b = 0.0, d_conic_c = 0.0;
    double d_opacity = 0.0;  // w.r.t. σ(o)
    double d_color = 0.0;

    SplatGrad& operator+=(const SplatGrad& o) {
        d_mean_x += o.d_mean_x;
        d_mean_y += o.d_mean_y;
        d_conic_a += o.d_conic_a;
        d_conic_b += o.d_conic_b;
        d_conic_c += o.d_conic_c;
        d_opacity += o.d_opacity;
        d_color += o.d_color;
        return *this;
    }
};

}  // namespace

RenderResult render(const GaussianCloud& cloud, const CameraView& cam, const RenderOptions& options) {
    cloud.validate();
    cam.validate();
    if (options.tile_size <= 0) throw InvalidParameter("render: tile_size must be positive");

    RenderResult result;
    RenderContext& ctx = result.ctx;
    ctx.cloud = cloud;
    ctx.cam = cam;
    ctx.options = options;
    const int width = cam.width();
    const int height = cam.height();
    const std::size_t n = cloud.size();

    ctx.splats.resize(n);
    for_each_chunked(n, [&](std::size_t i) { ctx.splats[i] = preprocess(cloud, i, cam); });

    ctx.tiles_x = (width + options.tile_size - 1) / options.tile_size;
    ctx.tiles_y = (height + options.tile_size - 1) / options.tile_size;
    const std::size_t tile_total = static_cast<std::size_t>(ctx.tiles_x) * static_cast<std::size_t>(ctx.tiles_y);
    ctx.tile_lists.assign(tile_total, {});

    for (std::size_t i = 0; i < n; ++i) {
        if (!ctx.splats[i].visible) continue;
        if (!options.exact) {
            const PixelRange r = pixel_range(ctx.splats[i], width, height);
            if (r.x0 > r.x1 || r.y0 > r.y1) {
                ctx.splats[i].visible = false;
                continue;
            }
        }
        ctx.order.push_back(static_cast<std::uint32_t>(i));
    }
    std::sort(ctx.order.begin(), ctx.order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const double da = ctx.splats[a].depth, db = ctx.splats[b].depth;
        return da < db || (da == db && a < b);
    });

    const int ts = options.tile_size;
    for (std::uint32_t idx : ctx.order) {
        if (options.exact) {
            for (auto& list : ctx.tile_lists) list.push_back(idx);
            continue;
        }
        const PixelRange r = pixel_range(ctx.splats[idx], width, height);
        for (int ty = r.y0 / ts; ty <= r.y1 / ts; ++ty) {
            for (int tx = r.x0 / ts; tx <= r.x1 / ts; ++tx) {
                ctx.tile_lists[static_cast<std::size_t>(ty * ctx.tiles_x + tx)].push_back(idx);
            }
        }
    }

    RenderedImage& out = result.image;
    out.intensity = Image::Zero(height, width);
    out.alpha = Image::Zero(height, width);
    ctx.final_transmittance = Image::Ones(height, width);
    ctx.n_contrib.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);

    parallel_for(tile_total, [&](std::size_t tile) {
        const TileBounds b = tile_bounds(ctx, tile);
        const auto& list = ctx.tile_lists[tile];
        for (int py = b.y0; py < b.y1; ++py) {
            for (int px = b.x0; px < b.x1; ++px) {
                double t = 1.0;
                double c = 0.0;
                std::uint32_t last = 0;
                for (std::size_t k = 0; k < list.size(); ++k) {
                    const SplatRecord& s = ctx.splats[list[k]];
                    if (!options.exact && outside_range(s, px, py)) continue;
                    const double dx = s.mean2d.x() - px;
                    const double dy = s.mean2d.y() - py;
                    const double power = -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
                    if (power > 0.0) continue;
                    const double alpha = std::min(kAlphaMax, s.opacity * std::exp(power));
                    if (!options.exact && alpha < kAlphaMin) continue;
                    const double next_t = t * (1.0 - alpha);
                    if (!options.exact && next_t < kTransmittanceMin) break;
                    c += s.color * alpha * t;
                    t = next_t;
                    last = static_cast<std::uint32_t>(k + 1);
                }
                out.intensity(py, px) = c + t * options.background;
                out.alpha(py, px) = 1.0 - t;
                ctx.final_transmittance(py, px) = t;
                ctx.n_contrib[static_cast<std::size_t>(py) * static_cast<std::size_t>(width) +
                              static_cast<std::size_t>(px)] = last;
            }
        }
    });
    return result;
}

RenderGradients render_backward(const RenderContext& ctx, const Image& dL_dimage) {
    const int width = ctx.cam.width();
    const int height = ctx.cam.height();
    if (dL_dimage.rows() != height || dL_dimage.cols() != width) {
        throw ShapeMismatch("render_backward: gradient image does not match the rendered image");
    }
    const std::size_t n = ctx.cloud.size();
    const double bg = ctx.options.background;
    const bool exact = ctx.options.exact;

    std::vector<std::vector<SplatGrad>> per_tile(ctx.tile_lists.size());
    parallel_for(ctx.tile_lists.size(), [&](std::size_t tile) {
        const TileBounds b = tile_bounds(ctx, tile);
        const auto& list = ctx.tile_lists[tile];
        auto& grads = per_tile[tile];
        grads.assign(list.size(), SplatGrad{});
        for (int py = b.y0; py < b.y1; ++py) {
            for (int px = b.x0; px < b.x1; ++px) {
                const double g = dL_dimage(py, px);
                if (g == 0.0) continue;
                const double t_final = ctx.final_transmittance(py, px);
                const std::uint32_t last = ctx.n_contrib[static_cast<std::size_t>(py) * static_cast<std::size_t>(width) +
                                                         static_cast<std::size_t>(px)];
                double t = t_final;
                double accum = 0.0;
                double last_alpha = 0.0;
                double last_color = 0.0;
                for (std::size_t k = last; k-- > 0;) {
                    const SplatRecord& s = ctx.splats[list[k]];
                    if (!exact && outside_range(s, px, py)) continue;
                    const double dx = s.mean2d.x() - px;
                    const double dy = s.mean2d.y() - py;
                    const double power = -0.5 * (s.conic_a * dx * dx + s.conic_c * dy * dy) - s.conic_b * dx * dy;
                    if (power > 0.0) continue;
                    const double gauss = std::exp(power);
                    const double raw_alpha = s.opacity * gauss;
                    const double alpha = std::min(kAlphaMax, raw_alpha);
                    if (!exact && alpha < kAlphaMin) continue;

                    t /= (1.0 - alpha);
                    SplatGrad& sg = grads[k];
                    sg.d_color += alpha * t * g;

                    accum = last_alpha * last_color + (1.0 - last_alpha) * accum;
                    last_alpha = alpha;
                    last_color = s.color;
                    if (raw_alpha >= kAlphaMax) continue;

                    const double dL_dalpha = (s.color - accum) * t * g - t_final / (1.0 - alpha) * bg * g;
                    sg.d_opacity += gauss * dL_dalpha;
                    const double dL_dpower = s.opacity * gauss * dL_dalpha;
                    sg.d_mean_x += -dL_dpower * (s.conic_a * dx + s.conic_b * dy);
                    sg.d_mean_y += -dL_dpower * (s.conic_c * dy + s.conic_b * dx);
                    sg.d_conic_a += -0.5 * dx * dx * dL_dpower;
                    sg.d_conic_b += -dx * dy * dL_dpower;
                    sg.d_conic_c += -0.5 * dy * dy * dL_dpower;
                }
            }
        }
    });

    // Fixed tile order keeps the reduction independent of the thread count.
    std::vector<SplatGrad> splat_grads(n);
    for (std::size_t tile = 0; tile < per_tile.size(); ++tile) {
        const auto& list = ctx.tile_lists[tile];
        for (std::size_t k = 0; k < list.size(); ++k) splat_grads[list[k]] += per_tile[tile][k];
    }

    RenderGradients out;
    out.params = ParamGradients::zeros_like(ctx.cloud);
    out.mean2d = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>::Zero(static_cast<Eigen::Index>(n), 2);

    for_each_chunked(n, [&](std::size_t i) {
        const SplatRecord& s = ctx.splats[i];
        if (!s.visible) return;
        const SplatGrad& g = splat_grads[i];
        const auto row = static_cast<Eigen::Index>(i);

        Mat2 conic;
        conic << s.conic_a, s.conic_b, s.conic_b, s.conic_c;
        Mat2 d_conic;
        d_conic << g.d_conic_a, 0.5 * g.d_conic_b, 0.5 * g.d_conic_b, g.d_conic_c;
        const Mat2 d_cov2d = -conic * d_conic * conic;
        const Vec2 d_mean2d(g.d_mean_x, g.d_mean_y);
        out.mean2d.row(row) = d_mean2d.transpose();

        const Vec3 mean = ctx.cloud.position(i);
        const ProjectionGrad pg = project_gaussian_backward(mean, s.cov3d, ctx.cam, d_mean2d, d_cov2d);
        Vec3 d_mean = pg.d_mean;

        if (!s.color_clamped && g.d_color != 0.0) {
            const double len = s.view_vec.norm();
            const Vec3 dir = s.view_vec / len;
            const ShGrad shg = eval_thermal_intensity_backward(ctx.cloud.sh(i), dir, g.d_color);
            for (Eigen::Index k = 0; k < out.params.sh_coeffs.cols(); ++k) {
                out.params.sh_coeffs(row, k) = shg.d_sh[static_cast<std::size_t>(k)];
            }
            d_mean += (shg.d_dir - dir * dir.dot(shg.d_dir)) / len;
        }

        const CovarianceGrad cg = build_covariance_backward(s.unit_rotation, ctx.cloud.log_scale(i), pg.d_cov);
        out.params.positions.row(row) = d_mean.transpose();
        out.params.rotations.row(row) = normalize_quat_backward(ctx.cloud.rotation(i), cg.d_rotation).transpose();
        out.params.log_scales.row(row) = cg.d_log_scale.transpose();
        out.params.opacity_logits(row, 0) = g.d_opacity * s.opacity * (1.0 - s.opacity);
    });
    return out;
}

double psnr(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "psnr");
    if (pred.size() == 0) throw ShapeMismatch("psnr: empty image");
    const double mse = (pred - gt).square().mean();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace veta
