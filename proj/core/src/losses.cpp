#include "veta/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "veta/image_ops.hpp"

namespace veta {

double l1_loss(const Image& pred, const Image& gt) {
    require_same_shape(pred, gt, "l1_loss");
    if (pred.size() == 0) throw ShapeMismatch("l1_loss: empty image");
    return (pred - gt).abs().mean();
}

LossValue l1_loss_with_grad(const Image& pred, const Image& gt) {
    LossValue out;
    out.value = l1_loss(pred, gt);
    const double inv_n = 1.0 / static_cast<double>(pred.size());
    out.grad = (pred - gt).unaryExpr([inv_n](double d) { return d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0); });
    return out;
}

namespace {

struct SsimMaps {
    std::vector<double> window;
    Image mu_x, mu_y, e_xx, e_yy, e_xy;
    Image a1, a2, b1, b2, s;
};

SsimMaps ssim_maps(const Image& x, const Image& y, const SsimConfig& cfg) {
    require_same_shape(x, y, "ssim");
    if (x.rows() < cfg.window || x.cols() < cfg.window) {
        throw ShapeMismatch("ssim: image smaller than the " + std::to_string(cfg.window) + "px window");
    }
    SsimMaps m;
    m.window = gaussian_window(cfg.window, cfg.sigma);
    m.mu_x = filter_valid(x, m.window);
    m.mu_y = filter_valid(y, m.window);
    m.e_xx = filter_valid(x * x, m.window);
    m.e_yy = filter_valid(y * y, m.window);
    m.e_xy = filter_valid(x * y, m.window);
    const Image var_x = m.e_xx - m.mu_x.square();
    const Image var_y = m.e_yy - m.mu_y.square();
    const Image cov = m.e_xy - m.mu_x * m.mu_y;
    m.a1 = 2.0 * m.mu_x * m.mu_y + cfg.c1;
    m.a2 = 2.0 * cov + cfg.c2;
    m.b1 = m.mu_x.square() + m.mu_y.square() + cfg.c1;
    m.b2 = var_x + var_y + cfg.c2;
    m.s = (m.a1 * m.a2) / (m.b1 * m.b2);
    return m;
}

}  // namespace

double ssim(const Image& pred, const Image& gt, const SsimConfig& cfg) { return ssim_maps(pred, gt, cfg).s.mean(); }

LossValue dssim_loss(const Image& pred, const Image& gt, const SsimConfig& cfg) {
    const SsimMaps m = ssim_maps(pred, gt, cfg);
    LossValue out;
    out.value = 1.0 - m.s.mean();

    const double scale = -1.0 / static_cast<double>(m.s.size());
    const Image denom = m.b1 * m.b2;
    const Image d_mu = scale * (2.0 * m.mu_y * (m.a2 - m.a1) / denom + 2.0 * m.mu_x * m.s * (1.0 / m.b2 - 1.0 / m.b1));
    const Image d_exx = scale * (-m.s / m.b2);
    const Image d_exy = scale * (2.0 * m.a1 / denom);

    const Eigen::Index rows = pred.rows(), cols = pred.cols();
    out.grad = filter_valid_adjoint(d_mu, m.window, rows, cols) +
               2.0 * pred * filter_valid_adjoint(d_exx, m.window, rows, cols) +
               gt * filter_valid_adjoint(d_exy, m.window, rows, cols);
    return out;
}

MonoMode parse_mono_mode(std::string_view s) {
    if (s == "literal") return MonoMode::Literal;
    if (s == "corrected") return MonoMode::Corrected;
    throw ConfigError("unknown mono mode '" + std::string(s) + "' (expected literal or corrected)");
}

std::string_view mono_mode_name(MonoMode m) { return m == MonoMode::Literal ? "literal" : "corrected"; }

double clamped_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw ShapeMismatch("clamped_cosine: length mismatch");
    const double ff = a.squaredNorm();
    const double gg = b.squaredNorm();
    if (ff <= 0.0 || gg <= 0.0) return 0.0;
    return std::clamp(a.dot(b) / std::sqrt(ff * gg), 0.0, 1.0);
}

MonoResult mono_ssim(const Image& pred, const Image& gt, const ThermalFeatureExtractor& tfe, MonoMode mode,
                     bool with_grad) {
    require_same_shape(pred, gt, "mono_ssim");
    struct Aspect_ {
        PreprocessedPair pre;
        Eigen::VectorXd f, g;
        double raw_cos = 0.0;
    };
    std::array<Aspect_, 3> parts;
    MonoResult out;
    double product = 1.0;
    for (std::size_t r = 0; r < 3; ++r) {
        auto& p = parts[r];
        p.pre = preprocess_pair(pred, gt, kAspects[r]);
        const TfeBranch& branch = tfe.branch(kAspects[r]);
        p.f = tfe_features(branch, p.pre.pred);
        p.g = tfe_features(branch, p.pre.gt);
        const double ff = p.f.squaredNorm(), gg = p.g.squaredNorm();
        p.raw_cos = (ff > 0.0 && gg > 0.0) ? p.f.dot(p.g) / std::sqrt(ff * gg) : 0.0;
        out.similarity[r] = std::clamp(p.raw_cos, 0.0, 1.0);
        product *= out.similarity[r];
    }
    out.value = mode == MonoMode::Literal ? product : 1.0 - product;
    if (!with_grad) return out;

    out.grad = Image::Zero(pred.rows(), pred.cols());
    const double sign = mode == MonoMode::Literal ? 1.0 : -1.0;
    for (std::size_t r = 0; r < 3; ++r) {
        const auto& p = parts[r];
        // Gradient vanishes where the clamp is active or a norm is zero.
        if (p.raw_cos <= 0.0 || p.raw_cos >= 1.0) continue;
        double others = 1.0;
        for (std::size_t s = 0; s < 3; ++s) {
            if (s != r) others *= out.similarity[s];
        }
        if (others == 0.0) continue;
        const double ff = p.f.squaredNorm(), gg = p.g.squaredNorm();
        const Eigen::VectorXd d_cos = p.g / std::sqrt(ff * gg) - (p.raw_cos / ff) * p.f;
        const Eigen::VectorXd d_f = (sign * others) * d_cos;
        const TfeBackward back = tfe_features_backward(tfe.branch(kAspects[r]), p.pre.pred, d_f);
        out.grad += preprocess_pair_backward(pred, gt, kAspects[r], back.d_image);
    }
    return out;
}

void LossConfig::validate() const {
    if (!(lambda >= 0.0) || !(lambda_mono >= 0.0)) throw ConfigError("loss weights must be non-negative");
    if (!(lambda + lambda_mono < 1.0)) {
        throw ConfigError("lambda + lambda_mono must be < 1 (got " + std::to_string(lambda + lambda_mono) + ")");
    }
    if (switch_iter < 0) throw ConfigError("switch_iter must be non-negative");
}

LossWeights loss_weights(long iter, const LossConfig& cfg) {
    cfg.validate();
    if (iter >= cfg.switch_iter) return {1.0 - cfg.lambda_mono - cfg.lambda, cfg.lambda_mono, cfg.lambda};
    return {1.0 - cfg.lambda, 0.0, cfg.lambda};
}

LossBreakdown total_loss(const Image& pred, const Image& gt, long iter, const LossConfig& cfg,
                         const ThermalFeatureExtractor& tfe) {
    LossBreakdown out;
    out.weights = loss_weights(iter, cfg);
    out.mono_active = iter >= cfg.switch_iter;

    const LossValue l1 = l1_loss_with_grad(pred, gt);
    const LossValue ds = dssim_loss(pred, gt, cfg.ssim);
    out.l1 = l1.value;
    out.dssim = ds.value;
    out.grad = out.weights.l1 * l1.grad + out.weights.dssim * ds.grad;
    out.total = out.weights.l1 * out.l1 + out.weights.dssim * out.dssim;
    if (out.mono_active) {
        const MonoResult mono = mono_ssim(pred, gt, tfe, cfg.mono_mode);
        out.mono = mono.value;
        out.total += out.weights.mono * mono.value;
        out.grad += out.weights.mono * mono.grad;
    }
    return out;
}

}  // namespace veta
