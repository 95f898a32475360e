#include "veta/adam.hpp"

#include <cmath>

namespace veta {

void adam_update(std::span<double> param, std::span<const double> grad, AdamState& state, double lr,
                 const AdamConfig& cfg, std::span<const double> column_scale) {
    const auto n = static_cast<Eigen::Index>(param.size());
    if (grad.size() != param.size() || state.m.size() != n || state.v.size() != n) {
        throw ShapeMismatch("adam_update: parameter, gradient and moment lengths differ");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double step_size = lr / bc1;
    const double bc2_sqrt = std::sqrt(bc2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double g = grad[static_cast<std::size_t>(i)];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double denom = std::sqrt(state.v[i]) / bc2_sqrt + cfg.eps;
        const double scale = column_scale.empty() ? 1.0 : column_scale[static_cast<std::size_t>(i) % column_scale.size()];
        param[static_cast<std::size_t>(i)] -= scale * step_size * state.m[i] / denom;
    }
}

namespace {

std::array<Eigen::Index, 5> field_widths(const GaussianCloud& c) {
    return {3, 4, 3, 1, static_cast<Eigen::Index>(c.sh_count())};
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, Eigen::Index width, std::span<const std::uint8_t> keep) {
    Eigen::Index kept = 0;
    for (auto k : keep) kept += k ? 1 : 0;
    Eigen::VectorXd out(kept * width);
    Eigen::Index o = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        out.segment(o, width) = v.segment(static_cast<Eigen::Index>(i) * width, width);
        o += width;
    }
    return out;
}

}  // namespace

GaussianAdam GaussianAdam::zeros_like(const GaussianCloud& cloud) {
    GaussianAdam a;
    const auto widths = field_widths(cloud);
    const auto n = static_cast<Eigen::Index>(cloud.size());
    for (std::size_t f = 0; f < 5; ++f) a.fields[f] = AdamState::zeros(n * widths[f]);
    return a;
}

void GaussianAdam::select(std::span<const std::uint8_t> keep, const GaussianCloud& shape) {
    const auto widths = field_widths(shape);
    for (std::size_t f = 0; f < 5; ++f) {
        if (fields[f].m.size() != static_cast<Eigen::Index>(keep.size()) * widths[f]) {
            throw ShapeMismatch("GaussianAdam::select: mask length does not match the moments");
        }
        fields[f].m = select_rows(fields[f].m, widths[f], keep);
        fields[f].v = select_rows(fields[f].v, widths[f], keep);
    }
}

void GaussianAdam::append_zero(std::size_t count, const GaussianCloud& shape) {
    const auto widths = field_widths(shape);
    for (std::size_t f = 0; f < 5; ++f) {
        const Eigen::Index old = fields[f].m.size();
        const Eigen::Index add = static_cast<Eigen::Index>(count) * widths[f];
        fields[f].m.conservativeResize(old + add);
        fields[f].v.conservativeResize(old + add);
        fields[f].m.tail(add).setZero();
        fields[f].v.tail(add).setZero();
    }
}

bool GaussianAdam::aligned_with(const GaussianCloud& cloud) const {
    const auto widths = field_widths(cloud);
    const auto n = static_cast<Eigen::Index>(cloud.size());
    for (std::size_t f = 0; f < 5; ++f) {
        if (fields[f].m.size() != n * widths[f] || fields[f].v.size() != n * widths[f]) return false;
    }
    return true;
}

void quantize_to_float(std::span<double> values) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

void quantize_to_float(GaussianCloud& cloud) {
    cloud.for_each_field([](std::string_view, ParamBlock& b) { quantize_to_float({b.data(), static_cast<std::size_t>(b.size())}); });
}

void quantize_to_float(AdamState& state) {
    quantize_to_float({state.m.data(), static_cast<std::size_t>(state.m.size())});
    quantize_to_float({state.v.data(), static_cast<std::size_t>(state.v.size())});
}

}  // namespace veta
