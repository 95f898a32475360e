#include "veta/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "veta/rasterizer.hpp"

namespace veta {

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("config key '" + key + "': trailing characters in '" + s + "'");
    return v;
}

long long parse_integer(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &used);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("config key '" + key + "': trailing characters in '" + s + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::string to_string_value(double v) { return format_double(v); }
std::string to_string_value(long v) { return std::to_string(v); }
std::string to_string_value(int v) { return std::to_string(v); }
std::string to_string_value(bool v) { return v ? "true" : "false"; }
std::string to_string_value(std::uint64_t v) { return std::to_string(v); }
std::string to_string_value(MonoMode v) { return std::string(mono_mode_name(v)); }
std::string to_string_value(const Vec3& v) {
    return format_double(v.x()) + "," + format_double(v.y()) + "," + format_double(v.z());
}

void from_string_value(const std::string& k, const std::string& s, double& v) { v = parse_double(k, s); }
void from_string_value(const std::string& k, const std::string& s, long& v) { v = static_cast<long>(parse_integer(k, s)); }
void from_string_value(const std::string& k, const std::string& s, int& v) { v = static_cast<int>(parse_integer(k, s)); }
void from_string_value(const std::string& k, const std::string& s, bool& v) { v = parse_bool(k, s); }
void from_string_value(const std::string& k, const std::string& s, std::uint64_t& v) {
    if (s.empty() || s[0] == '-') throw ConfigError("config key '" + k + "': expected an unsigned integer");
    try {
        std::size_t used = 0;
        v = std::stoull(s, &used);
        if (used != s.size()) throw ConfigError("config key '" + k + "': trailing characters in '" + s + "'");
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + k + "': expected an unsigned integer, got '" + s + "'");
    }
}
void from_string_value(const std::string& k, const std::string& s, MonoMode& v) {
    try {
        v = parse_mono_mode(s);
    } catch (const ConfigError& e) {
        throw ConfigError("config key '" + k + "': " + e.what());
    }
}
void from_string_value(const std::string& k, const std::string& s, Vec3& v) {
    std::stringstream ss(s);
    std::string part;
    for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, part, ',')) throw ConfigError("config key '" + k + "': expected x,y,z");
        v[i] = parse_double(k, part);
    }
    if (std::getline(ss, part, ',')) throw ConfigError("config key '" + k + "': expected x,y,z");
}

struct Binding {
    const char* key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename Access>
Binding bind(const char* key, Access access) {
    return {key, [access](const TrainConfig& c) { return to_string_value(access(c)); },
            [access, key](TrainConfig& c, const std::string& s) { from_string_value(key, s, access(c)); }};
}

#define VETA_BIND(key, member) bind(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> all = [] {
        std::vector<Binding> b = {
            VETA_BIND("total_iters", total_iters),
            VETA_BIND("densify_from", densify_from),
            VETA_BIND("densify_until", densify_until),
            VETA_BIND("densify_interval", densify_interval),
            VETA_BIND("opacity_reset_interval", opacity_reset_interval),
            VETA_BIND("grad_threshold", grad_threshold),
            VETA_BIND("min_opacity", min_opacity),
            VETA_BIND("percent_dense", percent_dense),
            VETA_BIND("split_factor", split_factor),
            VETA_BIND("lambda", loss.lambda),
            VETA_BIND("lambda_mono", loss.lambda_mono),
            VETA_BIND("switch_iter", loss.switch_iter),
            VETA_BIND("mono_mode", loss.mono_mode),
            VETA_BIND("lr.position_init", lr.position_init),
            VETA_BIND("lr.position_final", lr.position_final),
            VETA_BIND("lr.opacity", lr.opacity),
            VETA_BIND("lr.scale", lr.scale),
            VETA_BIND("lr.rotation", lr.rotation),
            VETA_BIND("lr.sh", lr.sh),
            VETA_BIND("lr.sh_rest_divisor", lr.sh_rest_divisor),
            VETA_BIND("lr.deform_init", lr.deform_init),
            VETA_BIND("lr.deform_final", lr.deform_final),
            VETA_BIND("net.depth", net.depth),
            VETA_BIND("net.width", net.width),
            VETA_BIND("net.skip_layer", net.skip_layer),
            VETA_BIND("net.position_freqs", net.position_freqs),
            VETA_BIND("net.time_freqs", net.time_freqs),
            VETA_BIND("net.view_dependent", net.view_dependent),
            VETA_BIND("net.translation_bound", net.translation_bound),
            VETA_BIND("net.log_scale_bound", net.log_scale_bound),
            VETA_BIND("net.scene_center", net.scene_center),
            VETA_BIND("net.scene_extent", net.scene_extent),
            VETA_BIND("net.seed", net.seed),
            VETA_BIND("use_deformation", use_deformation),
            VETA_BIND("frustum_mask", frustum_mask),
            VETA_BIND("background", background),
            VETA_BIND("scene_extent", scene_extent),
            VETA_BIND("sh_degree", sh_degree),
            VETA_BIND("seed", seed),
            VETA_BIND("tfe_seed", tfe_seed),
        };
        b.push_back({"max_gaussians", [](const TrainConfig& c) { return std::to_string(c.max_gaussians); },
                     [](TrainConfig& c, const std::string& s) {
                         std::uint64_t v = 0;
                         from_string_value("max_gaussians", s, v);
                         c.max_gaussians = static_cast<std::size_t>(v);
                     }});
        return b;
    }();
    return all;
}

#undef VETA_BIND

}  // namespace

TrainConfig TrainConfig::desk_scale(long total_iters) {
    if (total_iters <= 0) throw ConfigError("total_iters must be positive");
    TrainConfig c;
    const double f = static_cast<double>(total_iters) / 30000.0;
    auto scaled = [f](double full, long floor) { return std::max(floor, std::lround(full * f)); };
    c.total_iters = total_iters;
    c.densify_from = scaled(500, 0);
    c.densify_until = scaled(20000, 0);
    c.densify_interval = scaled(100, 1);
    c.opacity_reset_interval = scaled(3000, 1);
    c.loss.switch_iter = scaled(20000, 0);
    return c;
}

void TrainConfig::validate() const {
    if (total_iters <= 0) throw ConfigError("total_iters must be positive");
    loss.validate();
    if (loss.switch_iter > total_iters) {
        throw ConfigError("switch_iter (" + std::to_string(loss.switch_iter) + ") must not exceed total_iters (" +
                          std::to_string(total_iters) + ")");
    }
    if (densify_interval <= 0 || opacity_reset_interval <= 0) throw ConfigError("densify/reset intervals must be positive");
    if (densify_from < 0 || densify_until < 0) throw ConfigError("densification horizons must be non-negative");
    if (!(grad_threshold >= 0.0)) throw ConfigError("grad_threshold must be non-negative");
    if (!(min_opacity >= 0.0 && min_opacity < 1.0)) throw ConfigError("min_opacity must lie in [0, 1)");
    if (!(split_factor > 1.0)) throw ConfigError("split_factor must exceed 1");
    if (!(percent_dense > 0.0)) throw ConfigError("percent_dense must be positive");
    if (max_gaussians == 0) throw ConfigError("max_gaussians must be positive");
    if (!(scene_extent > 0.0)) throw ConfigError("scene_extent must be positive");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) throw ConfigError("sh_degree must lie in [0, 3]");
    for (double lr : {lr.position_init, lr.position_final, lr.opacity, lr.scale, lr.rotation, lr.sh, lr.deform_init,
                      lr.deform_final}) {
        if (!(lr >= 0.0)) throw ConfigError("learning rates must be non-negative");
    }
    if (!(lr.sh_rest_divisor > 0.0)) throw ConfigError("lr.sh_rest_divisor must be positive");
    if (lr.position_init > 0.0 && !(lr.position_final > 0.0)) {
        throw ConfigError("lr.position_final must be positive for the exponential decay");
    }
    if (net.depth < 1 || net.width < 1) throw ConfigError("net.depth and net.width must be >= 1");
    if (!(net.translation_bound > 0.0) || !(net.log_scale_bound > 0.0)) {
        throw ConfigError("deformation bounds must be positive");
    }
    if (!(net.scene_extent > 0.0)) throw ConfigError("net.scene_extent must be positive");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
    std::map<std::string, std::string> m;
    for (const auto& b : bindings()) m[b.key] = b.get(*this);
    return m;
}

std::string TrainConfig::to_text() const {
    std::string out;
    for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
    return out;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    for (const auto& b : bindings()) {
        if (key == b.key) {
            b.set(*this, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse_text(const std::string& text) {
    TrainConfig c;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
        c.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return c;
}

double cosine_anneal(double lr0, double lr_final, long iter, long total) {
    if (total <= 0 || iter < 0 || iter > total) throw InvalidParameter("cosine_anneal: need 0 <= iter <= total, total > 0");
    if (iter == total) return lr_final;
    const double t = static_cast<double>(iter) / static_cast<double>(total);
    return lr_final + 0.5 * (lr0 - lr_final) * (1.0 + std::cos(std::numbers::pi * t));
}

double exponential_decay(double lr0, double lr_final, long iter, long total) {
    if (lr0 == 0.0) return 0.0;
    const double t = std::clamp(static_cast<double>(iter) / static_cast<double>(std::max(total, 1L)), 0.0, 1.0);
    return std::exp((1.0 - t) * std::log(lr0) + t * std::log(lr_final));
}

TrainState TrainState::fresh(const GaussianCloud& cloud, const DeformationNet& net, std::uint64_t seed) {
    TrainState s;
    s.gaussian_adam = GaussianAdam::zeros_like(cloud);
    s.net_adam = AdamState::zeros(static_cast<Eigen::Index>(net.parameter_count()));
    s.grad_accum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cloud.size()));
    s.grad_count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cloud.size()));
    s.rng.seed(seed);
    return s;
}

bool TrainState::aligned_with(const GaussianCloud& cloud) const {
    const auto n = static_cast<Eigen::Index>(cloud.size());
    return gaussian_adam.aligned_with(cloud) && grad_accum.size() == n && grad_count.size() == n;
}

std::uint32_t next_view(TrainState& state, std::size_t view_count) {
    if (view_count == 0) throw InvalidParameter("next_view: no training views");
    if (state.view_order.size() != view_count || state.view_cursor >= state.view_order.size()) {
        state.view_order.resize(view_count);
        std::iota(state.view_order.begin(), state.view_order.end(), 0u);
        std::shuffle(state.view_order.begin(), state.view_order.end(), state.rng);
        state.view_cursor = 0;
    }
    return state.view_order[state.view_cursor++];
}

std::string StepLog::format() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "iter=%ld l1=%.6f dssim=%.6f mono=%.6f total=%.6f gaussians=%zu deform_evals=%zu step_ms=%.3f", iter,
                  l1, dssim, mono, total, gaussians, deform_evals, step_ms);
    return buf;
}

namespace {

struct Deformed {
    GaussianCloud cloud;
    std::optional<DeformContext> ctx;
    std::size_t evaluations = 0;
};

Deformed apply_deformation(const GaussianCloud& cloud, const DeformationNet& net, const CameraView& cam,
                           const TrainConfig& cfg) {
    if (!cfg.use_deformation) return {cloud, std::nullopt, 0};
    Mask mask;
    if (cfg.frustum_mask) {
        const FrustumEnvelope env = deformation_envelope(net);
        mask = frustum_mask(cloud, cam, env.margin, env.options);
    } else {
        mask.assign(cloud.size(), 1);
    }
    DeformResult r = deform(net, cloud, cam, mask);
    return {std::move(r.cloud), std::move(r.ctx), r.evaluations};
}

std::string range_summary(const GaussianCloud& cloud) {
    std::string out;
    cloud.for_each_field([&](std::string_view name, const ParamBlock& b) {
        if (b.size() == 0) return;
        out += " " + std::string(name) + "=[" + format_double(b.minCoeff()) + ", " + format_double(b.maxCoeff()) + "]";
    });
    return out;
}

[[noreturn]] void diverged(const std::string& what, long iter, std::uint32_t view_index, const TrainingView& view,
                           const GaussianCloud& cloud, const LossBreakdown& loss) {
    std::ostringstream msg;
    msg << what << " at iter " << iter << " on view " << view_index << " (t=" << view.cam.timestamp << ", center "
        << view.cam.cam_center.transpose() << "); l1=" << loss.l1 << " dssim=" << loss.dssim << " mono=" << loss.mono
        << "; N=" << cloud.size() << ";" << range_summary(cloud);
    throw TrainingDiverged(msg.str());
}

}  // namespace

Image render_view(const GaussianCloud& cloud, const DeformationNet& net, const CameraView& cam, const TrainConfig& cfg) {
    const Deformed d = apply_deformation(cloud, net, cam, cfg);
    return render(d.cloud, cam, {cfg.background}).image.intensity;
}

StepLog train_step(TrainState& state, GaussianCloud& cloud, DeformationNet& net, const ThermalFeatureExtractor& tfe,
                   const TrainingView& view, std::uint32_t view_index, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!state.aligned_with(cloud)) throw ShapeMismatch("train_step: optimizer state is not aligned with the cloud");
    const long iter = state.iteration;

    const Deformed deformed = apply_deformation(cloud, net, view.cam, cfg);
    const RenderResult rendered = render(deformed.cloud, view.cam, {cfg.background});
    const LossBreakdown loss = total_loss(rendered.image.intensity, view.image, iter, cfg.loss, tfe);
    if (!std::isfinite(loss.total)) diverged("non-finite loss", iter, view_index, view, cloud, loss);

    const RenderGradients rgrad = render_backward(rendered.ctx, loss.grad);
    ParamGradients grads;
    Eigen::VectorXd net_grad;
    if (deformed.ctx) {
        DeformGradients dg = deform_backward(net, *deformed.ctx, rgrad.params);
        grads = std::move(dg.cloud);
        net_grad = std::move(dg.net);
    } else {
        grads = rgrad.params;
    }
    if (!grads.all_finite() || !net_grad.allFinite()) diverged("non-finite gradient", iter, view_index, view, cloud, loss);

    // Screen-space gradient statistics in NDC units, as used by the density control.
    const long step_number = iter + 1;
    if (iter < cfg.densify_until) {
        const double hx = 0.5 * view.cam.width(), hy = 0.5 * view.cam.height();
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (!rendered.ctx.splats[i].visible) continue;
            const auto r = static_cast<Eigen::Index>(i);
            state.grad_accum[r] += std::hypot(rgrad.mean2d(r, 0) * hx, rgrad.mean2d(r, 1) * hy);
            state.grad_count[r] += 1.0;
        }
        quantize_to_float({state.grad_accum.data(), static_cast<std::size_t>(state.grad_accum.size())});
    }

    const AdamConfig gauss_adam{0.9, 0.999, 1e-15};
    const double pos_lr = exponential_decay(cfg.lr.position_init * cfg.scene_extent,
                                            cfg.lr.position_final * cfg.scene_extent, iter, cfg.total_iters);
    const std::array<double, 5> lrs = {pos_lr, cfg.lr.rotation, cfg.lr.scale, cfg.lr.opacity, cfg.lr.sh};
    std::vector<double> sh_scale(static_cast<std::size_t>(cloud.sh_count()), 1.0 / cfg.lr.sh_rest_divisor);
    sh_scale[0] = 1.0;

    std::array<ParamBlock*, 5> params = {&cloud.positions, &cloud.rotations, &cloud.log_scales, &cloud.opacity_logits,
                                         &cloud.sh_coeffs};
    std::array<const ParamBlock*, 5> g = {&grads.positions, &grads.rotations, &grads.log_scales, &grads.opacity_logits,
                                          &grads.sh_coeffs};
    for (std::size_t f = 0; f < 5; ++f) {
        std::span<double> p(params[f]->data(), static_cast<std::size_t>(params[f]->size()));
        std::span<const double> gr(g[f]->data(), static_cast<std::size_t>(g[f]->size()));
        adam_update(p, gr, state.gaussian_adam.fields[f], lrs[f], gauss_adam,
                    f == 4 ? std::span<const double>(sh_scale) : std::span<const double>{});
        quantize_to_float(state.gaussian_adam.fields[f]);
    }
    cloud.renormalize_rotations();
    quantize_to_float(cloud);

    if (cfg.use_deformation) {
        const double net_lr = cosine_anneal(cfg.lr.deform_init, cfg.lr.deform_final, iter, cfg.total_iters);
        Eigen::VectorXd& theta = net.parameters();
        adam_update({theta.data(), static_cast<std::size_t>(theta.size())},
                    {net_grad.data(), static_cast<std::size_t>(net_grad.size())}, state.net_adam, net_lr,
                    AdamConfig{0.9, 0.999, 1e-8});
        quantize_to_float({theta.data(), static_cast<std::size_t>(theta.size())});
        quantize_to_float(state.net_adam);
    }

    StepLog log;
    if (iter < cfg.densify_until) {
        if (step_number > cfg.densify_from && step_number % cfg.densify_interval == 0) {
            densify_and_prune(state, cloud, cfg);
            log.densified = true;
        }
        if (step_number % cfg.opacity_reset_interval == 0) {
            reset_opacity(state, cloud);
            log.opacity_reset = true;
        }
    }
    state.iteration = step_number;

    log.iter = iter;
    log.l1 = loss.l1;
    log.dssim = loss.dssim;
    log.mono = loss.mono;
    log.total = loss.total;
    log.weights = loss.weights;
    log.mono_active = loss.mono_active;
    log.gaussians = cloud.size();
    log.deform_evals = deformed.evaluations;
    log.view = view_index;
    log.step_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return log;
}

Model Model::create(const TrainConfig& config, GaussianCloud initial) {
    config.validate();
    Model m;
    m.config = config;
    if (initial.sh_degree != config.sh_degree) {
        GaussianCloud resized = initial;
        resized.sh_degree = config.sh_degree;
        resized.sh_coeffs = ParamBlock::Zero(static_cast<Eigen::Index>(initial.size()), sh_coeff_count(config.sh_degree));
        const Eigen::Index keep = std::min(resized.sh_coeffs.cols(), initial.sh_coeffs.cols());
        resized.sh_coeffs.leftCols(keep) = initial.sh_coeffs.leftCols(keep);
        initial = std::move(resized);
    }
    initial.renormalize_rotations();
    quantize_to_float(initial);
    initial.validate();
    m.cloud = std::move(initial);
    m.net = DeformationNet(config.net);
    Eigen::VectorXd& theta = m.net.parameters();
    quantize_to_float({theta.data(), static_cast<std::size_t>(theta.size())});
    m.tfe = ThermalFeatureExtractor::make(config.tfe_seed);
    m.state = TrainState::fresh(m.cloud, m.net, config.seed);
    return m;
}

Trainer::Trainer(Model model, std::vector<TrainingView> views) : model_(std::move(model)), views_(std::move(views)) {
    if (views_.empty()) throw InvalidParameter("Trainer: no training views");
    for (const auto& v : views_) {
        v.cam.validate();
        if (v.image.rows() != v.cam.height() || v.image.cols() != v.cam.width()) {
            throw ShapeMismatch("Trainer: training image does not match its camera size");
        }
    }
}

StepLog Trainer::step() {
    const std::uint32_t idx = next_view(model_.state, views_.size());
    return train_step(model_.state, model_.cloud, model_.net, model_.tfe, views_[idx], idx, model_.config);
}

void Trainer::run(long until, const std::function<void(const StepLog&)>& on_step) {
    while (model_.state.iteration < until) {
        const StepLog log = step();
        if (on_step) on_step(log);
    }
}

}  // namespace veta
