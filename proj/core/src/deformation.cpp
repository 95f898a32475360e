#include "veta/deformation.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "veta/parallel.hpp"

namespace veta {
namespace {

constexpr std::size_t kDeformChunk = 256;
constexpr int kHeadRows = 10;  // δμ (3), δr (4), δs (3)

}  // namespace

void PositionalEncoding::encode(std::span<const double> x, std::span<double> out) const {
    std::size_t o = 0;
    for (double v : x) {
        if (include_input) out[o++] = v;
        double freq = std::numbers::pi;
        for (int k = 0; k < num_freqs; ++k) {
            out[o++] = std::sin(freq * v);
            out[o++] = std::cos(freq * v);
            freq *= 2.0;
        }
    }
}

std::vector<double> PositionalEncoding::encode(std::span<const double> x) const {
    std::vector<double> out(static_cast<std::size_t>(output_dim(static_cast<int>(x.size()))));
    encode(x, out);
    return out;
}

DeformationNet::DeformationNet(const DeformationConfig& config) : config_(config) {
    if (config.depth < 1 || config.width < 1) throw InvalidParameter("DeformationNet: depth and width must be >= 1");
    if (config.translation_bound <= 0.0 || config.log_scale_bound <= 0.0) {
        throw InvalidParameter("DeformationNet: deformation bounds must be positive");
    }
    if (config.scene_extent <= 0.0) throw InvalidParameter("DeformationNet: scene extent must be positive");
    position_encoding_ = {config.position_freqs, true};
    time_encoding_ = {config.time_freqs, true};
    input_dim_ = position_encoding_.output_dim(3) + time_encoding_.output_dim(1) + (config.view_dependent ? 6 : 0);

    std::size_t offset = 0;
    auto add_layer = [&](int in, int out) {
        LayerShape s{in, out, offset, offset + static_cast<std::size_t>(in) * static_cast<std::size_t>(out)};
        offset = s.bias_offset + static_cast<std::size_t>(out);
        layers_.push_back(s);
    };
    for (int l = 0; l < config.depth; ++l) {
        int in = l == 0 ? input_dim_ : config.width;
        if (l > 0 && l == config.skip_layer + 1) in += input_dim_;
        add_layer(in, config.width);
    }
    add_layer(config.width, 3);
    add_layer(config.width, 4);
    add_layer(config.width, 3);

    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
    std::mt19937_64 rng(config.seed);
    for (int l = 0; l < config.depth; ++l) {
        const LayerShape& s = layers_[static_cast<std::size_t>(l)];
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = s.weight_offset; k < s.bias_offset + static_cast<std::size_t>(s.out); ++k) {
            params_[static_cast<Eigen::Index>(k)] = dist(rng);
        }
    }
}

Eigen::Map<const Eigen::MatrixXd> DeformationNet::weight(std::size_t layer) const {
    const LayerShape& s = layers_.at(layer);
    return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<const Eigen::VectorXd> DeformationNet::bias(std::size_t layer) const {
    const LayerShape& s = layers_.at(layer);
    return {params_.data() + s.bias_offset, s.out};
}

void DeformationNet::build_input(const Vec3& position, const CameraView& cam, std::span<double> out) const {
    const int pos_dim = position_encoding_.output_dim(3);
    const int time_dim = time_encoding_.output_dim(1);
    const double mu[3] = {position.x(), position.y(), position.z()};
    position_encoding_.encode(mu, out.subspan(0, static_cast<std::size_t>(pos_dim)));
    const double t[1] = {cam.timestamp};
    time_encoding_.encode(t, out.subspan(static_cast<std::size_t>(pos_dim), static_cast<std::size_t>(time_dim)));
    if (config_.view_dependent) {
        const Vec3 x = (cam.cam_center - config_.scene_center) / config_.scene_extent;
        std::size_t o = static_cast<std::size_t>(pos_dim + time_dim);
        for (int k = 0; k < 3; ++k) out[o++] = x[k];
        for (int k = 0; k < 3; ++k) out[o++] = cam.view_dir[k];
    }
}

void DeformationNet::randomize_heads(double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t l = static_cast<std::size_t>(config_.depth); l < layers_.size(); ++l) {
        const LayerShape& s = layers_[l];
        for (std::size_t k = s.weight_offset; k < s.bias_offset + static_cast<std::size_t>(s.out); ++k) {
            params_[static_cast<Eigen::Index>(k)] = dist(rng);
        }
    }
}

double deformation_bound(const DeformationNet& net) { return net.config().translation_bound; }

FrustumEnvelope deformation_envelope(const DeformationNet& net) {
    FrustumEnvelope env;
    env.margin = std::sqrt(3.0) * net.config().translation_bound;
    env.options.scale_inflation = std::exp(net.config().log_scale_bound);
    return env;
}

namespace {

struct ChunkForward {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> activations;
    Eigen::MatrixXd head_raw;
};

ChunkForward forward_chunk(const DeformationNet& net, Eigen::MatrixXd input) {
    const DeformationConfig& cfg = net.config();
    ChunkForward f;
    f.input = std::move(input);
    const Eigen::Index m = f.input.cols();
    f.activations.resize(static_cast<std::size_t>(cfg.depth));
    for (int l = 0; l < cfg.depth; ++l) {
        const auto li = static_cast<std::size_t>(l);
        Eigen::MatrixXd z;
        if (l == 0) {
            z.noalias() = net.weight(li) * f.input;
        } else if (l == cfg.skip_layer + 1) {
            const auto w = net.weight(li);
            z.noalias() = w.leftCols(net.input_dim()) * f.input;
            z.noalias() += w.rightCols(cfg.width) * f.activations[li - 1];
        } else {
            z.noalias() = net.weight(li) * f.activations[li - 1];
        }
        z.colwise() += net.bias(li);
        f.activations[li] = z.cwiseMax(0.0);
    }
    const Eigen::MatrixXd& h = f.activations.back();
    f.head_raw.resize(kHeadRows, m);
    const auto d = static_cast<std::size_t>(cfg.depth);
    f.head_raw.topRows(3).noalias() = net.weight(d) * h;
    f.head_raw.topRows(3).colwise() += net.bias(d);
    f.head_raw.middleRows(3, 4).noalias() = net.weight(d + 1) * h;
    f.head_raw.middleRows(3, 4).colwise() += net.bias(d + 1);
    f.head_raw.bottomRows(3).noalias() = net.weight(d + 2) * h;
    f.head_raw.bottomRows(3).colwise() += net.bias(d + 2);
    return f;
}

}  // namespace

DeformResult deform(const DeformationNet& net, const GaussianCloud& cloud, const CameraView& cam, const Mask& mask) {
    if (mask.size() != cloud.size()) throw ShapeMismatch("deform: mask length differs from the cloud size");
    DeformResult result;
    result.cloud = cloud;
    DeformContext& ctx = result.ctx;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) ctx.indices.push_back(static_cast<std::uint32_t>(i));
    }
    result.evaluations = ctx.indices.size();
    const std::size_t m = ctx.indices.size();
    ctx.pre_normalized_rotations = ParamBlock::Zero(static_cast<Eigen::Index>(m), 4);
    if (m == 0) return result;

    const std::size_t chunks = (m + kDeformChunk - 1) / kDeformChunk;
    ctx.inputs.resize(chunks);
    ctx.activations.resize(chunks);
    ctx.head_raw.resize(chunks);
    const double bound_mu = net.config().translation_bound;
    const double bound_s = net.config().log_scale_bound;

    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kDeformChunk;
        const std::size_t end = std::min(m, begin + kDeformChunk);
        Eigen::MatrixXd input(net.input_dim(), static_cast<Eigen::Index>(end - begin));
        for (std::size_t j = begin; j < end; ++j) {
            auto col = input.col(static_cast<Eigen::Index>(j - begin));
            net.build_input(cloud.position(ctx.indices[j]), cam, {col.data(), static_cast<std::size_t>(col.size())});
        }
        ChunkForward f = forward_chunk(net, std::move(input));
        for (std::size_t j = begin; j < end; ++j) {
            const auto col = static_cast<Eigen::Index>(j - begin);
            const auto row = static_cast<Eigen::Index>(ctx.indices[j]);
            const auto raw = f.head_raw.col(col);
            for (int k = 0; k < 3; ++k) {
                result.cloud.positions(row, k) = cloud.positions(row, k) + bound_mu * std::tanh(raw(k) / bound_mu);
                result.cloud.log_scales(row, k) =
                    cloud.log_scales(row, k) + bound_s * std::tanh(raw(7 + k) / bound_s);
            }
            const Quat q = cloud.rotation(ctx.indices[j]) + raw.segment<4>(3);
            ctx.pre_normalized_rotations.row(static_cast<Eigen::Index>(j)) = q.transpose();
            result.cloud.rotations.row(row) = normalize_quat(q).transpose();
        }
        ctx.inputs[c] = std::move(f.input);
        ctx.activations[c] = std::move(f.activations);
        ctx.head_raw[c] = std::move(f.head_raw);
    });
    return result;
}

DeformGradients deform_backward(const DeformationNet& net, const DeformContext& ctx,
                                const ParamGradients& dL_ddeformed) {
    const DeformationConfig& cfg = net.config();
    DeformGradients out;
    out.cloud = dL_ddeformed;
    out.net = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    const std::size_t m = ctx.indices.size();
    if (m == 0) return out;

    const double bound_mu = cfg.translation_bound;
    const double bound_s = cfg.log_scale_bound;
    const std::size_t chunks = ctx.inputs.size();
    std::vector<Eigen::VectorXd> chunk_grads(chunks);

    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * kDeformChunk;
        const Eigen::MatrixXd& input = ctx.inputs[c];
        const auto& acts = ctx.activations[c];
        const Eigen::MatrixXd& raw = ctx.head_raw[c];
        const Eigen::Index cols = input.cols();

        Eigen::MatrixXd d_raw(kHeadRows, cols);
        for (Eigen::Index j = 0; j < cols; ++j) {
            const std::size_t slot = begin + static_cast<std::size_t>(j);
            const auto row = static_cast<Eigen::Index>(ctx.indices[slot]);
            for (int k = 0; k < 3; ++k) {
                const double tm = std::tanh(raw(k, j) / bound_mu);
                d_raw(k, j) = dL_ddeformed.positions(row, k) * (1.0 - tm * tm);
                const double ts = std::tanh(raw(7 + k, j) / bound_s);
                d_raw(7 + k, j) = dL_ddeformed.log_scales(row, k) * (1.0 - ts * ts);
            }
            const Quat q = ctx.pre_normalized_rotations.row(static_cast<Eigen::Index>(slot)).transpose();
            const Quat dq = normalize_quat_backward(q, dL_ddeformed.rotations.row(row).transpose());
            d_raw.block<4, 1>(3, j) = dq;
            out.cloud.rotations.row(row) = dq.transpose();
        }

        Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
        auto weight_grad = [&](std::size_t layer) {
            const auto& s = net.layers()[layer];
            return Eigen::Map<Eigen::MatrixXd>(grad.data() + s.weight_offset, s.out, s.in);
        };
        auto bias_grad = [&](std::size_t layer) {
            const auto& s = net.layers()[layer];
            return Eigen::Map<Eigen::VectorXd>(grad.data() + s.bias_offset, s.out);
        };

        const auto d = static_cast<std::size_t>(cfg.depth);
        const Eigen::MatrixXd& h_last = acts.back();
        const int head_rows[3] = {0, 3, 7};
        const int head_sizes[3] = {3, 4, 3};
        Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(cfg.width, cols);
        for (int hidx = 0; hidx < 3; ++hidx) {
            const auto layer = d + static_cast<std::size_t>(hidx);
            const auto block = d_raw.middleRows(head_rows[hidx], head_sizes[hidx]);
            weight_grad(layer).noalias() += block * h_last.transpose();
            bias_grad(layer) += block.rowwise().sum();
            dh.noalias() += net.weight(layer).transpose() * block;
        }

        for (int l = cfg.depth - 1; l >= 0; --l) {
            const auto li = static_cast<std::size_t>(l);
            const Eigen::MatrixXd dz = dh.cwiseProduct((acts[li].array() > 0.0).cast<double>().matrix());
            bias_grad(li) += dz.rowwise().sum();
            if (l == 0) {
                weight_grad(li).noalias() += dz * input.transpose();
            } else if (l == cfg.skip_layer + 1) {
                weight_grad(li).leftCols(net.input_dim()).noalias() += dz * input.transpose();
                weight_grad(li).rightCols(cfg.width).noalias() += dz * acts[li - 1].transpose();
                dh.noalias() = net.weight(li).rightCols(cfg.width).transpose() * dz;
            } else {
                weight_grad(li).noalias() += dz * acts[li - 1].transpose();
                dh.noalias() = net.weight(li).transpose() * dz;
            }
        }
        chunk_grads[c] = std::move(grad);
    });

    for (const auto& g : chunk_grads) out.net += g;
    return out;
}

DeformationOffsets evaluate_offsets(const DeformationNet& net, const Vec3& position, const CameraView& cam) {
    Eigen::MatrixXd input(net.input_dim(), 1);
    net.build_input(position, cam, {input.data(), static_cast<std::size_t>(input.size())});
    const ChunkForward f = forward_chunk(net, std::move(input));
    const auto raw = f.head_raw.col(0);
    const double bound_mu = net.config().translation_bound;
    const double bound_s = net.config().log_scale_bound;
    DeformationOffsets o;
    for (int k = 0; k < 3; ++k) {
        o.d_position[k] = bound_mu * std::tanh(raw(k) / bound_mu);
        o.d_log_scale[k] = bound_s * std::tanh(raw(7 + k) / bound_s);
    }
    o.d_rotation = raw.segment<4>(3);
    return o;
}

}  // namespace veta
