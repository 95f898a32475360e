#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "pipeline.hpp"
#include "veta/deformation.hpp"
#include "veta/parallel.hpp"
#include "veta/rasterizer.hpp"

namespace veta {
namespace {

DeformationConfig small_config(std::uint64_t seed = 1) {
    DeformationConfig c;
    c.width = 24;
    c.depth = 4;
    c.skip_layer = 1;
    c.seed = seed;
    return c;
}

TEST(PositionalEncoding, ZeroInput) {
    const PositionalEncoding pe{2, true};
    const double x[1] = {0.0};
    const auto out = pe.encode(x);
    EXPECT_EQ(out, (std::vector<double>{0, 0, 1, 0, 1}));
}

TEST(PositionalEncoding, HalfInputFirstFrequency) {
    const PositionalEncoding pe{1, false};
    const double x[1] = {0.5};
    const auto out = pe.encode(x);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out[0], 1.0, 1e-15);
    EXPECT_NEAR(out[1], 0.0, 1e-15);
}

TEST(PositionalEncoding, MatchesPerTermOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int L : {0, 3, 10}) {
        for (bool inc : {true, false}) {
            const PositionalEncoding pe{L, inc};
            const std::vector<double> x = {u(rng), u(rng), u(rng)};
            const auto out = pe.encode(x);
            ASSERT_EQ(static_cast<int>(out.size()), pe.output_dim(3));
            ASSERT_EQ(pe.output_dim(3), 3 * (2 * L + (inc ? 1 : 0)));
            std::size_t o = 0;
            for (double v : x) {
                if (inc) EXPECT_EQ(out[o++], v);
                for (int k = 0; k < L; ++k) {
                    EXPECT_NEAR(out[o++], std::sin(std::ldexp(1.0, k) * std::numbers::pi * v), 1e-12);
                    EXPECT_NEAR(out[o++], std::cos(std::ldexp(1.0, k) * std::numbers::pi * v), 1e-12);
                }
            }
        }
    }
}

TEST(DeformationNet, ShapesAndZeroHeads) {
    const DeformationNet net{DeformationConfig{}};
    EXPECT_EQ(net.input_dim(), 3 * 21 + 13 + 6);
    ASSERT_EQ(net.layers().size(), 11u);
    EXPECT_EQ(net.layers()[5].in, 256 + net.input_dim());
    for (std::size_t l = 8; l < 11; ++l) {
        EXPECT_EQ(net.weight(l).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(net.bias(l).cwiseAbs().maxCoeff(), 0.0);
    }
    EXPECT_TRUE(net.parameters().allFinite());
}

TEST(Deform, ZeroHeadsIsIdentity) {
    fixtures::CloudSpec spec;
    spec.count = 40;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 4);
    const DeformationNet net(small_config());
    const DeformResult d = deform(net, cloud, fixtures::random_camera(5, 16, 16), Mask(cloud.size(), 1));
    EXPECT_TRUE(d.cloud.positions == cloud.positions);
    EXPECT_TRUE(d.cloud.log_scales == cloud.log_scales);
    EXPECT_LT((d.cloud.rotations - cloud.rotations).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(d.evaluations, cloud.size());
}

TEST(Deform, UnmaskedRowsAreBitIdenticalAndCountsMatch) {
    fixtures::CloudSpec spec;
    spec.count = 600;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 6);
    DeformationNet net(small_config());
    net.randomize_heads(0.5, 7);
    Mask mask(cloud.size());
    std::mt19937_64 rng(8);
    std::size_t pop = 0;
    for (auto& m : mask) pop += (m = static_cast<std::uint8_t>(rng() % 3 == 0));
    const DeformResult d = deform(net, cloud, fixtures::random_camera(9, 16, 16), mask);
    EXPECT_EQ(d.evaluations, pop);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (mask[i]) continue;
        EXPECT_TRUE(d.cloud.positions.row(r) == cloud.positions.row(r));
        EXPECT_TRUE(d.cloud.rotations.row(r) == cloud.rotations.row(r));
        EXPECT_TRUE(d.cloud.log_scales.row(r) == cloud.log_scales.row(r));
    }
    const DeformResult none = deform(net, cloud, fixtures::random_camera(9, 16, 16), Mask(cloud.size(), 0));
    EXPECT_TRUE(none.cloud.positions == cloud.positions);
    EXPECT_TRUE(none.cloud.rotations == cloud.rotations);
    EXPECT_EQ(none.evaluations, 0u);
}

TEST(Deform, OffsetsAreBounded) {
    DeformationConfig cfg = small_config();
    cfg.translation_bound = 0.1;
    DeformationNet net(cfg);
    net.randomize_heads(50.0, 10);
    EXPECT_EQ(deformation_bound(net), 0.1);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const CameraView cam = fixtures::random_camera(12, 16, 16);
    for (int k = 0; k < 500; ++k) {
        const DeformationOffsets o = evaluate_offsets(net, Vec3(u(rng), u(rng), u(rng)), cam);
        EXPECT_LE(o.d_position.cwiseAbs().maxCoeff(), 0.1);
        EXPECT_LE(o.d_log_scale.cwiseAbs().maxCoeff(), cfg.log_scale_bound);
    }
    const FrustumEnvelope env = deformation_envelope(net);
    EXPECT_NEAR(env.margin, std::sqrt(3.0) * 0.1, 1e-15);
    EXPECT_NEAR(env.options.scale_inflation, std::exp(cfg.log_scale_bound), 1e-15);
}

TEST(Deform, DependsOnViewDirectionAndCameraPosition) {
    DeformationNet net(small_config());
    net.randomize_heads(0.3, 13);
    const Vec3 mu(0.1, 0.2, -0.1);
    CameraView a = fixtures::random_camera(14, 16, 16);
    CameraView b = a;
    b.view_dir = (a.view_dir + Vec3(0.1, -0.05, 0.02)).normalized();
    CameraView c = a;
    c.cam_center += Vec3(0.2, 0.0, 0.0);
    const auto oa = evaluate_offsets(net, mu, a), ob = evaluate_offsets(net, mu, b), oc = evaluate_offsets(net, mu, c);
    EXPECT_GT((oa.d_position - ob.d_position).norm(), 1e-8);
    EXPECT_GT((oa.d_rotation - ob.d_rotation).norm(), 1e-8);
    EXPECT_GT((oa.d_position - oc.d_position).norm(), 1e-8);

    DeformationConfig cfg = small_config();
    cfg.view_dependent = false;
    DeformationNet blind(cfg);
    blind.randomize_heads(0.3, 13);
    EXPECT_EQ(evaluate_offsets(blind, mu, a).d_position, evaluate_offsets(blind, mu, b).d_position);
}

TEST(Deform, ThreadCountDoesNotChangeResults) {
    fixtures::CloudSpec spec;
    spec.count = 700;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 15);
    DeformationNet net(small_config());
    net.randomize_heads(0.2, 16);
    const CameraView cam = fixtures::random_camera(17, 16, 16);
    const Mask mask(cloud.size(), 1);
    const int saved = num_threads();
    set_num_threads(1);
    const DeformResult a = deform(net, cloud, cam, mask);
    ParamGradients up = ParamGradients::zeros_like(cloud);
    up.positions.setConstant(0.3);
    up.rotations.setConstant(-0.2);
    up.log_scales.setConstant(0.1);
    const DeformGradients ga = deform_backward(net, a.ctx, up);
    set_num_threads(4);
    const DeformResult b = deform(net, cloud, cam, mask);
    const DeformGradients gb = deform_backward(net, b.ctx, up);
    set_num_threads(saved);
    EXPECT_TRUE(a.cloud.positions == b.cloud.positions);
    EXPECT_TRUE(ga.net == gb.net);
}

pipeline::Setup single_gaussian_setup() {
    pipeline::Setup s;
    fixtures::CloudSpec spec;
    spec.count = 1;
    spec.spread = 0.05;
    spec.log_scale_mean = -1.8;
    spec.sh_degree = 1;
    s.cloud = fixtures::random_cloud(spec, 18);
    s.cloud.opacity_logits(0, 0) = 0.5;
    s.net = DeformationNet(small_config(19));
    s.net.randomize_heads(0.05, 20);
    s.cam = fixtures::random_camera(21, 20, 20, 2.0, 40.0);
    s.target = fixtures::random_image(20, 20, 22);
    s.loss.lambda = 0.0;
    s.loss.lambda_mono = 0.0;
    s.loss.switch_iter = 1000;
    s.render.exact = true;
    return s;
}

TEST(DeformBackward, NetworkGradientsMatchFiniteDifferences) {
    pipeline::Setup s = single_gaussian_setup();
    const pipeline::Gradients g = pipeline::gradients(s);
    EXPECT_GT(g.net.cwiseAbs().maxCoeff(), 1e-6);
    DeformationNet net = s.net;
    auto f = [&] { return pipeline::loss(s, s.cloud, net); };
    std::size_t bad = 0;
    for (Eigen::Index k = 0; k < net.parameters().size(); ++k) {
        const double fd = oracle::central_difference(f, net.parameters()[k], 1e-5);
        if (!oracle::gradient_close(g.net[k], fd)) {
            ++bad;
            ADD_FAILURE() << "theta[" << k << "] analytic " << g.net[k] << " numeric " << fd;
            if (bad > 10) break;
        }
    }
}

TEST(DeformBackward, PositionGradientFollowsStopGradientOracle) {
    pipeline::Setup s = single_gaussian_setup();
    const pipeline::Gradients g = pipeline::gradients(s);
    GaussianCloud cloud = s.cloud;
    double encoding_path = 0.0;
    for (int k = 0; k < 3; ++k) {
        const double frozen = oracle::central_difference([&] { return pipeline::loss_frozen_input(s, cloud); },
                                                         cloud.positions(0, k), 1e-5);
        const double enc = oracle::central_difference([&] { return pipeline::loss_encoding_only(s, cloud); },
                                                      cloud.positions(0, k), 1e-5);
        const double full = oracle::central_difference([&] { return pipeline::loss(s, cloud, s.net); },
                                                       cloud.positions(0, k), 1e-5);
        EXPECT_TRUE(oracle::gradient_close(g.cloud.positions(0, k), frozen)) << k;
        // Both paths together give the unblocked derivative.
        EXPECT_NEAR(frozen + enc, full, 1e-6 * std::max(1.0, std::abs(full)));
        encoding_path = std::max(encoding_path, std::abs(enc));
    }
    // The check is only meaningful if the blocked path carries signal.
    EXPECT_GT(encoding_path, 1e-6);
}

TEST(DeformBackward, OtherParametersMatchFiniteDifferences) {
    pipeline::Setup s = single_gaussian_setup();
    const pipeline::Gradients g = pipeline::gradients(s);
    GaussianCloud cloud = s.cloud;
    auto f = [&] { return pipeline::loss(s, cloud, s.net); };
    for (int k = 0; k < 4; ++k) {
        EXPECT_TRUE(oracle::gradient_close(g.cloud.rotations(0, k), oracle::central_difference(f, cloud.rotations(0, k), 1e-5)));
    }
    for (int k = 0; k < 3; ++k) {
        EXPECT_TRUE(oracle::gradient_close(g.cloud.log_scales(0, k), oracle::central_difference(f, cloud.log_scales(0, k), 1e-5)));
    }
    EXPECT_TRUE(oracle::gradient_close(g.cloud.opacity_logits(0, 0),
                                       oracle::central_difference(f, cloud.opacity_logits(0, 0), 1e-5)));
    for (int k = 0; k < cloud.sh_coeffs.cols(); ++k) {
        EXPECT_TRUE(oracle::gradient_close(g.cloud.sh_coeffs(0, k), oracle::central_difference(f, cloud.sh_coeffs(0, k), 1e-5)));
    }
}

TEST(FrustumMasking, MaskedAndUnmaskedRendersAgree) {
    for (int scene = 0; scene < 4; ++scene) {
        fixtures::CloudSpec spec;
        spec.count = 400;
        spec.spread = 2.5;
        spec.log_scale_mean = -2.5;
        const GaussianCloud cloud = fixtures::random_cloud(spec, 30 + scene);
        DeformationNet net(small_config(31));
        net.randomize_heads(1.0, 32 + scene);
        const CameraView cam = fixtures::random_camera(40 + scene, 32, 32, 3.0, 40.0);
        const FrustumEnvelope env = deformation_envelope(net);
        const Mask mask = frustum_mask(cloud, cam, env.margin, env.options);
        const DeformResult masked = deform(net, cloud, cam, mask);
        const DeformResult full = deform(net, cloud, cam, Mask(cloud.size(), 1));
        EXPECT_LT(masked.evaluations, full.evaluations);
        // Exact mode gives every splat infinite support, so only the
        // truncated training renderer is compared.
        const Image a = render(masked.cloud, cam).image.intensity;
        const Image b = render(full.cloud, cam).image.intensity;
        EXPECT_LT((a - b).abs().maxCoeff(), 1e-6) << "scene " << scene;
    }
}

}  // namespace
}  // namespace veta
