#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "veta/parallel.hpp"
#include "veta/trainer.hpp"

namespace veta {
namespace {

TEST(CosineAnneal, EndpointsAndMidpoint) {
    const LearningRates lr;
    EXPECT_EQ(lr.deform_final, 1.6e-6);
    EXPECT_DOUBLE_EQ(cosine_anneal(lr.deform_init, lr.deform_final, 0, 3000), lr.deform_init);
    EXPECT_DOUBLE_EQ(cosine_anneal(lr.deform_init, lr.deform_final, 3000, 3000), 1.6e-6);
    EXPECT_DOUBLE_EQ(cosine_anneal(lr.deform_init, lr.deform_final, 1500, 3000), 0.5 * (lr.deform_init + 1.6e-6));
    for (long it = 1; it <= 3000; ++it) {
        EXPECT_LE(cosine_anneal(1.0, 0.1, it, 3000), cosine_anneal(1.0, 0.1, it - 1, 3000));
    }
}

TEST(ExponentialDecay, LogLinear) {
    EXPECT_DOUBLE_EQ(exponential_decay(1e-2, 1e-4, 0, 100), 1e-2);
    EXPECT_NEAR(exponential_decay(1e-2, 1e-4, 50, 100), 1e-3, 1e-15);
    EXPECT_NEAR(exponential_decay(1e-2, 1e-4, 100, 100), 1e-4, 1e-18);
}

TEST(TrainConfig, DeskScaleScalesHorizons) {
    const TrainConfig full = TrainConfig::desk_scale(30000), base;
    EXPECT_EQ(full.densify_until, base.densify_until);
    EXPECT_EQ(full.loss.switch_iter, base.loss.switch_iter);
    const TrainConfig desk = TrainConfig::desk_scale(3000);
    EXPECT_EQ(desk.total_iters, 3000);
    EXPECT_EQ(desk.densify_from, 50);
    EXPECT_EQ(desk.densify_until, 2000);
    EXPECT_EQ(desk.densify_interval, 10);
    EXPECT_EQ(desk.opacity_reset_interval, 300);
    EXPECT_EQ(desk.loss.switch_iter, 2000);
    EXPECT_EQ(desk.loss.lambda, 0.2);
    EXPECT_EQ(desk.loss.lambda_mono, 0.2);
    EXPECT_NO_THROW(desk.validate());
    EXPECT_EQ(TrainConfig::desk_scale(20).densify_interval, 1);
}

TEST(TrainConfig, TextRoundTripIsExact) {
    TrainConfig c = TrainConfig::desk_scale(1234);
    c.lr.scale = 0.1 + 0.2;
    c.grad_threshold = std::numbers::pi * 1e-5;
    c.net.scene_center = Vec3(0.1, -1.0 / 3.0, 2.5);
    c.loss.mono_mode = MonoMode::Literal;
    c.frustum_mask = false;
    c.seed = 0xFFFFFFFFFFFFFFFFull;
    const TrainConfig back = TrainConfig::parse_text(c.to_text());
    EXPECT_EQ(back.to_text(), c.to_text());
    EXPECT_EQ(back.lr.scale, c.lr.scale);
    EXPECT_EQ(back.grad_threshold, c.grad_threshold);
    EXPECT_EQ(back.net.scene_center, c.net.scene_center);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.loss.mono_mode, MonoMode::Literal);
}

TEST(TrainConfig, RejectsBadSettings) {
    TrainConfig c;
    EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
    EXPECT_THROW(c.set("total_iters", "12x"), ConfigError);
    c = TrainConfig::desk_scale(100);
    c.loss.switch_iter = 101;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig::desk_scale(100);
    c.loss.lambda = 0.5;
    c.loss.lambda_mono = 0.5;
    EXPECT_THROW(c.validate(), ConfigError);
}

struct DensifyCase {
    GaussianCloud cloud;
    TrainState state;
    TrainConfig cfg;
};

DensifyCase densify_case(std::size_t n, std::uint64_t seed) {
    fixtures::CloudSpec spec;
    spec.count = n;
    spec.log_scale_mean = -4.0;
    spec.log_scale_jitter = 1.0;
    spec.opacity_std = 3.0;
    DensifyCase c{fixtures::random_cloud(spec, seed), {}, {}};
    quantize_to_float(c.cloud);
    c.cfg.scene_extent = 2.0;
    c.state = TrainState::fresh(c.cloud, DeformationNet(DeformationConfig{.depth = 1, .width = 4}), seed);
    std::mt19937_64 rng(seed + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < c.state.grad_accum.size(); ++i) {
        c.state.grad_count[i] = std::floor(5.0 * u(rng));
        c.state.grad_accum[i] = c.state.grad_count[i] * 4e-4 * u(rng);
    }
    for (auto& f : c.state.gaussian_adam.fields) f.m.setConstant(0.25);
    return c;
}

TEST(Densify, QuietStatisticsLeaveCloudUnchanged) {
    DensifyCase c = densify_case(20, 1);
    c.state.grad_accum.setZero();
    c.cloud.opacity_logits.setConstant(0.0);
    const GaussianCloud before = c.cloud;
    const DensifyReport r = densify_and_prune(c.state, c.cloud, c.cfg);
    EXPECT_EQ(r.cloned + r.split + r.pruned, 0u);
    EXPECT_TRUE(c.cloud.positions == before.positions);
    EXPECT_TRUE(c.cloud.sh_coeffs == before.sh_coeffs);
}

TEST(Densify, SingleSmallGaussianClonesOnce) {
    DensifyCase c = densify_case(20, 2);
    c.state.grad_accum.setZero();
    c.cloud.opacity_logits.setConstant(0.0);
    c.cloud.log_scales.row(7).setConstant(std::log(1e-3));
    c.state.grad_count[7] = 2.0;
    c.state.grad_accum[7] = 2.0 * 3e-4;
    const DensifyReport r = densify_and_prune(c.state, c.cloud, c.cfg);
    EXPECT_EQ(r.cloned, 1u);
    ASSERT_EQ(c.cloud.size(), 21u);
    EXPECT_TRUE(c.cloud.positions.row(20) == c.cloud.positions.row(7));
}

TEST(Densify, MatchesRuleOracle) {
    for (std::uint64_t seed = 10; seed < 16; ++seed) {
        DensifyCase c = densify_case(60, seed);
        const GaussianCloud before = c.cloud;
        const oracle::DensifyOutcome want = oracle::densify_rules(before, c.state.grad_accum, c.state.grad_count, c.cfg);
        densify_and_prune(c.state, c.cloud, c.cfg);
        ASSERT_EQ(c.cloud.size(), want.final_size) << seed;
        ASSERT_TRUE(c.state.aligned_with(c.cloud));
        const double min_o = c.cfg.min_opacity;
        auto alive = [&](std::size_t i) { return sigmoid(before.opacity_logit(i)) >= min_o; };
        std::size_t row = 0;
        for (std::size_t i : want.survivors) {
            EXPECT_TRUE(c.cloud.positions.row(static_cast<Eigen::Index>(row)) == before.positions.row(static_cast<Eigen::Index>(i)));
            EXPECT_EQ(c.state.gaussian_adam.fields[0].m[static_cast<Eigen::Index>(3 * row)], 0.25);
            ++row;
        }
        for (std::size_t i : want.clones) {
            if (!alive(i)) continue;
            EXPECT_TRUE(c.cloud.log_scales.row(static_cast<Eigen::Index>(row)) == before.log_scales.row(static_cast<Eigen::Index>(i)));
            EXPECT_EQ(c.state.gaussian_adam.fields[0].m[static_cast<Eigen::Index>(3 * row)], 0.0);
            ++row;
        }
        for (std::size_t i : want.splits) {
            if (!alive(i)) continue;
            for (int k = 0; k < 2; ++k, ++row) {
                const auto r = static_cast<Eigen::Index>(row);
                const auto src = static_cast<Eigen::Index>(i);
                EXPECT_NEAR((c.cloud.log_scales.row(r) - before.log_scales.row(src)).maxCoeff(), -std::log(1.6), 1e-6);
                EXPECT_EQ(c.cloud.opacity_logits(r, 0), before.opacity_logits(src, 0));
                EXPECT_EQ(c.state.gaussian_adam.fields[2].m[3 * r], 0.0);
            }
        }
        EXPECT_EQ(row, c.cloud.size());
        EXPECT_EQ(c.state.grad_accum.size(), static_cast<Eigen::Index>(c.cloud.size()));
        EXPECT_EQ(c.state.grad_accum.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(Densify, CapSkipsGrowth) {
    DensifyCase c = densify_case(40, 3);
    c.state.grad_accum = c.state.grad_count * 1e-3;
    c.cloud.opacity_logits.setConstant(0.0);
    c.cfg.max_gaussians = 40;
    const DensifyReport r = densify_and_prune(c.state, c.cloud, c.cfg);
    EXPECT_TRUE(r.capped);
    EXPECT_EQ(c.cloud.size(), 40u);
}

TEST(ResetOpacity, CapsAndClearsMoments) {
    DensifyCase c = densify_case(30, 4);
    reset_opacity(c.state, c.cloud);
    EXPECT_LE(c.cloud.opacity_logits.maxCoeff(), logit(0.01) + 1e-6);
    EXPECT_EQ(c.state.gaussian_adam.fields[3].m.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(c.state.gaussian_adam.fields[0].m[0], 0.25);
}

TEST(ViewOrder, EachEpochVisitsEveryView) {
    TrainState s = TrainState::fresh(GaussianCloud(1, 0), DeformationNet(DeformationConfig{.depth = 1, .width = 4}), 9);
    for (int epoch = 0; epoch < 3; ++epoch) {
        std::vector<int> seen(7, 0);
        for (int k = 0; k < 7; ++k) ++seen[next_view(s, 7)];
        for (int v : seen) EXPECT_EQ(v, 1);
    }
}

class TrainerTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fixtures::TempDir("trainer");
        scene_ = new Scene(fixtures::small_scene(dir_->str()));
    }
    static void TearDownTestSuite() {
        delete scene_;
        delete dir_;
    }
    static Trainer make(const TrainConfig& cfg) {
        return Trainer(Model::create(cfg, scene_->initial), split_views(*scene_, Split::Train));
    }
    static fixtures::TempDir* dir_;
    static Scene* scene_;
};
fixtures::TempDir* TrainerTest::dir_ = nullptr;
Scene* TrainerTest::scene_ = nullptr;

TEST_F(TrainerTest, SwitchAtZeroUsesFullObjectiveFromTheFirstStep) {
    TrainConfig cfg = fixtures::small_config(*scene_, 20);
    cfg.loss.switch_iter = 0;
    Trainer t = make(cfg);
    const StepLog log = t.step();
    EXPECT_TRUE(log.mono_active);
    EXPECT_DOUBLE_EQ(log.weights.l1, 0.6);
    EXPECT_DOUBLE_EQ(log.weights.mono, 0.2);
    EXPECT_DOUBLE_EQ(log.weights.dssim, 0.2);
    EXPECT_GT(log.mono, 0.0);
}

TEST_F(TrainerTest, LogLineFormat) {
    Trainer t = make(fixtures::small_config(*scene_, 20));
    const std::string line = t.step().format();
    for (const char* key : {"iter=0 ", " l1=", " dssim=", " mono=", " total=", " gaussians=", " deform_evals=", " step_ms="}) {
        EXPECT_NE(line.find(key), std::string::npos) << key << " in " << line;
    }
}

TEST_F(TrainerTest, StateStaysAlignedThroughDensification) {
    TrainConfig cfg = fixtures::small_config(*scene_, 60);
    cfg.densify_from = 0;
    cfg.densify_interval = 5;
    cfg.grad_threshold = 1e-6;
    Trainer t = make(cfg);
    const std::size_t start = t.model().cloud.size();
    t.run(30, [&](const StepLog&) { ASSERT_TRUE(t.model().state.aligned_with(t.model().cloud)); });
    EXPECT_GT(t.model().cloud.size(), start);
}

TEST_F(TrainerTest, IdenticalSeedsAreBitIdenticalAcrossThreadCounts) {
    const TrainConfig cfg = fixtures::small_config(*scene_, 100, 5);
    const int saved = num_threads();
    set_num_threads(1);
    Trainer a = make(cfg);
    a.run(100);
    set_num_threads(4);
    Trainer b = make(cfg);
    b.run(100);
    set_num_threads(saved);
    const GaussianCloud &ca = a.model().cloud, &cb = b.model().cloud;
    ASSERT_EQ(ca.size(), cb.size());
    EXPECT_TRUE(ca.positions == cb.positions);
    EXPECT_TRUE(ca.rotations == cb.rotations);
    EXPECT_TRUE(ca.log_scales == cb.log_scales);
    EXPECT_TRUE(ca.opacity_logits == cb.opacity_logits);
    EXPECT_TRUE(ca.sh_coeffs == cb.sh_coeffs);
    EXPECT_TRUE(a.model().net.parameters() == b.model().net.parameters());
}

TEST_F(TrainerTest, MaskingCutsEvaluationsAndStepTimeOnSparseViews) {
    fixtures::CloudSpec spec;
    spec.count = 2000;
    spec.spread = 6.0;
    spec.log_scale_mean = -3.0;
    const GaussianCloud wide = fixtures::random_cloud(spec, 70);
    const auto views = split_views(*scene_, Split::Train);
    for (const auto& v : views) {
        std::size_t in_view = 0;
        for (std::size_t i = 0; i < wide.size(); ++i) {
            const Vec3 t = v.cam.rotation() * wide.position(i) + v.cam.translation();
            if (t.z() <= v.cam.near) continue;
            const double u = v.cam.intrinsics.fx * t.x() / t.z() + v.cam.intrinsics.cx;
            const double w = v.cam.intrinsics.fy * t.y() / t.z() + v.cam.intrinsics.cy;
            in_view += u >= -0.5 && u < v.cam.width() - 0.5 && w >= -0.5 && w < v.cam.height() - 0.5;
        }
        ASSERT_LE(static_cast<double>(in_view), 0.3 * static_cast<double>(wide.size()));
    }

    auto run = [&](bool mask, std::size_t& evals) {
        TrainConfig cfg = fixtures::small_config(*scene_, 100);
        cfg.net.width = 256;
        cfg.frustum_mask = mask;
        cfg.densify_from = cfg.total_iters;
        Trainer t(Model::create(cfg, wide), views);
        double ms = 0.0;
        evals = 0;
        for (int k = 0; k < 4; ++k) {
            const StepLog log = t.step();
            ms += log.step_ms;
            evals += log.deform_evals;
        }
        return ms;
    };
    std::size_t masked_evals = 0, full_evals = 0;
    const double masked_ms = run(true, masked_evals);
    const double full_ms = run(false, full_evals);
    EXPECT_EQ(full_evals, 4 * wide.size());
    EXPECT_LE(static_cast<double>(masked_evals), 0.35 * static_cast<double>(full_evals));
    EXPECT_LT(masked_ms, full_ms);
}

TEST_F(TrainerTest, LossDecreasesOverFiftyStepWindows) {
    TrainConfig cfg = fixtures::small_config(*scene_, 500);
    cfg.loss.switch_iter = cfg.total_iters;
    // An opacity reset raises the loss by design; keep it past the horizon.
    cfg.opacity_reset_interval = cfg.total_iters + 1;
    Trainer t = make(cfg);
    const auto views = split_views(*scene_, Split::Train);
    const GaussianCloud& c0 = t.model().cloud;
    EXPECT_TRUE(deform(t.model().net, c0, views[0].cam, Mask(c0.size(), 1)).cloud.positions == c0.positions);
    auto train_loss = [&] {
        double sum = 0.0;
        for (const auto& v : views) {
            const Image img = render_view(t.model().cloud, t.model().net, v.cam, cfg);
            sum += total_loss(img, v.image, 0, cfg.loss, t.model().tfe).total;
        }
        return sum / static_cast<double>(views.size());
    };
    std::vector<double> curve{train_loss()};
    for (long until = 50; until <= 500; until += 50) {
        t.run(until);
        curve.push_back(train_loss());
    }
    int decreasing = 0;
    for (std::size_t k = 1; k < curve.size(); ++k) decreasing += curve[k] < curve[k - 1];
    EXPECT_GE(decreasing, 9) << "loss curve start " << curve.front() << " end " << curve.back();
}

}  // namespace
}  // namespace veta
