#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "veta/camera.hpp"

namespace veta {
namespace {

CameraView identity_camera(int w = 64, int h = 48) {
    CameraView cam;
    cam.intrinsics = {60.0, 62.0, 31.5, 23.5, w, h};
    cam.near = 0.1;
    cam.far = 10.0;
    return cam;
}

TEST(CameraView, FromCameraToWorld) {
    const CameraView cam = fixtures::look_at(Vec3(3, 0, 0), Vec3::Zero(), 32, 32, 45.0, 0.25);
    EXPECT_TRUE(cam.view_dir.isApprox(Vec3(-1, 0, 0), 1e-12));
    EXPECT_TRUE(cam.cam_center.isApprox(Vec3(3, 0, 0), 1e-12));
    const Vec3 origin_cam = cam.rotation() * Vec3::Zero() + cam.translation();
    EXPECT_NEAR(origin_cam.z(), 3.0, 1e-12);
    EXPECT_NO_THROW(cam.validate());
    CameraView bad = cam;
    bad.near = 0.0;
    EXPECT_THROW(bad.validate(), InvalidParameter);
    bad = cam;
    bad.world_to_cam(0, 0) = 2.0;
    EXPECT_THROW(bad.validate(), InvalidParameter);
}

TEST(Projection, OpticalAxisHitsPrincipalPoint) {
    const CameraView cam = identity_camera();
    const auto p = project_gaussian(Vec3(0, 0, 3), 0.01 * Mat3::Identity(), cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(p->mean2d.x(), 31.5, 1e-12);
    EXPECT_NEAR(p->mean2d.y(), 23.5, 1e-12);
    EXPECT_NEAR(p->depth, 3.0, 1e-15);
}

TEST(Projection, LowPassFloorDominatesTinyCovariance) {
    const CameraView cam = identity_camera();
    const auto p = project_gaussian(Vec3(0.2, -0.1, 3), 1e-14 * Mat3::Identity(), cam);
    ASSERT_TRUE(p.has_value());
    EXPECT_NEAR(p->cov2d(0, 0), 0.3, 1e-9);
    EXPECT_NEAR(p->cov2d(1, 1), 0.3, 1e-9);
    EXPECT_NEAR(p->cov2d(0, 1), 0.0, 1e-9);
    EXPECT_NEAR(p->radius, 3.0 * std::sqrt(0.3), 1e-6);
}

TEST(Projection, CulledAtOrBehindNear) {
    const CameraView cam = identity_camera();
    EXPECT_FALSE(project_gaussian(Vec3(0, 0, 0.1), Mat3::Identity(), cam).has_value());
    EXPECT_FALSE(project_gaussian(Vec3(0, 0, -1), Mat3::Identity(), cam).has_value());
}

TEST(Projection, MatchesNumericJacobianOracle) {
    fixtures::CloudSpec spec;
    spec.count = 40;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 21);
    for (int v = 0; v < 5; ++v) {
        const CameraView cam = fixtures::random_camera(100 + v, 48, 40);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto got = project_gaussian(cloud.position(i), build_covariance(cloud.rotation(i), cloud.log_scale(i)), cam);
            const oracle::Splat want = oracle::project(cloud, i, cam);
            ASSERT_EQ(got.has_value(), want.visible);
            if (!got) continue;
            EXPECT_LT((got->mean2d - want.mean).cwiseAbs().maxCoeff(), 1e-9);
            EXPECT_LT((got->cov2d - want.cov).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, want.cov.norm()));
        }
    }
}

TEST(Projection, DepthOrderPreserved) {
    const CameraView cam = fixtures::random_camera(7, 32, 32);
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int k = 0; k < 200; ++k) {
        const Vec3 a(u(rng), u(rng), u(rng)), b(u(rng), u(rng), u(rng));
        const auto pa = project_gaussian(a, 1e-3 * Mat3::Identity(), cam);
        const auto pb = project_gaussian(b, 1e-3 * Mat3::Identity(), cam);
        ASSERT_TRUE(pa && pb);
        const double za = (cam.rotation() * a + cam.translation()).z();
        const double zb = (cam.rotation() * b + cam.translation()).z();
        EXPECT_EQ(za < zb, pa->depth < pb->depth);
    }
}

TEST(Projection, BackwardMatchesFiniteDifferences) {
    const CameraView cam = fixtures::random_camera(9, 40, 30);
    Vec3 mu(0.1, -0.2, 0.15);
    Mat3 cov = oracle::covariance(Quat(0.3, 0.5, -0.2, 0.8), Vec3(-2.0, -2.5, -1.8));
    const Vec2 g_mean(0.7, -1.3);
    const Mat2 g_cov = (Mat2() << 0.4, -0.2, 0.3, 1.1).finished();
    const ProjectionGrad grad = project_gaussian_backward(mu, cov, cam, g_mean, g_cov);
    auto f = [&] {
        const auto p = project_gaussian(mu, cov, cam);
        return p->mean2d.dot(g_mean) + (p->cov2d.array() * g_cov.array()).sum();
    };
    for (int k = 0; k < 3; ++k) {
        EXPECT_TRUE(oracle::gradient_close(grad.d_mean[k], oracle::central_difference(f, mu[k], 1e-5), 1e-5)) << k;
    }
    // Σ is symmetric: perturb (a, b) pairs together and compare with the
    // symmetric part of the analytic gradient.
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            double t = 0.0;
            const Mat3 base = cov;
            auto g = [&] {
                cov = base;
                cov(a, b) += t;
                if (a != b) cov(b, a) += t;
                const double v = f();
                cov = base;
                return v;
            };
            const double fd = oracle::central_difference(g, t, 1e-5);
            const double an = a == b ? grad.d_cov(a, a) : grad.d_cov(a, b) + grad.d_cov(b, a);
            EXPECT_TRUE(oracle::gradient_close(an, fd, 1e-5)) << a << b;
        }
    }
}

TEST(FrustumMask, AxisPointInsideAndBehindOutside) {
    const CameraView cam = identity_camera();
    GaussianCloud cloud(2, 0);
    cloud.positions.row(0) << 0, 0, 0.5 * (cam.near + cam.far);
    cloud.positions.row(1) << 0, 0, -2.0;
    cloud.log_scales.setConstant(std::log(1e-3));
    const Mask m = frustum_mask(cloud, cam, 0.0);
    EXPECT_EQ(m[0], 1);
    EXPECT_EQ(m[1], 0);
}

TEST(FrustumMask, MonotoneInMargin) {
    fixtures::CloudSpec spec;
    spec.count = 500;
    spec.spread = 3.0;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 31);
    const CameraView cam = fixtures::random_camera(32, 64, 48);
    Mask prev = frustum_mask(cloud, cam, 0.0);
    for (double margin : {0.05, 0.1, 0.5, 1.0}) {
        const Mask m = frustum_mask(cloud, cam, margin);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (prev[i]) EXPECT_EQ(m[i], 1) << i;
        }
        prev = m;
    }
}

TEST(FrustumMask, NeverDropsAContributingGaussian) {
    fixtures::CloudSpec spec;
    spec.count = 1000;
    spec.spread = 2.0;
    spec.log_scale_mean = -2.3;
    spec.opacity_std = 2.0;
    const GaussianCloud cloud = fixtures::random_cloud(spec, 41);
    const CameraView cam = fixtures::random_camera(42, 48, 40, 3.0, 50.0);
    const Mask m = frustum_mask(cloud, cam, 0.0);
    std::size_t contributing = 0, in_image_agree = 0, in_image = 0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const bool c = oracle::contributes(cloud, i, cam);
        contributing += c;
        if (c) EXPECT_EQ(m[i], 1) << "gaussian " << i << " contributes but is masked out";
        const oracle::Splat s = oracle::project(cloud, i, cam);
        const bool centre_in_image = s.visible && s.mean.x() >= 0 && s.mean.x() <= cam.width() - 1 &&
                                     s.mean.y() >= 0 && s.mean.y() <= cam.height() - 1;
        if (centre_in_image && s.opacity >= 0.02) {
            ++in_image;
            in_image_agree += (m[i] == 1) == c;
        }
    }
    EXPECT_GT(contributing, 50u);
    EXPECT_EQ(in_image_agree, in_image);
}

TEST(FrustumMask, FarAwayGaussiansExcluded) {
    const CameraView cam = fixtures::look_at(Vec3(0, 0, 3), Vec3::Zero(), 32, 32, 45.0);
    GaussianCloud cloud(3, 0);
    cloud.positions.row(0) << 5.0, 0, 0;     // far to the side
    cloud.positions.row(1) << 0, 0, 30.0;   // behind the camera
    cloud.positions.row(2) << 0, 0, -30.0;  // beyond the far plane
    cloud.log_scales.setConstant(std::log(0.01));
    const Mask m = frustum_mask(cloud, cam, 0.05);
    EXPECT_EQ(m, Mask({0, 0, 0}));
}

}  // namespace
}  // namespace veta
