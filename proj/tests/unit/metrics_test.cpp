#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "veta/metrics.hpp"
#include "veta/rasterizer.hpp"

namespace veta {
namespace {

std::vector<double> uniform(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

TEST(EvaluateImages, ClosedForms) {
    const std::vector<Image> gt = {fixtures::random_image(16, 16, 1), fixtures::smooth_image(16, 16, 2)};
    const std::vector<std::uint32_t> ids = {4, 9};
    const EvalReport self = evaluate_images(gt, gt, ids);
    ASSERT_EQ(self.views.size(), 2u);
    EXPECT_EQ(self.mean_psnr, kPsnrCap);
    EXPECT_NEAR(self.mean_ssim, 1.0, 1e-12);
    EXPECT_EQ(self.views[1].view_id, 9u);

    const std::vector<Image> zero = {Image::Zero(12, 12)}, half = {Image::Constant(12, 12, 0.5)};
    const std::vector<std::uint32_t> one = {0};
    EXPECT_NEAR(evaluate_images(zero, half, one).mean_psnr, 6.0206, 1e-4);

    const std::string csv = self.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "view_id,psnr_db,ssim");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_THROW(evaluate_images(gt, zero, ids), ShapeMismatch);
}

class EvaluateTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fixtures::TempDir("eval");
        scene_ = new Scene(fixtures::small_scene(dir_->str(), 3));
    }
    static void TearDownTestSuite() {
        delete scene_;
        delete dir_;
    }
    static fixtures::TempDir* dir_;
    static Scene* scene_;
};
fixtures::TempDir* EvaluateTest::dir_ = nullptr;
Scene* EvaluateTest::scene_ = nullptr;

TEST_F(EvaluateTest, MatchesIndependentMetricOracles) {
    Model model = Model::create(fixtures::small_config(*scene_, 10, 2), scene_->initial);
    model.net.randomize_heads(0.05, 3);
    const EvalReport r = evaluate(model, *scene_, Split::Test);
    ASSERT_EQ(r.views.size(), scene_->manifest.test.size());
    for (std::size_t k = 0; k < r.views.size(); ++k) {
        const std::uint32_t id = scene_->manifest.test[k];
        const Image img = render_view(model.cloud, model.net, scene_->manifest.camera(id), model.config);
        EXPECT_EQ(r.views[k].view_id, id);
        EXPECT_NEAR(r.views[k].psnr_db, oracle::psnr(img, scene_->images[id]), 1e-9);
        EXPECT_NEAR(r.views[k].ssim, oracle::ssim(img, scene_->images[id]), 1e-6);
    }
    EXPECT_EQ(evaluate(model, *scene_, Split::Test).to_csv(), r.to_csv());
}

TEST_F(EvaluateTest, IncompatibleIntrinsicsRejected) {
    Model model = Model::create(fixtures::small_config(*scene_, 10), scene_->initial);
    Intrinsics k = scene_->manifest.intrinsics;
    k.width += 8;
    model.intrinsics = k;
    EXPECT_THROW(evaluate(model, *scene_, Split::Test), ShapeMismatch);
}

TEST_F(EvaluateTest, UntrainedNetHasZeroOutputInformation) {
    const Model model = Model::create(fixtures::small_config(*scene_, 10), scene_->initial);
    std::vector<CameraView> cams;
    for (auto i : scene_->manifest.train) cams.push_back(scene_->manifest.camera(i));
    const MiReport r = embedding_mi_report(model.net, model.cloud, cams);
    EXPECT_TRUE(r.low_sample_warning);
    EXPECT_EQ(r.samples, cams.size());
    ASSERT_EQ(r.entries.size(), 6u);
    for (const auto& e : r.entries) {
        if (e.a == "output_norm" || e.b == "output_norm") EXPECT_EQ(e.mi, 0.0) << e.a << "/" << e.b;
        EXPECT_GE(e.mi, 0.0);
    }
    EXPECT_EQ(embedding_mi_report(model.net, model.cloud, cams).to_csv(), r.to_csv());
}

TEST(MutualInformation, SelfInformationIsEntropy) {
    const std::vector<double> a = uniform(2000, 1);
    std::vector<double> neg(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i];
    const double h = binned_entropy(a);
    EXPECT_NEAR(mutual_information(a, a), h, 1e-12);
    EXPECT_NEAR(mutual_information(a, neg), h, 1e-12);
    EXPECT_GT(h, 2.7);
    EXPECT_LE(h, std::log(16.0) + 1e-12);
}

TEST(MutualInformation, IndependentUniformsNearZero) {
    EXPECT_LT(mutual_information(uniform(10000, 2), uniform(10000, 3)), 0.05);
}

TEST(MutualInformation, SymmetricNonNegativeAndBounded) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(150 + trial), b(a.size());
        const double rho = trial / 200.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = n(rng);
            b[i] = rho * a[i] + (1.0 - rho) * n(rng);
        }
        const double ab = mutual_information(a, b), ba = mutual_information(b, a);
        EXPECT_EQ(ab, ba);
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, std::min(binned_entropy(a), binned_entropy(b)) + 1e-12);
    }
}

TEST(MutualInformation, ConstantAndShortInputs) {
    const std::vector<double> a = uniform(200, 5), c(200, 0.7);
    EXPECT_EQ(mutual_information(a, c), 0.0);
    EXPECT_EQ(mutual_information(c, a), 0.0);
    EXPECT_THROW(mutual_information(uniform(99, 6), uniform(99, 7)), InvalidParameter);
    EXPECT_THROW(mutual_information(uniform(100, 6), uniform(101, 7)), ShapeMismatch);
}

}  // namespace
}  // namespace veta
