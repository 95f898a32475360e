#include <benchmark/benchmark.h>

#include <random>

#include "veta/camera.hpp"
#include "veta/deformation.hpp"
#include "veta/losses.hpp"
#include "veta/rasterizer.hpp"
#include "veta/synthetic.hpp"

namespace {

veta::GaussianCloud random_cloud(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::normal_distribution<double> g(0.0, 1.0);
    veta::GaussianCloud c(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        c.positions.row(r) << u(rng), u(rng), u(rng);
        veta::Quat q(g(rng), g(rng), g(rng), g(rng));
        c.rotations.row(r) = q.normalized().transpose();
        c.log_scales.row(r).setConstant(std::log(0.03) + 0.3 * g(rng));
        c.opacity_logits(r, 0) = g(rng);
        for (Eigen::Index k = 0; k < c.sh_coeffs.cols(); ++k) c.sh_coeffs(r, k) = 0.2 * g(rng);
    }
    return c;
}

veta::CameraView bench_camera(int size) {
    veta::SyntheticSceneSpec spec;
    spec.width = spec.height = size;
    return veta::CameraView::from_camera_to_world(veta::orbit_pose(spec, 3), veta::synthetic_intrinsics(spec), 0.1,
                                                  20.0, 0.5);
}

void BM_RenderForward(benchmark::State& state) {
    const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 1);
    const auto cam = bench_camera(64);
    for (auto _ : state) benchmark::DoNotOptimize(veta::render(cloud, cam).image.intensity.sum());
}
BENCHMARK(BM_RenderForward)->Arg(256)->Arg(2048);

void BM_RenderBackward(benchmark::State& state) {
    const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 2);
    const auto cam = bench_camera(64);
    const auto res = veta::render(cloud, cam);
    const veta::Image grad = veta::Image::Constant(64, 64, 1.0 / 4096.0);
    for (auto _ : state) benchmark::DoNotOptimize(veta::render_backward(res.ctx, grad).params.positions.sum());
}
BENCHMARK(BM_RenderBackward)->Arg(256)->Arg(2048);

void BM_DeformForwardBackward(benchmark::State& state) {
    const auto cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 3);
    const auto cam = bench_camera(64);
    veta::DeformationNet net(veta::DeformationConfig{});
    const veta::Mask mask(cloud.size(), 1);
    for (auto _ : state) {
        auto d = veta::deform(net, cloud, cam, mask);
        auto g = veta::ParamGradients::zeros_like(d.cloud);
        g.positions.setConstant(1e-3);
        benchmark::DoNotOptimize(veta::deform_backward(net, d.ctx, g).net.sum());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DeformForwardBackward)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_DssimLoss(benchmark::State& state) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    veta::Image a(64, 64), b(64, 64);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = u(rng);
        b.data()[i] = u(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(veta::dssim_loss(a, b).value);
}
BENCHMARK(BM_DssimLoss);

void BM_MonoSsim(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    veta::Image a(64, 64), b(64, 64);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = u(rng);
        b.data()[i] = u(rng);
    }
    const auto tfe = veta::ThermalFeatureExtractor::make(6);
    for (auto _ : state) benchmark::DoNotOptimize(veta::mono_ssim(a, b, tfe, veta::MonoMode::Corrected).value);
}
BENCHMARK(BM_MonoSsim);

}  // namespace

BENCHMARK_MAIN();
