#include "fixtures.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <unistd.h>

#include "veta/synthetic.hpp"

namespace fixtures {

veta::GaussianCloud random_cloud(const CloudSpec& spec, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-spec.spread, spec.spread);
    std::normal_distribution<double> g(0.0, 1.0);
    veta::GaussianCloud c(spec.count, spec.sh_degree);
    for (std::size_t i = 0; i < spec.count; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        c.positions.row(r) << u(rng), u(rng), u(rng);
        veta::Quat q(g(rng), g(rng), g(rng), g(rng));
        c.rotations.row(r) = q.normalized().transpose();
        for (int k = 0; k < 3; ++k) c.log_scales(r, k) = spec.log_scale_mean + spec.log_scale_jitter * g(rng);
        c.opacity_logits(r, 0) = spec.opacity_std * g(rng);
        for (Eigen::Index k = 0; k < c.sh_coeffs.cols(); ++k) c.sh_coeffs(r, k) = spec.sh_std * g(rng);
    }
    return c;
}

veta::CameraView look_at(const veta::Vec3& eye, const veta::Vec3& target, int width, int height, double fov_deg,
                         double timestamp) {
    const veta::Vec3 z = (target - eye).normalized();
    veta::Vec3 up = veta::Vec3::UnitZ();
    if (std::abs(z.dot(up)) > 0.99) up = veta::Vec3::UnitY();
    const veta::Vec3 x = z.cross(up).normalized();
    const veta::Vec3 y = z.cross(x);
    veta::Mat4 pose = veta::Mat4::Identity();
    pose.block<3, 1>(0, 0) = x;
    pose.block<3, 1>(0, 1) = y;
    pose.block<3, 1>(0, 2) = z;
    pose.block<3, 1>(0, 3) = eye;
    const double f = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
    const veta::Intrinsics k{f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
    return veta::CameraView::from_camera_to_world(pose, k, 0.1, 20.0, timestamp);
}

veta::CameraView random_camera(std::uint64_t seed, int width, int height, double radius, double fov_deg) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> t(0.0, 1.0);
    veta::Vec3 dir(g(rng), g(rng), g(rng));
    dir.normalize();
    const veta::Vec3 target(0.1 * g(rng), 0.1 * g(rng), 0.1 * g(rng));
    return look_at(radius * dir, target, width, height, fov_deg, t(rng));
}

veta::Image random_image(int rows, int cols, std::uint64_t seed, double lo, double hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    veta::Image img(rows, cols);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
    return img;
}

veta::Image smooth_image(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 1.0 + 4.0 * u(rng), fy = 1.0 + 4.0 * u(rng), phase = 6.0 * u(rng);
    const double cx = cols * u(rng), cy = rows * u(rng), w = 0.1 * cols + 0.2 * cols * u(rng);
    veta::Image img(rows, cols);
    for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < cols; ++x) {
            const double wave = std::sin(fx * x / cols * 2.0 * std::numbers::pi + phase) *
                                std::cos(fy * y / rows * 2.0 * std::numbers::pi);
            const double blob = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * w * w));
            img(y, x) = 0.45 + 0.2 * wave + 0.3 * blob + 0.03 * (u(rng) - 0.5);
        }
    }
    return img;
}

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

veta::Scene small_scene(const std::string& dir, std::uint64_t seed) {
    veta::SyntheticSceneSpec spec;
    spec.seed = seed;
    spec.blobs = 6;
    spec.frames = 10;
    spec.width = 32;
    spec.height = 32;
    spec.points_per_blob = 8;
    veta::generate_synthetic(spec, dir);
    return veta::load_scene(dir);
}

veta::TrainConfig small_config(const veta::Scene& scene, long iters, std::uint64_t seed) {
    veta::TrainConfig cfg = veta::TrainConfig::desk_scale(iters);
    veta::apply_scene(cfg, scene.manifest);
    cfg.seed = seed;
    cfg.net.width = 32;
    cfg.net.seed = seed + 1;
    return cfg;
}

}  // namespace fixtures
