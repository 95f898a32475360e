#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "veta/camera.hpp"
#include "veta/gaussian.hpp"
#include "veta/scene_io.hpp"
#include "veta/trainer.hpp"
#include "veta/types.hpp"

namespace fixtures {

struct CloudSpec {
    std::size_t count = 16;
    int sh_degree = 3;
    double spread = 0.5;       // positions uniform in [−spread, spread]³
    double log_scale_mean = -2.7;
    double log_scale_jitter = 0.3;
    double sh_std = 0.15;
    double opacity_std = 1.0;
};

veta::GaussianCloud random_cloud(const CloudSpec& spec, std::uint64_t seed);

/// Pinhole camera at `eye` looking at `target`, world up +z.
veta::CameraView look_at(const veta::Vec3& eye, const veta::Vec3& target, int width, int height, double fov_deg,
                         double timestamp = 0.0);

/// Camera on a sphere of radius `radius` around the origin with a random
/// direction drawn from `seed`.
veta::CameraView random_camera(std::uint64_t seed, int width, int height, double radius = 2.5, double fov_deg = 50.0);

veta::Image random_image(int rows, int cols, std::uint64_t seed, double lo = 0.0, double hi = 1.0);

/// Smooth image with structure, for losses that need non-noise content.
veta::Image smooth_image(int rows, int cols, std::uint64_t seed);

/// Removes its directory on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "veta");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

/// Writes a small synthetic scene (10 frames of 32×32, 6 blobs) into `dir`
/// and loads it.
veta::Scene small_scene(const std::string& dir, std::uint64_t seed = 1);

/// Config for `scene` with horizons scaled to `iters` and a narrow network.
veta::TrainConfig small_config(const veta::Scene& scene, long iters, std::uint64_t seed = 0);

}  // namespace fixtures
