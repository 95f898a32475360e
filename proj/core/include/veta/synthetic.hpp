#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veta/camera.hpp"
#include "veta/scene_io.hpp"

namespace veta {

struct SyntheticSceneSpec {
    std::uint64_t seed = 0;
    int blobs = 24;
    double temperature_min = 0.3;
    double temperature_max = 0.9;
    /// Exponent k of the |cos(view_dir, normal)|^k modulation; 0 disables it.
    double view_k = 2.0;
    int frames = 50;
    int test_every = 5;  // frames with i % test_every == test_every − 1 form the test split
    int width = 64;
    int height = 64;
    double fov_deg = 45.0;
    double orbit_radius = 2.5;
    double elevation_min_deg = 10.0;
    double elevation_max_deg = 40.0;
    double noise_sigma = 0.005;
    double blob_half_extent = 0.5;  // centres lie in [−h, h]³
    double scale_min = 0.04;
    double scale_max = 0.12;
    double blob_opacity = 0.9;
    int points_per_blob = 16;

    /// Throws ConfigError on an invalid spec.
    void validate() const;
};

/// A ground-truth primitive. Its apparent temperature seen by a camera with
/// optical axis v is temperature · |v · normal|^k.
struct GtBlob {
    Vec3 center = Vec3::Zero();
    Quat rotation = Quat(1, 0, 0, 0);
    Vec3 log_scale = Vec3::Zero();
    double opacity = 0.9;
    double temperature = 0.5;
    Vec3 normal = Vec3::UnitZ();
};

double view_modulation(const Vec3& view_dir, const Vec3& normal, double k);

std::vector<GtBlob> sample_blobs(const SyntheticSceneSpec& spec);

/// Noise-free frame: exact front-to-back compositing of the blobs with their
/// per-view apparent temperature.
Image render_blobs(const std::vector<GtBlob>& blobs, const CameraView& cam, double k, double background = 0.0);

/// Camera-to-world pose on the orbit for frame i.
Mat4 orbit_pose(const SyntheticSceneSpec& spec, int frame);
Intrinsics synthetic_intrinsics(const SyntheticSceneSpec& spec);

/// Writes scene.json, frames/%05d.png, points.ply and gt_blobs.json into
/// `dir` (created if needed). Output is a pure function of the spec.
SceneManifest generate_synthetic(const SyntheticSceneSpec& spec, const std::string& dir);

struct GtBlobFile {
    double view_k = 0.0;
    std::vector<GtBlob> blobs;
};
GtBlobFile load_gt_blobs(const std::string& dir);

}  // namespace veta
