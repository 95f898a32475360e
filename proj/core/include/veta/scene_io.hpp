#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "veta/camera.hpp"
#include "veta/gaussian.hpp"
#include "veta/trainer.hpp"

namespace veta {

inline constexpr const char* kManifestName = "scene.json";
inline constexpr const char* kPointsName = "points.ply";
inline constexpr const char* kBlobsName = "gt_blobs.json";

struct FrameRecord {
    std::string file;  // relative to the scene directory
    Mat4 camera_to_world = Mat4::Identity();
    double timestamp = 0.0;
};

enum class Split { Train, Test };
Split parse_split(std::string_view s);
std::string_view split_name(Split s);

struct SceneManifest {
    Intrinsics intrinsics;
    double near = 0.01;
    double far = 100.0;
    Vec3 bbox_min = Vec3::Constant(-1.0);
    Vec3 bbox_max = Vec3::Constant(1.0);
    double background = 0.0;
    std::string points_file = kPointsName;
    std::vector<FrameRecord> frames;
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> test;

    Vec3 center() const { return 0.5 * (bbox_min + bbox_max); }
    /// Half the bounding-box diagonal.
    double extent() const { return 0.5 * (bbox_max - bbox_min).norm(); }
    CameraView camera(std::size_t frame) const;
    const std::vector<std::uint32_t>& indices(Split s) const { return s == Split::Train ? train : test; }

    /// Throws CorruptFile for structural problems (bad indices, unsorted train
    /// timestamps, non-orthonormal poses, empty depth range).
    void validate() const;
};

/// Reads and validates `dir/scene.json`.
SceneManifest load_manifest(const std::string& dir);
void save_manifest(const std::string& dir, const SceneManifest& manifest);

struct PointCloud {
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> xyz;
    Eigen::VectorXd intensity;

    std::size_t size() const { return static_cast<std::size_t>(xyz.rows()); }
};

/// ASCII PLY with float properties x, y, z and intensity.
void write_ply(const std::string& path, const PointCloud& points);
PointCloud read_ply(const std::string& path);

/// Mean distance from each point to its three nearest neighbours.
Eigen::VectorXd mean_knn_distance(const PointCloud& points, int k = 3);

/// Isotropic Gaussians at the points: scale = mean 3-NN distance, σ(o) = 0.1,
/// DC SH chosen so the rendered intensity equals the point intensity.
GaussianCloud initial_cloud(const PointCloud& points, int sh_degree);

struct Scene {
    std::string dir;
    SceneManifest manifest;
    GaussianCloud initial;
    std::vector<Image> images;  // one per frame, empty when images were not loaded
};

/// Loads manifest, point cloud and (optionally) all frames. Errors:
/// MissingFile naming the path, CorruptFile for a malformed manifest or PLY,
/// ShapeMismatch when a frame's size differs from the intrinsics.
Scene load_scene(const std::string& dir, bool load_images = true);

/// Copies background, extent and centre of the scene into a training config
/// and scales the deformation bound B to the extent.
void apply_scene(TrainConfig& cfg, const SceneManifest& manifest);

/// Camera/image pairs of one split, in manifest order.
std::vector<TrainingView> split_views(const Scene& scene, Split split);

}  // namespace veta
