#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "veta/gaussian.hpp"
#include "veta/types.hpp"

namespace veta {

struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
};

/// Pinhole camera in the OpenCV convention (x right, y down, z forward).
/// Pixel (col, row) has its center at image coordinate (col, row).
struct CameraView {
    Mat4 world_to_cam = Mat4::Identity();
    Intrinsics intrinsics;
    double near = 0.01;
    double far = 100.0;
    double timestamp = 0.0;
    Vec3 cam_center = Vec3::Zero();
    Vec3 view_dir = Vec3::UnitZ();  // optical axis in world coordinates

    /// Builds a view from a camera-to-world pose, deriving W, x and v.
    static CameraView from_camera_to_world(const Mat4& cam_to_world, const Intrinsics& intrinsics, double near,
                                           double far, double timestamp);

    Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    int width() const { return intrinsics.width; }
    int height() const { return intrinsics.height; }

    /// Throws InvalidParameter when the rotation block is not orthonormal
    /// within 1e-6, the depth range is empty, or the image size is not positive.
    void validate() const;
};

/// Low-pass floor added to the diagonal of every projected covariance (px²).
inline constexpr double kCov2dFloor = 0.3;

struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    double radius = 0.0;
    Vec3 cam_point = Vec3::Zero();
};

/// Projects a 3D Gaussian through the affine (EWA) approximation of the
/// perspective map. Returns nullopt when the mean is outside (near, far] or
/// the 2D covariance is singular.
std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov, const CameraView& cam);

/// Perspective map of a camera-space point to pixel coordinates.
Vec2 project_point(const Vec3& cam_point, const Intrinsics& k);

struct ProjectionGrad {
    Vec3 d_mean = Vec3::Zero();
    Mat3 d_cov = Mat3::Zero();
};

/// Backward pass of project_gaussian. `dL_dcov2d` follows the symmetric
/// convention: it is the full-matrix gradient of a function of Σ̂ written in
/// terms of both off-diagonal entries.
ProjectionGrad project_gaussian_backward(const Vec3& mean, const Mat3& cov, const CameraView& cam,
                                         const Vec2& dL_dmean2d, const Mat2& dL_dcov2d);

using Mask = std::vector<std::uint8_t>;

struct FrustumOptions {
    /// Multiplier on the 3-sigma radius, covering bounded scale growth of a
    /// later deformation.
    double scale_inflation = 1.0;
    /// The image rectangle is widened by this many pixels before the side
    /// planes are built; it absorbs the 2D low-pass floor.
    double guard_px = 2.0;
};

/// mask[i] is set iff the centre depth is within `margin` of (near, far] and the
/// sphere at μ_i of radius 3·max(exp(s_i))·inflation·k + margin intersects the
/// four side planes (pixel bounds plus guard). `margin` bounds how far a later
/// deformation may move the centre; k ≥ 1 covers the growth of the affine splat
/// footprint away from the optical axis.
Mask frustum_mask(const GaussianCloud& cloud, const CameraView& cam, double margin,
                  const FrustumOptions& options = {});

}  // namespace veta
