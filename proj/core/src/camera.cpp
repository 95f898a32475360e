#include "veta/camera.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

namespace veta {

CameraView CameraView::from_camera_to_world(const Mat4& cam_to_world, const Intrinsics& intrinsics, double near,
                                            double far, double timestamp) {
    CameraView cam;
    const Mat3 r_c2w = cam_to_world.topLeftCorner<3, 3>();
    const Vec3 t_c2w = cam_to_world.topRightCorner<3, 1>();
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r_c2w.transpose();
    cam.world_to_cam.topRightCorner<3, 1>() = -r_c2w.transpose() * t_c2w;
    cam.intrinsics = intrinsics;
    cam.near = near;
    cam.far = far;
    cam.timestamp = timestamp;
    cam.cam_center = t_c2w;
    cam.view_dir = (r_c2w * Vec3::UnitZ()).normalized();
    return cam;
}

void CameraView::validate() const {
    const Mat3 r = rotation();
    if (!world_to_cam.allFinite()) throw InvalidParameter("CameraView: non-finite world_to_cam");
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
        throw InvalidParameter("CameraView: rotation block is not orthonormal");
    }
    if (!(near > 0.0 && near < far)) throw InvalidParameter("CameraView: need 0 < near < far");
    if (intrinsics.width <= 0 || intrinsics.height <= 0) throw InvalidParameter("CameraView: empty image");
    if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) throw InvalidParameter("CameraView: focal length <= 0");
}

Vec2 project_point(const Vec3& t, const Intrinsics& k) {
    return {k.fx * t.x() / t.z() + k.cx, k.fy * t.y() / t.z() + k.cy};
}

namespace {

Eigen::Matrix<double, 2, 3> perspective_jacobian(const Vec3& t, const Intrinsics& k) {
    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    Eigen::Matrix<double, 2, 3> j;
    j << k.fx * inv_z, 0.0, -k.fx * t.x() * inv_z2, 0.0, k.fy * inv_z, -k.fy * t.y() * inv_z2;
    return j;
}

}  // namespace

std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov, const CameraView& cam) {
    const Vec3 t = cam.rotation() * mean + cam.translation();
    if (!(t.z() > cam.near) || t.z() > cam.far) return std::nullopt;

    const Eigen::Matrix<double, 2, 3> m = perspective_jacobian(t, cam.intrinsics) * cam.rotation();
    Mat2 cov2d = m * cov * m.transpose();
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0) += kCov2dFloor;
    cov2d(1, 1) += kCov2dFloor;

    const double det = cov2d.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;

    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));

    ProjectedGaussian p;
    p.mean2d = project_point(t, cam.intrinsics);
    p.cov2d = cov2d;
    p.depth = t.z();
    p.radius = 3.0 * std::sqrt(lambda_max);
    p.cam_point = t;
    return p;
}

ProjectionGrad project_gaussian_backward(const Vec3& mean, const Mat3& cov, const CameraView& cam,
                                         const Vec2& dL_dmean2d, const Mat2& dL_dcov2d) {
    const Intrinsics& k = cam.intrinsics;
    const Mat3 w = cam.rotation();
    const Vec3 t = w * mean + cam.translation();
    const Eigen::Matrix<double, 2, 3> j = perspective_jacobian(t, k);
    const Eigen::Matrix<double, 2, 3> m = j * w;
    const Mat2 g = 0.5 * (dL_dcov2d + dL_dcov2d.transpose());

    ProjectionGrad out;
    out.d_cov = m.transpose() * g * m;

    // Σ̂ = M Σ Mᵀ, M = J W  =>  dL/dM = 2 G M Σ, dL/dJ = dL/dM Wᵀ.
    const Eigen::Matrix<double, 2, 3> dm = 2.0 * g * m * cov;
    const Eigen::Matrix<double, 2, 3> dj = dm * w.transpose();

    const double inv_z = 1.0 / t.z();
    const double inv_z2 = inv_z * inv_z;
    const double inv_z3 = inv_z2 * inv_z;
    Vec3 dt = Vec3::Zero();
    dt.x() += dj(0, 2) * (-k.fx * inv_z2);
    dt.y() += dj(1, 2) * (-k.fy * inv_z2);
    dt.z() += dj(0, 0) * (-k.fx * inv_z2) + dj(0, 2) * (2.0 * k.fx * t.x() * inv_z3) +
              dj(1, 1) * (-k.fy * inv_z2) + dj(1, 2) * (2.0 * k.fy * t.y() * inv_z3);

    dt.x() += dL_dmean2d.x() * k.fx * inv_z;
    dt.y() += dL_dmean2d.y() * k.fy * inv_z;
    dt.z() += -dL_dmean2d.x() * k.fx * t.x() * inv_z2 - dL_dmean2d.y() * k.fy * t.y() * inv_z2;

    out.d_mean = w.transpose() * dt;
    return out;
}

Mask frustum_mask(const GaussianCloud& cloud, const CameraView& cam, double margin, const FrustumOptions& options) {
    if (margin < 0.0) throw InvalidParameter("frustum_mask: margin must be >= 0");
    const Intrinsics& k = cam.intrinsics;
    const double u_min = -0.5 - options.guard_px;
    const double u_max = k.width - 0.5 + options.guard_px;
    const double v_min = -0.5 - options.guard_px;
    const double v_max = k.height - 0.5 + options.guard_px;

    // Inward unit normals of the four side planes; they pass through the
    // camera center so the offset is zero.
    std::array<Vec3, 4> normals = {
        Vec3(1.0, 0.0, -(u_min - k.cx) / k.fx), Vec3(-1.0, 0.0, (u_max - k.cx) / k.fx),
        Vec3(0.0, 1.0, -(v_min - k.cy) / k.fy), Vec3(0.0, -1.0, (v_max - k.cy) / k.fy)};
    for (auto& n : normals) n.normalize();

    // The splat extent uses the affine Jacobian J at the centre, whose norm
    // grows as sqrt(1 + |p|²) with p = (x, y)/z. The sphere is widened by the
    // worst case of that factor over every centre within `margin`.
    const double aspect = std::max(k.fx, k.fy) / std::min(k.fx, k.fy);
    const Mat3 w = cam.rotation();
    const Vec3 trans = cam.translation();
    Mask mask(cloud.size(), 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Vec3 t = w * cloud.position(i) + trans;
        // Projection culls on centre depth alone, so only the margin applies.
        if (t.z() + margin <= cam.near || t.z() - margin > cam.far) continue;
        const double z_min = std::max(t.z() - margin, cam.near);
        const double tan_max = (t.head<2>().norm() + margin) / z_min;
        const double sigma = std::exp(cloud.log_scale(i).maxCoeff()) * options.scale_inflation;
        const double radius = 3.0 * sigma * aspect * std::sqrt(1.0 + tan_max * tan_max) + margin;
        bool inside = true;
        for (const auto& n : normals) {
            if (!inside) break;
            inside = n.dot(t) >= -radius;
        }
        mask[i] = inside ? 1 : 0;
    }
    return mask;
}

}  // namespace veta
