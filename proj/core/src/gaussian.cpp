#include "veta/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace veta {
namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                          -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                          -0.5900435899266435};

int degree_from_count(std::size_t k) {
    for (int d = 0; d <= kMaxShDegree; ++d) {
        if (static_cast<std::size_t>(sh_coeff_count(d)) == k) return d;
    }
    throw InvalidParameter("SH coefficient count " + std::to_string(k) + " is not (L+1)^2 for L <= 3");
}

// dY_k / d(x, y, z) of the polynomial form of each basis function.
std::array<Vec3, 16> sh_basis_partials(int degree, const Vec3& d) {
    std::array<Vec3, 16> g;
    g.fill(Vec3::Zero());
    if (degree < 1) return g;
    const double x = d.x(), y = d.y(), z = d.z();
    g[1] = {0.0, -kC1, 0.0};
    g[2] = {0.0, 0.0, kC1};
    g[3] = {-kC1, 0.0, 0.0};
    if (degree < 2) return g;
    const double xx = x * x, yy = y * y, zz = z * z;
    g[4] = kC2[0] * Vec3(y, x, 0.0);
    g[5] = kC2[1] * Vec3(0.0, z, y);
    g[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    g[7] = kC2[3] * Vec3(z, 0.0, x);
    g[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return g;
    g[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    g[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    g[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    g[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    g[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
    return g;
}

}  // namespace

GaussianCloud::GaussianCloud(std::size_t n, int degree)
    : positions(ParamBlock::Zero(static_cast<Eigen::Index>(n), 3)),
      rotations(ParamBlock::Zero(static_cast<Eigen::Index>(n), 4)),
      log_scales(ParamBlock::Zero(static_cast<Eigen::Index>(n), 3)),
      opacity_logits(ParamBlock::Zero(static_cast<Eigen::Index>(n), 1)),
      sh_coeffs(ParamBlock::Zero(static_cast<Eigen::Index>(n), sh_coeff_count(degree))),
      sh_degree(degree) {
    if (degree < 0 || degree > kMaxShDegree) throw InvalidParameter("SH degree must be in [0, 3]");
    rotations.col(0).setOnes();
}

void GaussianCloud::validate() const {
    const auto n = positions.rows();
    if (positions.cols() != 3 || rotations.cols() != 4 || log_scales.cols() != 3 ||
        opacity_logits.cols() != 1 || sh_coeffs.cols() != sh_count()) {
        throw InvalidParameter("GaussianCloud: unexpected field widths");
    }
    if (rotations.rows() != n || log_scales.rows() != n || opacity_logits.rows() != n || sh_coeffs.rows() != n) {
        throw InvalidParameter("GaussianCloud: fields disagree on the number of Gaussians");
    }
    if (!positions.allFinite() || !rotations.allFinite() || !log_scales.allFinite() ||
        !opacity_logits.allFinite() || !sh_coeffs.allFinite()) {
        throw InvalidParameter("GaussianCloud: non-finite parameter");
    }
    if (!log_scales.array().exp().allFinite()) throw InvalidParameter("GaussianCloud: scale overflow");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (rotations.row(i).norm() < 1e-12) throw InvalidParameter("GaussianCloud: zero quaternion");
    }
}

GaussianCloud GaussianCloud::select(std::span<const std::uint8_t> keep) const {
    if (keep.size() != size()) throw ShapeMismatch("GaussianCloud::select: mask length differs from N");
    Eigen::Index kept = 0;
    for (auto k : keep) kept += k ? 1 : 0;
    GaussianCloud out(static_cast<std::size_t>(kept), sh_degree);
    Eigen::Index j = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        const auto r = static_cast<Eigen::Index>(i);
        out.positions.row(j) = positions.row(r);
        out.rotations.row(j) = rotations.row(r);
        out.log_scales.row(j) = log_scales.row(r);
        out.opacity_logits.row(j) = opacity_logits.row(r);
        out.sh_coeffs.row(j) = sh_coeffs.row(r);
        ++j;
    }
    return out;
}

void GaussianCloud::append(const GaussianCloud& other) {
    if (other.sh_degree != sh_degree) throw InvalidParameter("GaussianCloud::append: SH degree mismatch");
    auto stack = [](ParamBlock& a, const ParamBlock& b) {
        ParamBlock c(a.rows() + b.rows(), a.cols());
        c << a, b;
        a = std::move(c);
    };
    stack(positions, other.positions);
    stack(rotations, other.rotations);
    stack(log_scales, other.log_scales);
    stack(opacity_logits, other.opacity_logits);
    stack(sh_coeffs, other.sh_coeffs);
}

void GaussianCloud::renormalize_rotations() {
    for (Eigen::Index i = 0; i < rotations.rows(); ++i) rotations.row(i).normalize();
}

ParamGradients ParamGradients::zeros_like(const GaussianCloud& cloud) {
    ParamGradients g;
    g.positions = ParamBlock::Zero(cloud.positions.rows(), cloud.positions.cols());
    g.rotations = ParamBlock::Zero(cloud.rotations.rows(), cloud.rotations.cols());
    g.log_scales = ParamBlock::Zero(cloud.log_scales.rows(), cloud.log_scales.cols());
    g.opacity_logits = ParamBlock::Zero(cloud.opacity_logits.rows(), cloud.opacity_logits.cols());
    g.sh_coeffs = ParamBlock::Zero(cloud.sh_coeffs.rows(), cloud.sh_coeffs.cols());
    return g;
}

void ParamGradients::set_zero() {
    for_each_field([](std::string_view, ParamBlock& b) { b.setZero(); });
}

bool ParamGradients::all_finite() const {
    return positions.allFinite() && rotations.allFinite() && log_scales.allFinite() &&
           opacity_logits.allFinite() && sh_coeffs.allFinite();
}

ParamGradients& ParamGradients::operator+=(const ParamGradients& o) {
    positions += o.positions;
    rotations += o.rotations;
    log_scales += o.log_scales;
    opacity_logits += o.opacity_logits;
    sh_coeffs += o.sh_coeffs;
    return *this;
}

Mat3 quat_to_rotation(const Quat& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Mat3 build_covariance(const Quat& rotation, const Vec3& log_scale) {
    if (!rotation.allFinite() || !log_scale.allFinite()) {
        throw InvalidParameter("build_covariance: non-finite rotation or scale");
    }
    if (std::abs(rotation.norm() - 1.0) > 1e-6) {
        throw InvalidParameter("build_covariance: quaternion is not unit length");
    }
    const Mat3 m = quat_to_rotation(rotation) * log_scale.array().exp().matrix().asDiagonal();
    return m * m.transpose();
}

CovarianceGrad build_covariance_backward(const Quat& q, const Vec3& log_scale, const Mat3& dL_dcov) {
    const Vec3 s = log_scale.array().exp();
    const Mat3 r = quat_to_rotation(q);
    const Mat3 m = r * s.asDiagonal();
    const Mat3 g = 0.5 * (dL_dcov + dL_dcov.transpose());
    const Mat3 dm = 2.0 * g * m;

    CovarianceGrad out;
    const Mat3 rt_dm = r.transpose() * dm;
    for (int i = 0; i < 3; ++i) out.d_log_scale[i] = rt_dm(i, i) * s[i];

    const Mat3 dr = dm * s.asDiagonal();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    out.d_rotation[0] = 2.0 * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) +
                               x * dr(2, 1));
    out.d_rotation[1] = 2.0 * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - w * dr(1, 2) + z * dr(2, 0) +
                               w * dr(2, 1)) -
                        4.0 * x * (dr(1, 1) + dr(2, 2));
    out.d_rotation[2] = 2.0 * (x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) + z * dr(1, 2) - w * dr(2, 0) +
                               z * dr(2, 1)) -
                        4.0 * y * (dr(0, 0) + dr(2, 2));
    out.d_rotation[3] = 2.0 * (-w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) + y * dr(1, 2) + x * dr(2, 0) +
                               y * dr(2, 1)) -
                        4.0 * z * (dr(0, 0) + dr(1, 1));
    return out;
}

Quat normalize_quat(const Quat& q) { return q / q.norm(); }

Quat normalize_quat_backward(const Quat& q, const Quat& g) {
    const double n = q.norm();
    const Quat u = q / n;
    return (g - u * u.dot(g)) / n;
}

Activated activations(const GaussianCloud& cloud) {
    Activated a;
    a.opacities = cloud.opacity_logits.col(0).unaryExpr([](double o) { return sigmoid(o); });
    a.scales = cloud.log_scales.array().exp().matrix();
    a.rotations = cloud.rotations;
    for (Eigen::Index i = 0; i < a.rotations.rows(); ++i) a.rotations.row(i).normalize();
    return a;
}

std::array<double, 16> sh_basis(int degree, const Vec3& d) {
    std::array<double, 16> y{};
    y[0] = kC0;
    if (degree < 1) return y;
    const double x = d.x(), yy_ = d.y(), z = d.z();
    y[1] = -kC1 * yy_;
    y[2] = kC1 * z;
    y[3] = -kC1 * x;
    if (degree < 2) return y;
    const double xx = x * x, yy = yy_ * yy_, zz = z * z;
    y[4] = kC2[0] * x * yy_;
    y[5] = kC2[1] * yy_ * z;
    y[6] = kC2[2] * (2.0 * zz - xx - yy);
    y[7] = kC2[3] * x * z;
    y[8] = kC2[4] * (xx - yy);
    if (degree < 3) return y;
    y[9] = kC3[0] * yy_ * (3.0 * xx - yy);
    y[10] = kC3[1] * x * yy_ * z;
    y[11] = kC3[2] * yy_ * (4.0 * zz - xx - yy);
    y[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    y[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    y[14] = kC3[5] * z * (xx - yy);
    y[15] = kC3[6] * x * (xx - 3.0 * yy);
    return y;
}

double eval_thermal_intensity(std::span<const double> sh, const Vec3& view_dir) {
    const int degree = degree_from_count(sh.size());
    if (!view_dir.allFinite()) throw InvalidParameter("eval_thermal_intensity: non-finite direction");
    const auto basis = sh_basis(degree, view_dir);
    double v = 0.0;
    for (std::size_t k = 0; k < sh.size(); ++k) v += sh[k] * basis[k];
    return v;
}

double thermal_intensity(std::span<const double> sh, const Vec3& view_dir) {
    return std::clamp(eval_thermal_intensity(sh, view_dir) + kShOffset, 0.0, 1.0);
}

ShGrad eval_thermal_intensity_backward(std::span<const double> sh, const Vec3& view_dir, double dL_dvalue) {
    const int degree = degree_from_count(sh.size());
    const auto basis = sh_basis(degree, view_dir);
    const auto partials = sh_basis_partials(degree, view_dir);
    ShGrad g;
    for (std::size_t k = 0; k < sh.size(); ++k) {
        g.d_sh[k] = basis[k] * dL_dvalue;
        g.d_dir += partials[k] * (sh[k] * dL_dvalue);
    }
    return g;
}

}  // namespace veta
