#include "veta/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "veta/image_io.hpp"
#include "veta/random.hpp"
#include "veta/rasterizer.hpp"

namespace veta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kShC0 = 0.28209479177387814;

enum SeedStream : std::uint64_t { kBlobStream = 1, kPointStream = 2, kNoiseStream = 100 };

double deg(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

void SyntheticSceneSpec::validate() const {
    if (blobs <= 0) throw ConfigError("blobs must be positive");
    if (frames <= 0) throw ConfigError("frames must be positive");
    if (test_every < 0) throw ConfigError("test_every must be non-negative");
    if (width < 11 || height < 11) throw ConfigError("image size must be at least 11x11");
    if (!(view_k >= 0.0)) throw ConfigError("view_k must be non-negative");
    if (!(temperature_min >= 0.0 && temperature_max <= 1.0 && temperature_min <= temperature_max)) {
        throw ConfigError("temperature range must satisfy 0 <= min <= max <= 1");
    }
    if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw ConfigError("fov_deg must lie in (0, 180)");
    if (!(orbit_radius > std::sqrt(3.0) * blob_half_extent)) throw ConfigError("orbit must enclose the blob volume");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    if (!(scale_min > 0.0 && scale_min <= scale_max)) throw ConfigError("scale range must satisfy 0 < min <= max");
    if (!(blob_opacity > 0.0 && blob_opacity < 1.0)) throw ConfigError("blob_opacity must lie in (0, 1)");
    if (points_per_blob <= 0) throw ConfigError("points_per_blob must be positive");
}

double view_modulation(const Vec3& view_dir, const Vec3& normal, double k) {
    if (k == 0.0) return 1.0;
    const double c = std::abs(view_dir.normalized().dot(normal.normalized()));
    return std::pow(c, k);
}

std::vector<GtBlob> sample_blobs(const SyntheticSceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(derive_seed(spec.seed, kBlobStream));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<GtBlob> blobs(static_cast<std::size_t>(spec.blobs));
    const double h = spec.blob_half_extent;
    for (auto& b : blobs) {
        for (int d = 0; d < 3; ++d) b.center[d] = -h + 2.0 * h * unit(rng);
        Quat q;
        for (int d = 0; d < 4; ++d) q[d] = normal(rng);
        b.rotation = q.normalized();
        const double lo = std::log(spec.scale_min), hi = std::log(spec.scale_max);
        for (int d = 0; d < 3; ++d) b.log_scale[d] = lo + (hi - lo) * unit(rng);
        b.opacity = spec.blob_opacity;
        b.temperature = spec.temperature_min + (spec.temperature_max - spec.temperature_min) * unit(rng);
        Vec3 n;
        for (int d = 0; d < 3; ++d) n[d] = normal(rng);
        b.normal = n.normalized();
    }
    return blobs;
}

Image render_blobs(const std::vector<GtBlob>& blobs, const CameraView& cam, double k, double background) {
    GaussianCloud cloud(blobs.size(), 0);
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const GtBlob& b = blobs[i];
        cloud.positions.row(r) = b.center.transpose();
        cloud.rotations.row(r) = b.rotation.transpose();
        cloud.log_scales.row(r) = b.log_scale.transpose();
        cloud.opacity_logits(r, 0) = logit(b.opacity);
        const double apparent = b.temperature * view_modulation(cam.view_dir, b.normal, k);
        cloud.sh_coeffs(r, 0) = (apparent - kShOffset) / kShC0;
    }
    RenderOptions opt;
    opt.background = background;
    opt.exact = true;
    return render(cloud, cam, opt).image.intensity;
}

Intrinsics synthetic_intrinsics(const SyntheticSceneSpec& spec) {
    const double f = 0.5 * spec.width / std::tan(0.5 * deg(spec.fov_deg));
    return {f, f, 0.5 * (spec.width - 1), 0.5 * (spec.height - 1), spec.width, spec.height};
}

Mat4 orbit_pose(const SyntheticSceneSpec& spec, int frame) {
    const double u = spec.frames > 1 ? static_cast<double>(frame) / spec.frames : 0.0;
    const double azimuth = 2.0 * std::numbers::pi * u;
    const double mid = 0.5 * (spec.elevation_min_deg + spec.elevation_max_deg);
    const double amp = 0.5 * (spec.elevation_max_deg - spec.elevation_min_deg);
    const double elevation = deg(mid + amp * std::sin(6.0 * std::numbers::pi * u));
    const Vec3 eye = spec.orbit_radius *
                     Vec3(std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    // OpenCV axes: z towards the origin, x to the right, y down (world up is +z).
    const Vec3 z = (-eye).normalized();
    const Vec3 x = z.cross(Vec3::UnitZ()).normalized();
    const Vec3 y = z.cross(x);
    Mat4 pose = Mat4::Identity();
    pose.block<3, 1>(0, 0) = x;
    pose.block<3, 1>(0, 1) = y;
    pose.block<3, 1>(0, 2) = z;
    pose.block<3, 1>(0, 3) = eye;
    return pose;
}

namespace {

json blob_json(const GtBlob& b) {
    auto arr = [](const auto& v) {
        json a = json::array();
        for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
        return a;
    };
    return {{"center", arr(b.center)},        {"rotation", arr(b.rotation)},       {"log_scale", arr(b.log_scale)},
            {"opacity", b.opacity},           {"temperature", b.temperature},      {"normal", arr(b.normal)}};
}

}  // namespace

SceneManifest generate_synthetic(const SyntheticSceneSpec& spec, const std::string& dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(fs::path(dir) / "frames", ec);
    if (ec || !fs::is_directory(fs::path(dir) / "frames")) {
        throw IoError("cannot create scene directory " + dir + (ec ? ": " + ec.message() : std::string()));
    }

    const std::vector<GtBlob> blobs = sample_blobs(spec);
    SceneManifest m;
    m.intrinsics = synthetic_intrinsics(spec);
    m.near = 0.1;
    m.far = 2.0 * spec.orbit_radius + 10.0;
    const double h = spec.blob_half_extent + 3.0 * spec.scale_max;
    m.bbox_min = Vec3::Constant(-h);
    m.bbox_max = Vec3::Constant(h);
    m.background = 0.0;

    for (int i = 0; i < spec.frames; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "frames/%05d.png", i);
        const double t = spec.frames > 1 ? static_cast<double>(i) / (spec.frames - 1) : 0.0;
        m.frames.push_back({name, orbit_pose(spec, i), t});
        const bool is_test = spec.test_every > 0 && i % spec.test_every == spec.test_every - 1;
        (is_test ? m.test : m.train).push_back(static_cast<std::uint32_t>(i));
    }

    for (int i = 0; i < spec.frames; ++i) {
        Image img = render_blobs(blobs, m.camera(static_cast<std::size_t>(i)), spec.view_k, m.background);
        if (spec.noise_sigma > 0.0) {
            std::mt19937_64 rng(derive_seed(spec.seed, kNoiseStream + static_cast<std::uint64_t>(i)));
            std::normal_distribution<double> noise(0.0, spec.noise_sigma);
            for (Eigen::Index k = 0; k < img.size(); ++k) img.data()[k] += noise(rng);
        }
        write_image((fs::path(dir) / m.frames[static_cast<std::size_t>(i)].file).string(), img.cwiseMax(0.0).cwiseMin(1.0));
    }

    // Seed points as a sparse reconstruction would give them: samples of each blob.
    std::mt19937_64 rng(derive_seed(spec.seed, kPointStream));
    std::normal_distribution<double> normal(0.0, 1.0);
    PointCloud pts;
    const Eigen::Index n_pts = static_cast<Eigen::Index>(spec.blobs) * spec.points_per_blob;
    pts.xyz.resize(n_pts, 3);
    pts.intensity.resize(n_pts);
    Eigen::Index p = 0;
    for (const GtBlob& b : blobs) {
        const Mat3 rot = quat_to_rotation(b.rotation);
        const Vec3 s = b.log_scale.array().exp();
        for (int k = 0; k < spec.points_per_blob; ++k, ++p) {
            const Vec3 z(normal(rng), normal(rng), normal(rng));
            pts.xyz.row(p) = (b.center + rot * s.cwiseProduct(z)).transpose();
            pts.intensity[p] = b.temperature;
        }
    }
    write_ply((fs::path(dir) / kPointsName).string(), pts);

    json gt;
    gt["view_k"] = spec.view_k;
    gt["modulation"] = "temperature * |dot(camera_axis, normal)|^k";
    gt["blobs"] = json::array();
    for (const auto& b : blobs) gt["blobs"].push_back(blob_json(b));
    std::ofstream out(fs::path(dir) / kBlobsName);
    if (!out) throw IoError("cannot write " + (fs::path(dir) / kBlobsName).string());
    out << gt.dump(2) << "\n";
    out.close();

    save_manifest(dir, m);
    return m;
}

GtBlobFile load_gt_blobs(const std::string& dir) {
    const fs::path path = fs::path(dir) / kBlobsName;
    if (!fs::exists(path)) throw MissingFile(path.string());
    std::ifstream in(path);
    GtBlobFile out;
    try {
        const json j = json::parse(in);
        out.view_k = j.at("view_k").get<double>();
        for (const auto& b : j.at("blobs")) {
            GtBlob g;
            for (int d = 0; d < 3; ++d) {
                g.center[d] = b.at("center").at(d).get<double>();
                g.log_scale[d] = b.at("log_scale").at(d).get<double>();
                g.normal[d] = b.at("normal").at(d).get<double>();
            }
            for (int d = 0; d < 4; ++d) g.rotation[d] = b.at("rotation").at(d).get<double>();
            g.opacity = b.at("opacity").get<double>();
            g.temperature = b.at("temperature").get<double>();
            out.blobs.push_back(g);
        }
    } catch (const json::exception& e) {
        throw CorruptFile(path.string() + ": " + e.what());
    }
    return out;
}

}  // namespace veta
