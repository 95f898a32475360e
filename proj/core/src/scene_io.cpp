#include "veta/scene_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "veta/image_io.hpp"
#include "veta/parallel.hpp"

namespace veta {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kShC0 = 0.28209479177387814;

}  // namespace

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(s) + "' (expected train or test)");
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

CameraView SceneManifest::camera(std::size_t frame) const {
    const FrameRecord& f = frames.at(frame);
    return CameraView::from_camera_to_world(f.camera_to_world, intrinsics, near, far, f.timestamp);
}

void SceneManifest::validate() const {
    if (intrinsics.width <= 0 || intrinsics.height <= 0) throw CorruptFile("manifest: image size must be positive");
    if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) throw CorruptFile("manifest: focal lengths must be positive");
    if (!(near > 0.0) || !(far > near)) throw CorruptFile("manifest: need 0 < near < far");
    if (!(bbox_max.array() >= bbox_min.array()).all()) throw CorruptFile("manifest: bbox min exceeds max");
    for (const auto* split : {&train, &test}) {
        for (auto i : *split) {
            if (i >= frames.size()) throw CorruptFile("manifest: split index " + std::to_string(i) + " out of range");
        }
    }
    for (std::size_t k = 1; k < train.size(); ++k) {
        if (frames[train[k]].timestamp < frames[train[k - 1]].timestamp) {
            throw CorruptFile("manifest: train timestamps must be non-decreasing");
        }
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const FrameRecord& f = frames[i];
        if (!(f.timestamp >= 0.0 && f.timestamp <= 1.0)) {
            throw CorruptFile("manifest: frame " + std::to_string(i) + " timestamp outside [0, 1]");
        }
        try {
            camera(i).validate();
        } catch (const InvalidParameter& e) {
            throw CorruptFile("manifest: frame " + std::to_string(i) + ": " + e.what());
        }
    }
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw CorruptFile("manifest: expected a 3-vector");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::vector<std::uint32_t> indices_from(const json& j) {
    std::vector<std::uint32_t> out;
    for (const auto& v : j) out.push_back(v.get<std::uint32_t>());
    return out;
}

}  // namespace

void save_manifest(const std::string& dir, const SceneManifest& m) {
    json j;
    j["format"] = "veta-scene";
    j["version"] = 1;
    j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx},
                       {"cy", m.intrinsics.cy}, {"width", m.intrinsics.width}, {"height", m.intrinsics.height}};
    j["near"] = m.near;
    j["far"] = m.far;
    j["bbox"] = {{"min", vec_json(m.bbox_min)}, {"max", vec_json(m.bbox_max)}};
    j["background"] = m.background;
    j["points"] = m.points_file;
    json frames = json::array();
    for (const auto& f : m.frames) {
        json mat = json::array();
        for (int r = 0; r < 4; ++r) {
            mat.push_back(json::array({f.camera_to_world(r, 0), f.camera_to_world(r, 1), f.camera_to_world(r, 2),
                                       f.camera_to_world(r, 3)}));
        }
        frames.push_back({{"file", f.file}, {"camera_to_world", mat}, {"timestamp", f.timestamp}});
    }
    j["frames"] = frames;
    j["split"] = {{"train", m.train}, {"test", m.test}};

    const fs::path path = fs::path(dir) / kManifestName;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

SceneManifest load_manifest(const std::string& dir) {
    const fs::path path = fs::path(dir) / kManifestName;
    if (!fs::exists(path)) throw MissingFile(path.string());
    std::ifstream in(path);
    SceneManifest m;
    try {
        const json j = json::parse(in);
        if (j.value("format", std::string()) != "veta-scene") throw CorruptFile("manifest: unknown format tag");
        if (j.value("version", 0) != 1) throw VersionMismatch(path.string() + ": unsupported manifest version");
        const json& k = j.at("intrinsics");
        m.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                        k.at("cy").get<double>(), k.at("width").get<int>(), k.at("height").get<int>()};
        m.near = j.at("near").get<double>();
        m.far = j.at("far").get<double>();
        m.bbox_min = vec_from(j.at("bbox").at("min"));
        m.bbox_max = vec_from(j.at("bbox").at("max"));
        m.background = j.value("background", 0.0);
        m.points_file = j.value("points", std::string(kPointsName));
        for (const auto& f : j.at("frames")) {
            FrameRecord r;
            r.file = f.at("file").get<std::string>();
            r.timestamp = f.at("timestamp").get<double>();
            const json& mat = f.at("camera_to_world");
            if (!mat.is_array() || mat.size() != 4) throw CorruptFile("manifest: camera_to_world must be 4x4");
            for (int row = 0; row < 4; ++row) {
                if (!mat[row].is_array() || mat[row].size() != 4) throw CorruptFile("manifest: camera_to_world must be 4x4");
                for (int col = 0; col < 4; ++col) r.camera_to_world(row, col) = mat[row][col].get<double>();
            }
            m.frames.push_back(std::move(r));
        }
        m.train = indices_from(j.at("split").at("train"));
        m.test = indices_from(j.at("split").at("test"));
    } catch (const json::exception& e) {
        throw CorruptFile(path.string() + ": malformed manifest (" + e.what() + ")");
    }
    try {
        m.validate();
    } catch (const CorruptFile& e) {
        throw CorruptFile(path.string() + ": " + e.what());
    }
    return m;
}

void write_ply(const std::string& path, const PointCloud& points) {
    if (points.intensity.size() != points.xyz.rows()) throw ShapeMismatch("write_ply: intensity length mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nproperty float intensity\nend_header\n";
    char buf[128];
    for (Eigen::Index i = 0; i < points.xyz.rows(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g %.9g\n", points.xyz(i, 0), points.xyz(i, 1), points.xyz(i, 2),
                      points.intensity[i]);
        out << buf;
    }
}

PointCloud read_ply(const std::string& path) {
    if (!fs::exists(path)) throw MissingFile(path);
    std::ifstream in(path);
    std::string line;
    auto fail = [&](const std::string& why) -> CorruptFile { return CorruptFile(path + ": " + why); };
    if (!std::getline(in, line) || line != "ply") throw fail("missing 'ply' signature");
    long long count = -1;
    std::vector<std::string> props;
    bool in_vertex = false;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt != "ascii") throw UnsupportedFormat(path + ": only ASCII PLY is supported");
        } else if (word == "element") {
            std::string name;
            ss >> name;
            in_vertex = name == "vertex";
            if (in_vertex && !(ss >> count)) throw fail("bad vertex count");
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            if (type == "list") throw fail("list properties are not supported on vertices");
            props.push_back(name);
        } else if (word == "end_header") {
            break;
        }
    }
    if (count < 0) throw fail("no vertex element");
    std::array<int, 4> col = {-1, -1, -1, -1};
    const std::array<const char*, 4> wanted = {"x", "y", "z", "intensity"};
    for (std::size_t w = 0; w < 4; ++w) {
        const auto it = std::find(props.begin(), props.end(), wanted[w]);
        if (it == props.end()) throw fail(std::string("missing vertex property '") + wanted[w] + "'");
        col[w] = static_cast<int>(it - props.begin());
    }
    PointCloud pc;
    pc.xyz.resize(count, 3);
    pc.intensity.resize(count);
    std::vector<double> row(props.size());
    for (long long i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw fail("truncated vertex list");
        std::istringstream ss(line);
        for (auto& v : row) {
            if (!(ss >> v)) throw fail("malformed vertex line " + std::to_string(i));
        }
        for (int d = 0; d < 3; ++d) pc.xyz(i, d) = row[static_cast<std::size_t>(col[static_cast<std::size_t>(d)])];
        pc.intensity[i] = row[static_cast<std::size_t>(col[3])];
    }
    return pc;
}

Eigen::VectorXd mean_knn_distance(const PointCloud& points, int k) {
    const std::size_t n = points.size();
    Eigen::VectorXd out(static_cast<Eigen::Index>(n));
    parallel_for(n, [&](std::size_t i) {
        std::vector<double> best;
        best.reserve(static_cast<std::size_t>(k) + 1);
        const auto p = points.xyz.row(static_cast<Eigen::Index>(i));
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double d = (points.xyz.row(static_cast<Eigen::Index>(j)) - p).norm();
            if (best.size() < static_cast<std::size_t>(k) || d < best.back()) {
                best.insert(std::upper_bound(best.begin(), best.end(), d), d);
                if (best.size() > static_cast<std::size_t>(k)) best.pop_back();
            }
        }
        double sum = 0.0;
        for (double d : best) sum += d;
        out[static_cast<Eigen::Index>(i)] = best.empty() ? 0.0 : sum / static_cast<double>(best.size());
    });
    return out;
}

GaussianCloud initial_cloud(const PointCloud& points, int sh_degree) {
    if (points.size() == 0) throw InvalidParameter("initial_cloud: empty point cloud");
    GaussianCloud c(points.size(), sh_degree);
    const Eigen::VectorXd dist = mean_knn_distance(points, 3);
    const double opacity = logit(0.1);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        c.positions.row(r) = points.xyz.row(r);
        // A lone point has no neighbours; give it a small default footprint.
        const double scale = dist[r] > 0.0 ? std::max(dist[r], 1e-7) : 0.01;
        c.log_scales.row(r).setConstant(std::log(scale));
        c.opacity_logits(r, 0) = opacity;
        c.sh_coeffs(r, 0) = (points.intensity[r] - kShOffset) / kShC0;
    }
    return c;
}

Scene load_scene(const std::string& dir, bool load_images) {
    if (!fs::is_directory(dir)) throw MissingFile(dir);
    Scene s;
    s.dir = dir;
    s.manifest = load_manifest(dir);
    const std::string ply = (fs::path(dir) / s.manifest.points_file).string();
    s.initial = initial_cloud(read_ply(ply), kMaxShDegree);

    const auto& frames = s.manifest.frames;
    for (const auto& f : frames) {
        const fs::path p = fs::path(dir) / f.file;
        if (!fs::exists(p)) throw MissingFile(p.string());
    }
    if (!load_images) return s;
    s.images.resize(frames.size());
    parallel_for(frames.size(), [&](std::size_t i) { s.images[i] = read_image((fs::path(dir) / frames[i].file).string()); });
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (s.images[i].rows() != s.manifest.intrinsics.height || s.images[i].cols() != s.manifest.intrinsics.width) {
            throw ShapeMismatch(frames[i].file + ": image is " + std::to_string(s.images[i].cols()) + "x" +
                                std::to_string(s.images[i].rows()) + ", manifest says " +
                                std::to_string(s.manifest.intrinsics.width) + "x" +
                                std::to_string(s.manifest.intrinsics.height));
        }
    }
    return s;
}

std::vector<TrainingView> split_views(const Scene& scene, Split split) {
    if (scene.images.size() != scene.manifest.frames.size()) {
        throw InvalidParameter("split_views: scene was loaded without images");
    }
    std::vector<TrainingView> out;
    for (auto i : scene.manifest.indices(split)) out.push_back({scene.manifest.camera(i), scene.images[i]});
    return out;
}

void apply_scene(TrainConfig& cfg, const SceneManifest& manifest) {
    cfg.background = manifest.background;
    cfg.scene_extent = manifest.extent();
    cfg.net.scene_center = manifest.center();
    cfg.net.scene_extent = manifest.extent();
    cfg.net.translation_bound = kTranslationBoundFraction * manifest.extent();
}

}  // namespace veta
