#include "veta/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Eigenvalues>

#include "veta/losses.hpp"
#include "veta/parallel.hpp"
#include "veta/rasterizer.hpp"

namespace veta {

std::string EvalReport::to_csv() const {
    std::string out = "view_id,psnr_db,ssim\n";
    char buf[128];
    for (const auto& v : views) {
        std::snprintf(buf, sizeof buf, "%u,%.6f,%.6f\n", v.view_id, v.psnr_db, v.ssim);
        out += buf;
    }
    return out;
}

std::string EvalReport::summary() const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "views=%zu mean_psnr_db=%.4f mean_ssim=%.4f", views.size(), mean_psnr, mean_ssim);
    return buf;
}

EvalReport evaluate_images(std::span<const Image> renders, std::span<const Image> gt,
                           std::span<const std::uint32_t> ids) {
    if (renders.size() != gt.size() || renders.size() != ids.size()) {
        throw ShapeMismatch("evaluate_images: renders, ground truth and ids differ in length");
    }
    EvalReport r;
    r.views.resize(renders.size());
    parallel_for(renders.size(), [&](std::size_t i) {
        r.views[i] = {ids[i], psnr(renders[i], gt[i]), ssim(renders[i], gt[i])};
    });
    for (const auto& v : r.views) {
        r.mean_psnr += v.psnr_db;
        r.mean_ssim += v.ssim;
    }
    if (!r.views.empty()) {
        r.mean_psnr /= static_cast<double>(r.views.size());
        r.mean_ssim /= static_cast<double>(r.views.size());
    }
    return r;
}

namespace {

void check_intrinsics(const Model& model, const Intrinsics& k) {
    if (!model.intrinsics) return;
    const Intrinsics& m = *model.intrinsics;
    auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)); };
    if (m.width != k.width || m.height != k.height || !close(m.fx, k.fx) || !close(m.fy, k.fy) || !close(m.cx, k.cx) ||
        !close(m.cy, k.cy)) {
        throw ShapeMismatch("checkpoint intrinsics do not match the scene (" + std::to_string(m.width) + "x" +
                            std::to_string(m.height) + " vs " + std::to_string(k.width) + "x" +
                            std::to_string(k.height) + ")");
    }
}

}  // namespace

std::vector<Image> render_split(const Model& model, const Scene& scene, Split split) {
    check_intrinsics(model, scene.manifest.intrinsics);
    const auto& ids = scene.manifest.indices(split);
    std::vector<Image> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(render_view(model.cloud, model.net, scene.manifest.camera(i), model.config));
    return out;
}

EvalReport evaluate(const Model& model, const Scene& scene, Split split) {
    if (scene.images.size() != scene.manifest.frames.size()) throw InvalidParameter("evaluate: scene images not loaded");
    const std::vector<Image> renders = render_split(model, scene, split);
    const auto& ids = scene.manifest.indices(split);
    std::vector<Image> gt;
    for (auto i : ids) gt.push_back(scene.images[i]);
    return evaluate_images(renders, gt, ids);
}

namespace {

struct Binning {
    std::vector<int> index;
    bool constant = false;
};

Binning bin_values(std::span<const double> a, int bins) {
    Binning b;
    b.index.resize(a.size());
    const auto [lo_it, hi_it] = std::minmax_element(a.begin(), a.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        b.constant = true;
        return b;
    }
    const double width = (hi - lo) / bins;
    for (std::size_t i = 0; i < a.size(); ++i) {
        b.index[i] = std::clamp(static_cast<int>(std::floor((a[i] - lo) / width)), 0, bins - 1);
    }
    return b;
}

// Sorting first makes the sum independent of term order, so swapping the
// arguments of mutual_information cannot change a single bit.
double sorted_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

void check_samples(std::span<const double> a, int bins) {
    if (bins < 2) throw InvalidParameter("need at least 2 bins");
    for (double v : a) {
        if (!std::isfinite(v)) throw InvalidParameter("non-finite sample");
    }
}

}  // namespace

double binned_entropy(std::span<const double> a, int bins) {
    check_samples(a, bins);
    if (a.empty()) throw InvalidParameter("binned_entropy: empty sample");
    const Binning b = bin_values(a, bins);
    if (b.constant) return 0.0;
    std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
    for (int i : b.index) counts[static_cast<std::size_t>(i)] += 1.0;
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (double c : counts) {
        if (c > 0.0) terms.push_back(-(c / n) * std::log(c / n));
    }
    return sorted_sum(std::move(terms));
}

double mutual_information(std::span<const double> a, std::span<const double> b, int bins) {
    if (a.size() != b.size()) throw ShapeMismatch("mutual_information: sample lengths differ");
    if (a.size() < 100) throw InvalidParameter("mutual_information: need at least 100 samples");
    check_samples(a, bins);
    check_samples(b, bins);
    const Binning ba = bin_values(a, bins), bb = bin_values(b, bins);
    if (ba.constant || bb.constant) return 0.0;

    const auto nb = static_cast<std::size_t>(bins);
    std::vector<double> joint(nb * nb, 0.0), pa(nb, 0.0), pb(nb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = static_cast<std::size_t>(ba.index[i]), y = static_cast<std::size_t>(bb.index[i]);
        joint[x * nb + y] += 1.0;
        pa[x] += 1.0;
        pb[y] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (std::size_t x = 0; x < nb; ++x) {
        for (std::size_t y = 0; y < nb; ++y) {
            const double c = joint[x * nb + y];
            if (c == 0.0) continue;
            // c·n / (ca·cb) is symmetric in (ca, cb) because products commute.
            terms.push_back((c / n) * std::log(c * n / (pa[x] * pb[y])));
        }
    }
    return std::max(0.0, sorted_sum(std::move(terms)));
}

std::string MiReport::to_csv() const {
    std::string out = "a,b,mi_nats\n";
    char buf[160];
    for (const auto& e : entries) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f\n", e.a.c_str(), e.b.c_str(), e.mi);
        out += buf;
    }
    return out;
}

namespace {

std::vector<double> first_component(const std::vector<Vec3>& samples) {
    Vec3 mean = Vec3::Zero();
    for (const auto& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& s : samples) cov += (s - mean) * (s - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 axis = eig.eigenvectors().col(2);
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(axis.dot(s - mean));
    return out;
}

}  // namespace

MiReport embedding_mi_report(const DeformationNet& net, const GaussianCloud& cloud, std::span<const CameraView> views,
                             int bins) {
    if (views.empty()) throw InvalidParameter("embedding_mi_report: no views");
    MiReport report;
    report.samples = views.size();
    report.low_sample_warning = views.size() < 100;

    const auto& cfg = net.config();
    std::vector<double> time, output;
    std::vector<Vec3> position, direction;
    for (const auto& cam : views) {
        time.push_back(cam.timestamp);
        position.push_back((cam.cam_center - cfg.scene_center) / cfg.scene_extent);
        direction.push_back(cam.view_dir);
        std::vector<double> norms(cloud.size());
        parallel_for(cloud.size(), [&](std::size_t i) {
            const DeformationOffsets d = evaluate_offsets(net, cloud.position(i), cam);
            norms[i] = std::sqrt(d.d_position.squaredNorm() + d.d_rotation.squaredNorm() + d.d_log_scale.squaredNorm());
        });
        double mean = 0.0;
        for (double v : norms) mean += v;
        output.push_back(cloud.size() ? mean / static_cast<double>(cloud.size()) : 0.0);
    }

    const std::vector<std::pair<std::string, std::vector<double>>> vars = {
        {"time", time},
        {"camera_position", first_component(position)},
        {"view_direction", first_component(direction)},
        {"output_norm", output},
    };
    // Pairwise MI needs 100 samples; smaller sets are padded by repetition so the
    // estimator still runs, and the warning flag is raised.
    auto padded = [&](const std::vector<double>& v) {
        std::vector<double> out = v;
        while (out.size() < 100) out.push_back(v[out.size() % v.size()]);
        return out;
    };
    for (std::size_t i = 0; i < vars.size(); ++i) {
        for (std::size_t j = i + 1; j < vars.size(); ++j) {
            const auto a = padded(vars[i].second), b = padded(vars[j].second);
            report.entries.push_back({vars[i].first, vars[j].first, mutual_information(a, b, bins)});
        }
    }
    return report;
}

}  // namespace veta
