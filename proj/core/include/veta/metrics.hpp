#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "veta/scene_io.hpp"
#include "veta/trainer.hpp"

namespace veta {

struct ViewMetrics {
    std::uint32_t view_id = 0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<ViewMetrics> views;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    /// Header `view_id,psnr_db,ssim`, one row per view.
    std::string to_csv() const;
    std::string summary() const;
};

/// Per-view metrics of renders against ground truth, in the given order.
EvalReport evaluate_images(std::span<const Image> renders, std::span<const Image> ground_truth,
                           std::span<const std::uint32_t> view_ids);

/// Renders every view of `split` with the model. Throws ShapeMismatch when the
/// model was trained with different intrinsics.
std::vector<Image> render_split(const Model& model, const Scene& scene, Split split);

EvalReport evaluate(const Model& model, const Scene& scene, Split split);

/// Plug-in entropy (nats) of `a` binned into `bins` equal-width bins.
double binned_entropy(std::span<const double> a, int bins = 16);

/// Plug-in mutual information (nats) from a joint histogram with `bins`
/// equal-width bins per axis. Requires equal lengths ≥ 100; a constant input
/// gives 0. Symmetric in its arguments bit for bit.
double mutual_information(std::span<const double> a, std::span<const double> b, int bins = 16);

struct MiEntry {
    std::string a;
    std::string b;
    double mi = 0.0;
};

struct MiReport {
    std::vector<MiEntry> entries;
    std::size_t samples = 0;
    bool low_sample_warning = false;  // fewer than 100 views

    std::string to_csv() const;
};

/// Per training view, summarizes the network inputs and outputs as scalars:
///   time            t
///   camera_position first principal component of the normalized camera centres
///   view_direction  first principal component of the optical axes
///   output_norm     mean over Gaussians of ‖(δμ, δr, δs)‖
/// and reports the pairwise MI of all four.
MiReport embedding_mi_report(const DeformationNet& net, const GaussianCloud& cloud,
                             std::span<const CameraView> views, int bins = 16);

}  // namespace veta
