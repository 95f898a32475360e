#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "veta/types.hpp"

namespace veta {

/// The three views of a thermal image compared by the feature loss.
enum class Aspect { App, Edg, Frq };

inline constexpr std::array<Aspect, 3> kAspects = {Aspect::App, Aspect::Edg, Aspect::Frq};
std::string_view aspect_name(Aspect a);

inline constexpr double kPreprocessEps = 1e-8;

/// A prediction/target pair after aspect-specific preprocessing. Edge and
/// frequency maps share one normalizer (the max over both images), so the pair
/// is processed together.
struct PreprocessedPair {
    Aspect kind = Aspect::App;
    Image pred;
    Image gt;
};

/// App: identity. Edg: Sobel magnitude / (pair max + 1e-8).
/// Frq: log(1 + |DFT|) with DC centered, / (pair max + 1e-8).
PreprocessedPair preprocess_pair(const Image& pred, const Image& gt, Aspect kind);

/// Single-image form (the image is its own pair).
Image preprocess(const Image& image, Aspect kind);

/// Gradient of Σ dL/dpred_pre · pred_pre w.r.t. pred; gt is treated as constant.
Image preprocess_pair_backward(const Image& pred, const Image& gt, Aspect kind, const Image& dL_dpred_pre);

/// Two stride-2, 3×3, zero-padded convolutions (1 → 16 → 32 channels) with a
/// ReLU between them.
struct TfeBranch {
    static constexpr int kChannels1 = 16;
    static constexpr int kChannels2 = 32;

    Aspect kind = Aspect::App;
    std::uint64_t seed = 0;
    bool frozen = true;
    std::vector<double> w1, b1;  // [16][1][3][3], [16]
    std::vector<double> w2, b2;  // [32][16][3][3], [32]

    /// Seeded init with per-layer std chosen so pre-activations have roughly
    /// unit variance; biases start at zero.
    static TfeBranch make(Aspect kind, std::uint64_t seed);

    std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

/// Flattened layer-2 activations; length 32·⌈H/4⌉·⌈W/4⌉.
Eigen::VectorXd tfe_features(const TfeBranch& branch, const Image& image);

struct TfeBackward {
    Image d_image;
    /// Only filled for unfrozen branches, in the order w1, b1, w2, b2.
    std::optional<Eigen::VectorXd> d_weights;
};

TfeBackward tfe_features_backward(const TfeBranch& branch, const Image& image, const Eigen::VectorXd& dL_dfeatures);

struct ThermalFeatureExtractor {
    std::array<TfeBranch, 3> branches;

    /// Branch seeds are derived from one base seed.
    static ThermalFeatureExtractor make(std::uint64_t seed);
    const TfeBranch& branch(Aspect a) const { return branches[static_cast<std::size_t>(a)]; }
};

}  // namespace veta
