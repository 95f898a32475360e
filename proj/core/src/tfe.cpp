#include "veta/tfe.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "veta/image_ops.hpp"
#include "veta/random.hpp"

namespace veta {

std::string_view aspect_name(Aspect a) {
    switch (a) {
        case Aspect::App: return "app";
        case Aspect::Edg: return "edg";
        case Aspect::Frq: return "frq";
    }
    return "?";
}

namespace {

Image log_spectrum(const Dft2& dft, const Image& img, ComplexImage* spectrum) {
    ComplexImage f = dft.forward(img);
    Image out = fft_shift(f.abs().log1p());
    if (spectrum) *spectrum = std::move(f);
    return out;
}

// Maps shared by the forward pass and its backward.
struct RawPair {
    Image pred, gt;
};

RawPair raw_maps(const Image& pred, const Image& gt, Aspect kind) {
    switch (kind) {
        case Aspect::App: return {pred, gt};
        case Aspect::Edg: return {sobel(pred).magnitude, sobel(gt).magnitude};
        case Aspect::Frq: {
            const Dft2 dft(pred.rows(), pred.cols());
            return {log_spectrum(dft, pred, nullptr), log_spectrum(dft, gt, nullptr)};
        }
    }
    return {pred, gt};
}

}  // namespace

PreprocessedPair preprocess_pair(const Image& pred, const Image& gt, Aspect kind) {
    require_same_shape(pred, gt, "preprocess_pair");
    RawPair raw = raw_maps(pred, gt, kind);
    if (kind == Aspect::App) return {kind, std::move(raw.pred), std::move(raw.gt)};
    const double norm = std::max(raw.pred.maxCoeff(), raw.gt.maxCoeff()) + kPreprocessEps;
    return {kind, raw.pred / norm, raw.gt / norm};
}

Image preprocess(const Image& image, Aspect kind) { return preprocess_pair(image, image, kind).pred; }

Image preprocess_pair_backward(const Image& pred, const Image& gt, Aspect kind, const Image& dL_dpre) {
    require_same_shape(pred, dL_dpre, "preprocess_pair_backward");
    if (kind == Aspect::App) return dL_dpre;

    std::optional<SobelResult> sob;
    std::optional<Dft2> dft;
    ComplexImage spectrum;
    Image raw_pred, raw_gt;
    if (kind == Aspect::Edg) {
        sob = sobel(pred);
        raw_pred = sob->magnitude;
        raw_gt = sobel(gt).magnitude;
    } else {
        dft.emplace(pred.rows(), pred.cols());
        raw_pred = log_spectrum(*dft, pred, &spectrum);
        raw_gt = log_spectrum(*dft, gt, nullptr);
    }

    Eigen::Index my = 0, mx = 0;
    const double pred_max = raw_pred.maxCoeff(&my, &mx);
    const double gt_max = raw_gt.maxCoeff();
    const double norm = std::max(pred_max, gt_max) + kPreprocessEps;
    Image d_raw = dL_dpre / norm;
    if (pred_max >= gt_max) {
        d_raw(my, mx) -= (dL_dpre * raw_pred).sum() / (norm * norm);
    }

    if (kind == Aspect::Edg) return sobel_magnitude_backward(*sob, d_raw);

    const Image d_log = ifft_shift(d_raw);
    const Eigen::ArrayXXd mag = spectrum.abs();
    ComplexImage g(spectrum.rows(), spectrum.cols());
    for (Eigen::Index y = 0; y < g.rows(); ++y) {
        for (Eigen::Index x = 0; x < g.cols(); ++x) {
            const double m = mag(y, x);
            g(y, x) = m > 0.0 ? spectrum(y, x) * (d_log(y, x) / ((1.0 + m) * m)) : std::complex<double>(0.0);
        }
    }
    return dft->adjoint_real(g);
}

TfeBranch TfeBranch::make(Aspect kind, std::uint64_t seed) {
    TfeBranch b;
    b.kind = kind;
    b.seed = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d1(0.0, std::sqrt(1.0 / 9.0));
    std::normal_distribution<double> d2(0.0, std::sqrt(2.0 / (9.0 * kChannels1)));
    b.w1.resize(static_cast<std::size_t>(kChannels1) * 9);
    b.b1.assign(kChannels1, 0.0);
    b.w2.resize(static_cast<std::size_t>(kChannels2) * kChannels1 * 9);
    b.b2.assign(kChannels2, 0.0);
    for (auto& w : b.w1) w = d1(rng);
    for (auto& w : b.w2) w = d2(rng);
    return b;
}

namespace {

struct Tensor3 {
    int channels = 0, rows = 0, cols = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int c, int r, int w)
        : channels(c), rows(r), cols(w), data(static_cast<std::size_t>(c) * r * w, 0.0) {}
    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * rows + y) * cols + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * rows + y) * cols + x]; }
};

int conv_out(int n) { return (n - 1) / 2 + 1; }

Tensor3 conv_s2(const Tensor3& in, const std::vector<double>& w, const std::vector<double>& b, int out_c) {
    Tensor3 out(out_c, conv_out(in.rows), conv_out(in.cols));
    for (int oc = 0; oc < out_c; ++oc) {
        for (int oy = 0; oy < out.rows; ++oy) {
            for (int ox = 0; ox < out.cols; ++ox) {
                double acc = b[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < in.channels; ++ic) {
                    const double* k = &w[(static_cast<std::size_t>(oc) * in.channels + ic) * 9];
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in.rows) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= in.cols) continue;
                            acc += k[ky * 3 + kx] * in.at(ic, iy, ix);
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

// Accumulates input and (optionally) weight gradients of conv_s2.
void conv_s2_backward(const Tensor3& in, const std::vector<double>& w, const Tensor3& d_out, Tensor3& d_in,
                      std::vector<double>* d_w, std::vector<double>* d_b) {
    for (int oc = 0; oc < d_out.channels; ++oc) {
        for (int oy = 0; oy < d_out.rows; ++oy) {
            for (int ox = 0; ox < d_out.cols; ++ox) {
                const double g = d_out.at(oc, oy, ox);
                if (g == 0.0) continue;
                if (d_b) (*d_b)[static_cast<std::size_t>(oc)] += g;
                for (int ic = 0; ic < in.channels; ++ic) {
                    const std::size_t base = (static_cast<std::size_t>(oc) * in.channels + ic) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = 2 * oy + ky - 1;
                        if (iy < 0 || iy >= in.rows) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = 2 * ox + kx - 1;
                            if (ix < 0 || ix >= in.cols) continue;
                            d_in.at(ic, iy, ix) += w[base + static_cast<std::size_t>(ky * 3 + kx)] * g;
                            if (d_w) (*d_w)[base + static_cast<std::size_t>(ky * 3 + kx)] += in.at(ic, iy, ix) * g;
                        }
                    }
                }
            }
        }
    }
}

Tensor3 as_tensor(const Image& img) {
    if (img.rows() < 4 || img.cols() < 4) throw ShapeMismatch("tfe_features: image smaller than 4x4");
    Tensor3 t(1, static_cast<int>(img.rows()), static_cast<int>(img.cols()));
    for (int y = 0; y < t.rows; ++y) {
        for (int x = 0; x < t.cols; ++x) t.at(0, y, x) = img(y, x);
    }
    return t;
}

}  // namespace

Eigen::VectorXd tfe_features(const TfeBranch& branch, const Image& image) {
    Tensor3 h = conv_s2(as_tensor(image), branch.w1, branch.b1, TfeBranch::kChannels1);
    for (auto& v : h.data) v = std::max(v, 0.0);
    const Tensor3 out = conv_s2(h, branch.w2, branch.b2, TfeBranch::kChannels2);
    return Eigen::Map<const Eigen::VectorXd>(out.data.data(), static_cast<Eigen::Index>(out.data.size()));
}

TfeBackward tfe_features_backward(const TfeBranch& branch, const Image& image, const Eigen::VectorXd& dL_df) {
    const Tensor3 in = as_tensor(image);
    Tensor3 pre = conv_s2(in, branch.w1, branch.b1, TfeBranch::kChannels1);
    Tensor3 h = pre;
    for (auto& v : h.data) v = std::max(v, 0.0);

    Tensor3 d_out(TfeBranch::kChannels2, conv_out(h.rows), conv_out(h.cols));
    if (static_cast<std::size_t>(dL_df.size()) != d_out.data.size()) {
        throw ShapeMismatch("tfe_features_backward: feature gradient has the wrong length");
    }
    std::copy(dL_df.data(), dL_df.data() + dL_df.size(), d_out.data.begin());

    std::vector<double> dw1, db1, dw2, db2;
    const bool want_w = !branch.frozen;
    if (want_w) {
        dw1.assign(branch.w1.size(), 0.0);
        db1.assign(branch.b1.size(), 0.0);
        dw2.assign(branch.w2.size(), 0.0);
        db2.assign(branch.b2.size(), 0.0);
    }

    Tensor3 d_h(h.channels, h.rows, h.cols);
    conv_s2_backward(h, branch.w2, d_out, d_h, want_w ? &dw2 : nullptr, want_w ? &db2 : nullptr);
    for (std::size_t k = 0; k < d_h.data.size(); ++k) {
        if (pre.data[k] <= 0.0) d_h.data[k] = 0.0;
    }
    Tensor3 d_in(1, in.rows, in.cols);
    conv_s2_backward(in, branch.w1, d_h, d_in, want_w ? &dw1 : nullptr, want_w ? &db1 : nullptr);

    TfeBackward out;
    out.d_image = Image(image.rows(), image.cols());
    for (int y = 0; y < in.rows; ++y) {
        for (int x = 0; x < in.cols; ++x) out.d_image(y, x) = d_in.at(0, y, x);
    }
    if (want_w) {
        Eigen::VectorXd all(static_cast<Eigen::Index>(branch.parameter_count()));
        Eigen::Index o = 0;
        for (const auto* v : {&dw1, &db1, &dw2, &db2}) {
            for (double x : *v) all[o++] = x;
        }
        out.d_weights = std::move(all);
    }
    return out;
}

ThermalFeatureExtractor ThermalFeatureExtractor::make(std::uint64_t seed) {
    ThermalFeatureExtractor t;
    for (std::size_t i = 0; i < 3; ++i) t.branches[i] = TfeBranch::make(kAspects[i], derive_seed(seed, i));
    return t;
}

}  // namespace veta
