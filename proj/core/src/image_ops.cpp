#include "veta/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace veta {

std::vector<double> gaussian_window(int size, double sigma) {
    if (size <= 0 || size % 2 == 0) throw InvalidParameter("gaussian_window: size must be odd and positive");
    std::vector<double> w(static_cast<std::size_t>(size));
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double x = i - half;
        w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

Image filter_valid(const Image& img, const std::vector<double>& window) {
    const auto k = static_cast<Eigen::Index>(window.size());
    const Eigen::Index rows = img.rows() - k + 1;
    const Eigen::Index cols = img.cols() - k + 1;
    if (rows <= 0 || cols <= 0) throw ShapeMismatch("filter_valid: image smaller than the window");
    Image horiz = Image::Zero(img.rows(), cols);
    for (Eigen::Index y = 0; y < img.rows(); ++y) {
        for (Eigen::Index x = 0; x < cols; ++x) {
            double acc = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) acc += window[static_cast<std::size_t>(j)] * img(y, x + j);
            horiz(y, x) = acc;
        }
    }
    Image out = Image::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        for (Eigen::Index i = 0; i < k; ++i) out.row(y) += window[static_cast<std::size_t>(i)] * horiz.row(y + i);
    }
    return out;
}

Image filter_valid_adjoint(const Image& grad, const std::vector<double>& window, Eigen::Index rows,
                           Eigen::Index cols) {
    const auto k = static_cast<Eigen::Index>(window.size());
    if (grad.rows() != rows - k + 1 || grad.cols() != cols - k + 1) {
        throw ShapeMismatch("filter_valid_adjoint: gradient shape does not match the filtered output");
    }
    Image horiz = Image::Zero(rows, grad.cols());
    for (Eigen::Index y = 0; y < grad.rows(); ++y) {
        for (Eigen::Index i = 0; i < k; ++i) horiz.row(y + i) += window[static_cast<std::size_t>(i)] * grad.row(y);
    }
    Image out = Image::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        for (Eigen::Index x = 0; x < grad.cols(); ++x) {
            const double g = horiz(y, x);
            for (Eigen::Index j = 0; j < k; ++j) out(y, x + j) += window[static_cast<std::size_t>(j)] * g;
        }
    }
    return out;
}

namespace {

constexpr double kSobelX[3][3] = {{-1.0, 0.0, 1.0}, {-2.0, 0.0, 2.0}, {-1.0, 0.0, 1.0}};
constexpr double kSobelY[3][3] = {{-1.0, -2.0, -1.0}, {0.0, 0.0, 0.0}, {1.0, 2.0, 1.0}};

Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) { return std::clamp<Eigen::Index>(i, 0, n - 1); }

}  // namespace

SobelResult sobel(const Image& img) {
    const Eigen::Index rows = img.rows(), cols = img.cols();
    SobelResult r{Image::Zero(rows, cols), Image::Zero(rows, cols), Image::Zero(rows, cols)};
    for (Eigen::Index y = 0; y < rows; ++y) {
        for (Eigen::Index x = 0; x < cols; ++x) {
            // Sums of differences keep flat regions exactly zero.
            auto at = [&](int dy, int dx) { return img(clamp_index(y + dy, rows), clamp_index(x + dx, cols)); };
            const double gx = (at(-1, 1) - at(-1, -1)) + 2.0 * (at(0, 1) - at(0, -1)) + (at(1, 1) - at(1, -1));
            const double gy = (at(1, -1) - at(-1, -1)) + 2.0 * (at(1, 0) - at(-1, 0)) + (at(1, 1) - at(-1, 1));
            r.gx(y, x) = gx;
            r.gy(y, x) = gy;
            r.magnitude(y, x) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return r;
}

Image sobel_magnitude_backward(const SobelResult& fwd, const Image& dL_dmag) {
    const Eigen::Index rows = fwd.magnitude.rows(), cols = fwd.magnitude.cols();
    Image out = Image::Zero(rows, cols);
    for (Eigen::Index y = 0; y < rows; ++y) {
        for (Eigen::Index x = 0; x < cols; ++x) {
            const double mag = fwd.magnitude(y, x);
            if (mag <= 0.0 || dL_dmag(y, x) == 0.0) continue;
            const double dgx = dL_dmag(y, x) * fwd.gx(y, x) / mag;
            const double dgy = dL_dmag(y, x) * fwd.gy(y, x) / mag;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    out(clamp_index(y + dy, rows), clamp_index(x + dx, cols)) +=
                        kSobelX[dy + 1][dx + 1] * dgx + kSobelY[dy + 1][dx + 1] * dgy;
                }
            }
        }
    }
    return out;
}

namespace {

Eigen::MatrixXcd dft_matrix(Eigen::Index n) {
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
            // Reduce jk mod n first so large products keep full phase precision.
            const auto jk = static_cast<double>((j * k) % n);
            const double angle = -2.0 * std::numbers::pi * jk / static_cast<double>(n);
            m(j, k) = {std::cos(angle), std::sin(angle)};
        }
    }
    return m;
}

}  // namespace

Dft2::Dft2(Eigen::Index rows, Eigen::Index cols)
    : rows_(rows), cols_(cols), row_basis_(dft_matrix(rows)), col_basis_(dft_matrix(cols)) {}

ComplexImage Dft2::forward(const Image& img) const {
    if (img.rows() != rows_ || img.cols() != cols_) throw ShapeMismatch("Dft2::forward: image size mismatch");
    const Eigen::MatrixXcd x = img.matrix().cast<std::complex<double>>();
    const Eigen::MatrixXcd f = row_basis_ * x * col_basis_;
    return f.array();
}

Image Dft2::adjoint_real(const ComplexImage& grad) const {
    if (grad.rows() != rows_ || grad.cols() != cols_) throw ShapeMismatch("Dft2::adjoint_real: size mismatch");
    const Eigen::MatrixXcd g = grad.matrix();
    const Eigen::MatrixXcd back = row_basis_.conjugate() * g * col_basis_.conjugate();
    return back.real().array();
}

Image fft_shift(const Image& img) {
    const Eigen::Index r = img.rows(), c = img.cols();
    Image out(r, c);
    for (Eigen::Index y = 0; y < r; ++y) {
        for (Eigen::Index x = 0; x < c; ++x) out((y + r / 2) % r, (x + c / 2) % c) = img(y, x);
    }
    return out;
}

Image ifft_shift(const Image& img) {
    const Eigen::Index r = img.rows(), c = img.cols();
    Image out(r, c);
    for (Eigen::Index y = 0; y < r; ++y) {
        for (Eigen::Index x = 0; x < c; ++x) out(y, x) = img((y + r / 2) % r, (x + c / 2) % c);
    }
    return out;
}

}  // namespace veta
