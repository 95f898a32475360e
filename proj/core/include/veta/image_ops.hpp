#pragma once

#include <complex>
#include <vector>

#include <Eigen/Core>

#include "veta/types.hpp"

namespace veta {

/// Normalized 1D Gaussian window of odd length.
std::vector<double> gaussian_window(int size, double sigma);

/// Separable correlation keeping only fully covered positions:
/// output is (H − k + 1) × (W − k + 1).
Image filter_valid(const Image& img, const std::vector<double>& window);

/// Adjoint of filter_valid; scatters an output-sized gradient back to the
/// input grid of size rows × cols.
Image filter_valid_adjoint(const Image& grad, const std::vector<double>& window, Eigen::Index rows,
                           Eigen::Index cols);

struct SobelResult {
    Image gx;
    Image gy;
    Image magnitude;
};

/// 3×3 Sobel gradients with replicated borders and their magnitude.
SobelResult sobel(const Image& img);

/// Gradient of Σ dL/dmag · mag w.r.t. the input image. Where the magnitude is
/// zero the subgradient 0 is used.
Image sobel_magnitude_backward(const SobelResult& fwd, const Image& dL_dmag);

using ComplexImage = Eigen::Array<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense 2D DFT by separable matrix products; works for any image size.
class Dft2 {
public:
    Dft2(Eigen::Index rows, Eigen::Index cols);

    ComplexImage forward(const Image& img) const;
    /// Given G = dL/d(Re F) + i dL/d(Im F), returns dL/dimage.
    Image adjoint_real(const ComplexImage& grad) const;

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }

private:
    Eigen::Index rows_, cols_;
    Eigen::MatrixXcd row_basis_;  // rows × rows
    Eigen::MatrixXcd col_basis_;  // cols × cols
};

/// Moves the zero-frequency term to (rows/2, cols/2).
Image fft_shift(const Image& img);
/// Inverse of fft_shift.
Image ifft_shift(const Image& img);

}  // namespace veta
