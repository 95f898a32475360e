#pragma once

// Forward/backward harness for finite-difference checks of the full
// objective: mask → deform → render → total_loss.

#include "veta/deformation.hpp"
#include "veta/losses.hpp"
#include "veta/rasterizer.hpp"

namespace pipeline {

struct Setup {
    veta::GaussianCloud cloud;
    veta::DeformationNet net;
    veta::CameraView cam;
    veta::Image target;
    veta::LossConfig loss;
    veta::ThermalFeatureExtractor tfe;
    long iter = 0;
    veta::RenderOptions render;
    veta::Mask mask;  // empty: deform every Gaussian
};

double loss(const Setup& s, const veta::GaussianCloud& cloud, const veta::DeformationNet& net);

struct Gradients {
    double value = 0.0;
    veta::ParamGradients cloud;
    Eigen::VectorXd net;
};
Gradients gradients(const Setup& s);

/// Loss with the network evaluated at the unperturbed positions of `s.cloud`
/// and its offsets applied to `cloud`: the objective whose μ-derivative is
/// the stop-gradient one.
double loss_frozen_input(const Setup& s, const veta::GaussianCloud& cloud);

/// Loss with positions taken from `s.cloud` and only the network input moved
/// to `cloud`'s positions: isolates the encoding path.
double loss_encoding_only(const Setup& s, const veta::GaussianCloud& cloud);

}  // namespace pipeline
