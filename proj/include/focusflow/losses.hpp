#pragma once

#include <string>

#include "focusflow/flow.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/ops.hpp"

namespace focusflow {

/// Per-pixel supervision weights alpha_i over an [H,W] grid.
struct WeightMap {
    Tensor values;  // [H,W], constant
    int mu = 1;
    double sigma = 0.01;

    double total() const;
};

enum class LossKind { photometric, cpcl, mix };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct LossConfig {
    LossKind kind = LossKind::mix;
    Norm p = Norm::l1;
    double lambda = 1.0;
    int mu = 1;
    double sigma = 0.01;

    void validate() const;
};

// sigma paired with mu for sweeps: (mu-1)/6, and 0.01 at mu = 1.
double sigma_for_mu(int mu);

/// ||f_i - f_hat_i||_p per pixel, [H,W].
Tensor epe_map(const FlowField& f, const FlowField& f_hat, Norm p);

/// Mean endpoint error over all pixels.
Tensor photometric_loss(const FlowField& f, const FlowField& f_hat, Norm p);

/// Gaussian neighborhood weights: for every pixel i, the sum over distinct
/// key-point pixels j with ||i-j||_2 <= (mu-1)/2 of
/// exp(-||i-j||^2 / (2 sigma^2)) / (sigma sqrt(2 pi)); zero elsewhere.
WeightMap alpha_weights(const KeyPointSet& keypoints, ImageSize size, int mu, double sigma);

/// Weighted endpoint error normalized by the total weight. Throws when the
/// weight map is all zero.
Tensor cpcl(const FlowField& f, const FlowField& f_hat, const WeightMap& alpha, Norm p);

/// photometric + lambda * cpcl for LossKind::mix; the single terms for the
/// other kinds. cpcl is not evaluated when lambda is 0.
Tensor mix_loss(const FlowField& f, const FlowField& f_hat, const WeightMap& alpha, const LossConfig& cfg);

}  // namespace focusflow
