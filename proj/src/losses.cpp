#include "focusflow/losses.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace focusflow {

double WeightMap::total() const {
    auto v = values.values();
    return std::accumulate(v.begin(), v.end(), 0.0);
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::photometric: return "lp";
        case LossKind::cpcl: return "cpcl";
        case LossKind::mix: return "mix";
    }
    return "unknown";
}

LossKind parse_loss_kind(const std::string& text) {
    if (text == "lp" || text == "photometric") return LossKind::photometric;
    if (text == "cpcl") return LossKind::cpcl;
    if (text == "mix") return LossKind::mix;
    throw ConfigError("unknown loss kind '" + text + "'");
}

void LossConfig::validate() const {
    if (p != Norm::l1 && p != Norm::l2) throw ConfigError("loss.p must be 1 or 2");
    if (!(lambda >= 0.0)) throw ConfigError("loss.lambda must be nonnegative");
    if (mu < 1 || mu % 2 == 0) throw ConfigError("loss.mu must be a positive odd integer");
    if (!(sigma > 0.0)) throw ConfigError("loss.sigma must be positive");
}

double sigma_for_mu(int mu) { return mu <= 1 ? 0.01 : (mu - 1) / 6.0; }

namespace {

void require_same_size(const FlowField& f, const FlowField& f_hat) {
    if (f.size() != f_hat.size()) throw ShapeError("flow fields differ in size");
}

}  // namespace

Tensor epe_map(const FlowField& f, const FlowField& f_hat, Norm p) {
    require_same_size(f, f_hat);
    return endpoint_error(f.tensor(), f_hat.tensor(), p);
}

Tensor photometric_loss(const FlowField& f, const FlowField& f_hat, Norm p) { return mean(epe_map(f, f_hat, p)); }

WeightMap alpha_weights(const KeyPointSet& keypoints, ImageSize size, int mu, double sigma) {
    if (mu < 1 || mu % 2 == 0) throw Error("alpha_weights: mu must be a positive odd integer");
    if (!(sigma > 0.0)) throw Error("alpha_weights: sigma must be positive");
    const int h = size.height, w = size.width;
    KeyPointSet pts = keypoints;
    pts.size = size;
    const int radius = (mu - 1) / 2;
    const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    std::vector<double> alpha(static_cast<std::size_t>(h) * w, 0.0);
    for (const auto& p : unique_pixels(pts)) {
        for (int y = std::max(0, p.row - radius); y <= std::min(h - 1, p.row + radius); ++y) {
            for (int x = std::max(0, p.col - radius); x <= std::min(w - 1, p.col + radius); ++x) {
                const int d2 = (y - p.row) * (y - p.row) + (x - p.col) * (x - p.col);
                if (d2 > radius * radius) continue;
                alpha[static_cast<std::size_t>(y) * w + x] += norm * std::exp(-d2 * inv_two_sigma2);
            }
        }
    }
    return {Tensor::from({h, w}, std::move(alpha)), mu, sigma};
}

Tensor cpcl(const FlowField& f, const FlowField& f_hat, const WeightMap& alpha, Norm p) {
    require_same_size(f, f_hat);
    if (alpha.values.shape() != Shape{f.height(), f.width()}) throw ShapeError("cpcl: weight map size mismatch");
    const double total = alpha.total();
    if (!(total > 0.0)) throw Error("cpcl: weight map is all zero (no supervised pixels)");
    return scale(weighted_sum(epe_map(f, f_hat, p), alpha.values.values()), 1.0 / total);
}

Tensor mix_loss(const FlowField& f, const FlowField& f_hat, const WeightMap& alpha, const LossConfig& cfg) {
    switch (cfg.kind) {
        case LossKind::photometric:
            return photometric_loss(f, f_hat, cfg.p);
        case LossKind::cpcl:
            return cpcl(f, f_hat, alpha, cfg.p);
        case LossKind::mix:
            break;
    }
    Tensor lp = photometric_loss(f, f_hat, cfg.p);
    if (cfg.lambda == 0.0) return lp;
    return add(lp, scale(cpcl(f, f_hat, alpha, cfg.p), cfg.lambda));
}

}  // namespace focusflow
