#include "focusflow/masks.hpp"

#include <algorithm>
#include <cmath>

#include "focusflow/error.hpp"

namespace focusflow {

std::string to_string(MaskPattern pattern) {
    switch (pattern) {
        case MaskPattern::point: return "point";
        case MaskPattern::neighbor_e: return "neighbor-E";
        case MaskPattern::neighbor_g: return "neighbor-G";
        case MaskPattern::context: return "context";
        case MaskPattern::frame: return "frame";
        case MaskPattern::reference: return "reference";
    }
    return "unknown";
}

MaskPattern parse_mask_pattern(const std::string& text) {
    for (auto p : {MaskPattern::point, MaskPattern::neighbor_e, MaskPattern::neighbor_g, MaskPattern::context,
                   MaskPattern::frame, MaskPattern::reference}) {
        if (to_string(p) == text) return p;
    }
    if (text == "neighbor-e") return MaskPattern::neighbor_e;
    if (text == "neighbor-g") return MaskPattern::neighbor_g;
    throw ConfigError("unknown mask pattern '" + text + "'");
}

Tensor normalize_frame(const Tensor& frame) {
    const ImageSize size = image_size_of(frame);
    auto v = frame.values();
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    std::vector<double> out(v.size(), 0.0);
    if (range > 0.0) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *lo) / range;
    }
    return Tensor::from({1, size.height, size.width}, std::move(out));
}

ConditionMask make_mask(const KeyPointSet& keypoints, ImageSize size, MaskPattern pattern, int diameter, double sigma,
                        const std::optional<Tensor>& frame) {
    if (size.height < 1 || size.width < 1) throw ShapeError("make_mask: image size must be positive");
    if (diameter < 1 || diameter % 2 == 0) throw Error("make_mask: diameter must be a positive odd integer");
    if (pattern == MaskPattern::reference) return reference_mask(size);
    if (pattern == MaskPattern::neighbor_g && !(sigma > 0.0)) throw Error("make_mask: sigma must be positive");

    const int h = size.height, w = size.width;
    const bool needs_frame = pattern == MaskPattern::context || pattern == MaskPattern::frame;
    Tensor normalized;
    if (needs_frame) {
        if (!frame) throw Error("make_mask: pattern '" + to_string(pattern) + "' needs the frame");
        if (image_size_of(*frame) != size) throw ShapeError("make_mask: frame size does not match mask size");
        normalized = normalize_frame(*frame);
    }
    if (pattern == MaskPattern::frame) return {normalized, pattern};

    KeyPointSet pts = keypoints;
    pts.size = size;
    const auto pixels = unique_pixels(pts);
    std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
    if (pattern == MaskPattern::point) {
        for (const auto& p : pixels) out[static_cast<std::size_t>(p.row) * w + p.col] = 1.0;
        return {Tensor::from({1, h, w}, std::move(out)), pattern};
    }

    const int radius = (diameter - 1) / 2;
    const int r2 = radius * radius;
    const double inv_two_sigma2 = pattern == MaskPattern::neighbor_g ? 1.0 / (2.0 * sigma * sigma) : 0.0;
    for (const auto& p : pixels) {
        for (int y = std::max(0, p.row - radius); y <= std::min(h - 1, p.row + radius); ++y) {
            for (int x = std::max(0, p.col - radius); x <= std::min(w - 1, p.col + radius); ++x) {
                const int d2 = (y - p.row) * (y - p.row) + (x - p.col) * (x - p.col);
                if (d2 > r2) continue;
                double& dst = out[static_cast<std::size_t>(y) * w + x];
                switch (pattern) {
                    case MaskPattern::neighbor_e:
                        dst = 1.0;
                        break;
                    case MaskPattern::neighbor_g:
                        dst = std::max(dst, std::exp(-d2 * inv_two_sigma2));
                        break;
                    case MaskPattern::context:
                        dst = normalized[static_cast<std::size_t>(y) * w + x];
                        break;
                    default:
                        break;
                }
            }
        }
    }
    return {Tensor::from({1, h, w}, std::move(out)), pattern};
}

ConditionMask reference_mask(ImageSize size) {
    if (size.height < 1 || size.width < 1) throw ShapeError("reference_mask: image size must be positive");
    return {Tensor::ones({1, size.height, size.width}), MaskPattern::reference};
}

}  // namespace focusflow
