#pragma once

#include <optional>
#include <string>

#include "focusflow/keypoints.hpp"
#include "focusflow/tensor.hpp"

namespace focusflow {

enum class MaskPattern { point, neighbor_e, neighbor_g, context, frame, reference };

std::string to_string(MaskPattern pattern);
MaskPattern parse_mask_pattern(const std::string& text);

// Single-channel condition input for the condition encoder, [1,H,W].
struct ConditionMask {
    Tensor values;
    MaskPattern pattern = MaskPattern::point;

    ImageSize size() const { return {values.dim(1), values.dim(2)}; }
};

struct MaskSettings {
    MaskPattern pattern = MaskPattern::point;
    int diameter = 31;   // neighborhood disc for neighbor-E/G and context
    double sigma = 5.0;  // neighbor-G Gaussian std
    bool operator==(const MaskSettings&) const = default;
};

/// Builds one of the condition patterns from key points. `frame` ([H,W] or
/// [1,H,W] grayscale) is required for context and frame patterns and is
/// min-max normalized to [0,1].
ConditionMask make_mask(const KeyPointSet& keypoints, ImageSize size, MaskPattern pattern, int diameter, double sigma,
                        const std::optional<Tensor>& frame = std::nullopt);

inline ConditionMask make_mask(const KeyPointSet& keypoints, ImageSize size, const MaskSettings& settings,
                               const std::optional<Tensor>& frame = std::nullopt) {
    return make_mask(keypoints, size, settings.pattern, settings.diameter, settings.sigma, frame);
}

/// All-ones mask used for the reference frame.
ConditionMask reference_mask(ImageSize size);

// Frame rescaled to [0,1] by its min/max (constant frames map to 0), [1,H,W].
Tensor normalize_frame(const Tensor& frame);

}  // namespace focusflow
