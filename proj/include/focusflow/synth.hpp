#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "focusflow/flow.hpp"
#include "focusflow/keypoints.hpp"
#include "focusflow/tensor.hpp"

namespace focusflow {

enum class TexturePolicy { per_sample, shared };

struct SceneConfig {
    int height = 48;
    int width = 48;
    int min_sprites = 1;
    int max_sprites = 4;
    int min_sprite_size = 8;
    int max_sprite_size = 20;
    int max_displacement = 6;     // sprite displacement components in [-max, max]
    int background_shift = 3;     // background translation components in [-b, b]
    int texture_cell = 4;         // value-noise lattice spacing in pixels
    TexturePolicy texture_policy = TexturePolicy::per_sample;
    std::uint64_t texture_seed = 0;  // used by the shared policy
    double noise_std = 0.0;

    void validate() const;
    ImageSize size() const { return {height, width}; }
};

struct SpriteInfo {
    int x = 0, y = 0;  // top-left in the query frame
    int width = 0, height = 0;
    int dx = 0, dy = 0;
};

/// Frame pair with exact ground truth. Frames are [1,H,W] in [0,1];
/// valid is [1,H,W] with 1 where the ground truth can be verified in the
/// reference frame (the target stays inside the frame and is not covered).
struct Sample {
    Tensor i1;
    Tensor i2;
    FlowField flow;
    Tensor valid;
    int background_dx = 0, background_dy = 0;
    std::vector<SpriteInfo> sprites;

    ImageSize size() const { return flow.size(); }
};

using Dataset = std::vector<Sample>;

/// Textured background translated by an integer offset plus 1-4 textured
/// rectangular sprites with their own integer displacements, composited with
/// later sprites in front. Every layer's intensities live in a distinct band
/// so that layers never coincide.
Sample gen_sample(const SceneConfig& cfg, std::uint64_t seed);

/// Samples first_index .. first_index+n-1 of the stream for `seed`; sample
/// k uses derive_seed(seed, k). Disjoint index ranges give train/val splits.
Dataset gen_dataset(const SceneConfig& cfg, int n, std::uint64_t seed, int first_index = 0);

}  // namespace focusflow
