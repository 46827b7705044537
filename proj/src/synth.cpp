#include "focusflow/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "focusflow/error.hpp"
#include "focusflow/random.hpp"

namespace focusflow {

namespace {

constexpr int kMaxLayers = 5;
constexpr double kBandLow = 0.04;
constexpr double kBandStep = 0.19;
constexpr double kBandWidth = 0.15;

// Two-octave value noise in [0,1] on an h x w grid.
std::vector<double> value_noise(int h, int w, int cell, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
    const std::array<std::pair<int, double>, 2> octaves{{{std::max(1, cell), 0.65}, {std::max(1, cell / 2), 0.35}}};
    for (const auto& [spacing, amplitude] : octaves) {
        const int gh = h / spacing + 2, gw = w / spacing + 2;
        std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
        for (auto& v : lattice) v = rng.uniform();
        for (int y = 0; y < h; ++y) {
            const int y0 = y / spacing;
            const double fy = static_cast<double>(y % spacing) / spacing;
            for (int x = 0; x < w; ++x) {
                const int x0 = x / spacing;
                const double fx = static_cast<double>(x % spacing) / spacing;
                auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
                const double top = at(y0, x0) + fx * (at(y0, x0 + 1) - at(y0, x0));
                const double bot = at(y0 + 1, x0) + fx * (at(y0 + 1, x0 + 1) - at(y0 + 1, x0));
                out[static_cast<std::size_t>(y) * w + x] += amplitude * (top + fy * (bot - top));
            }
        }
    }
    return out;
}

struct Layer {
    std::vector<double> texture;  // already mapped into the layer's band
    int tex_w = 0;
    SpriteInfo rect;  // unused for the background
};

}  // namespace

void SceneConfig::validate() const {
    if (height < 4 || width < 4) throw ConfigError("scene size must be at least 4x4");
    if (min_sprites < 1 || max_sprites > kMaxLayers - 1 || min_sprites > max_sprites) {
        throw ConfigError("sprite count range must lie within [1,4]");
    }
    if (min_sprite_size < 2 || min_sprite_size > max_sprite_size || max_sprite_size > std::min(height, width)) {
        throw ConfigError("invalid sprite size range");
    }
    if (max_displacement < 0 || 2 * max_displacement >= std::min(height, width)) {
        throw ConfigError("max displacement must be below half the image size");
    }
    if (background_shift < 0 || 2 * background_shift >= std::min(height, width)) {
        throw ConfigError("background shift must be below half the image size");
    }
    if (texture_cell < 1) throw ConfigError("texture cell must be positive");
    if (!(noise_std >= 0.0)) throw ConfigError("noise std must be nonnegative");
}

Sample gen_sample(const SceneConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int h = cfg.height, w = cfg.width;
    const int b = cfg.background_shift;
    Rng rng(seed);
    const std::uint64_t texture_root = cfg.texture_policy == TexturePolicy::shared ? cfg.texture_seed : seed;

    std::array<int, kMaxLayers> bands{0, 1, 2, 3, 4};
    for (int i = kMaxLayers - 1; i > 0; --i) std::swap(bands[static_cast<std::size_t>(i)], bands[static_cast<std::size_t>(rng.uniform_int(0, i))]);

    const int sprite_count = rng.uniform_int(cfg.min_sprites, cfg.max_sprites);
    std::vector<Layer> layers(static_cast<std::size_t>(sprite_count + 1));

    auto banded = [&](std::vector<double> tex, int layer) {
        const double lo = kBandLow + kBandStep * bands[static_cast<std::size_t>(layer)];
        for (auto& v : tex) v = lo + kBandWidth * v;
        return tex;
    };

    Sample sample;
    sample.background_dx = rng.uniform_int(-b, b);
    sample.background_dy = rng.uniform_int(-b, b);
    const int cw = w + 2 * b;
    layers[0].texture = banded(value_noise(h + 2 * b, cw, cfg.texture_cell, derive_seed(texture_root, 0)), 0);
    layers[0].tex_w = cw;
    layers[0].rect = {0, 0, w, h, sample.background_dx, sample.background_dy};

    for (int k = 1; k <= sprite_count; ++k) {
        SpriteInfo r;
        r.width = rng.uniform_int(cfg.min_sprite_size, cfg.max_sprite_size);
        r.height = rng.uniform_int(cfg.min_sprite_size, cfg.max_sprite_size);
        r.x = rng.uniform_int(0, w - r.width);
        r.y = rng.uniform_int(0, h - r.height);
        r.dx = rng.uniform_int(-cfg.max_displacement, cfg.max_displacement);
        r.dy = rng.uniform_int(-cfg.max_displacement, cfg.max_displacement);
        auto& layer = layers[static_cast<std::size_t>(k)];
        layer.texture = banded(value_noise(r.height, r.width, cfg.texture_cell,
                                           derive_seed(texture_root, static_cast<std::uint64_t>(k))),
                               k);
        layer.tex_w = r.width;
        layer.rect = r;
        sample.sprites.push_back(r);
    }

    // Topmost layer covering (y,x) in the query (second == false) or
    // reference frame.
    auto top_layer = [&](int y, int x, bool second) {
        for (int k = sprite_count; k >= 1; --k) {
            const SpriteInfo& r = layers[static_cast<std::size_t>(k)].rect;
            const int ox = second ? r.x + r.dx : r.x;
            const int oy = second ? r.y + r.dy : r.y;
            if (x >= ox && x < ox + r.width && y >= oy && y < oy + r.height) return k;
        }
        return 0;
    };
    auto intensity = [&](int k, int y, int x, bool second) {
        const Layer& layer = layers[static_cast<std::size_t>(k)];
        const SpriteInfo& r = layer.rect;
        if (k == 0) {
            const int ty = second ? y + b - r.dy : y + b;
            const int tx = second ? x + b - r.dx : x + b;
            return layer.texture[static_cast<std::size_t>(ty) * layer.tex_w + tx];
        }
        const int ty = y - r.y - (second ? r.dy : 0);
        const int tx = x - r.x - (second ? r.dx : 0);
        return layer.texture[static_cast<std::size_t>(ty) * layer.tex_w + tx];
    };

    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> i1(plane), i2(plane), flow(2 * plane), valid(plane, 0.0);
    std::vector<int> layer2(plane);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const int k1 = top_layer(y, x, false);
            const int k2 = top_layer(y, x, true);
            layer2[i] = k2;
            i1[i] = intensity(k1, y, x, false);
            i2[i] = intensity(k2, y, x, true);
            const SpriteInfo& r = layers[static_cast<std::size_t>(k1)].rect;
            flow[i] = r.dx;
            flow[plane + i] = r.dy;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const int tx = x + static_cast<int>(flow[i]);
            const int ty = y + static_cast<int>(flow[plane + i]);
            if (tx < 0 || tx >= w || ty < 0 || ty >= h) continue;
            if (layer2[static_cast<std::size_t>(ty) * w + tx] == top_layer(y, x, false)) valid[i] = 1.0;
        }
    }
    if (cfg.noise_std > 0.0) {
        for (auto* frame : {&i1, &i2}) {
            for (auto& v : *frame) v = std::clamp(v + rng.normal(0.0, cfg.noise_std), 0.0, 1.0);
        }
    }
    sample.i1 = Tensor::from({1, h, w}, std::move(i1));
    sample.i2 = Tensor::from({1, h, w}, std::move(i2));
    sample.flow = FlowField(Tensor::from({2, h, w}, std::move(flow)));
    sample.valid = Tensor::from({1, h, w}, std::move(valid));
    return sample;
}

Dataset gen_dataset(const SceneConfig& cfg, int n, std::uint64_t seed, int first_index) {
    if (n < 1) throw ConfigError("dataset size must be at least 1");
    if (first_index < 0) throw ConfigError("first sample index must be nonnegative");
    Dataset out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) out.push_back(gen_sample(cfg, derive_seed(seed, static_cast<std::uint64_t>(first_index + k))));
    return out;
}

}  // namespace focusflow
