#include <cmath>
#include <map>

#include "doctest.h"
#include "focusflow/error.hpp"
#include "focusflow/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace focusflow;

TEST_CASE("static scene") {
    SceneConfig cfg;
    cfg.max_displacement = 0;
    cfg.background_shift = 0;
    for (int seed = 0; seed < 5; ++seed) {
        const Sample s = gen_sample(cfg, seed);
        CHECK(testing::bitwise_equal(s.i1.values(), s.i2.values()));
        for (double v : s.flow.tensor().values()) CHECK(v == 0.0);
    }
}

TEST_CASE("flow inside the front sprite is its displacement") {
    SceneConfig cfg;
    cfg.min_sprites = cfg.max_sprites = 1;
    for (int seed = 0; seed < 20; ++seed) {
        const Sample s = gen_sample(cfg, seed);
        REQUIRE(s.sprites.size() == 1);
        const SpriteInfo& r = s.sprites[0];
        for (int y = r.y; y < r.y + r.height; ++y)
            for (int x = r.x; x < r.x + r.width; ++x) {
                CHECK(s.flow.u(y, x) == r.dx);
                CHECK(s.flow.v(y, x) == r.dy);
            }
        // Background elsewhere moves by the global shift.
        for (int y = 0; y < s.flow.height(); ++y)
            for (int x = 0; x < s.flow.width(); ++x) {
                if (x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height) continue;
                CHECK(s.flow.u(y, x) == s.background_dx);
                CHECK(s.flow.v(y, x) == s.background_dy);
            }
    }
}

TEST_CASE("inverse warp reproduces the reference frame and defines validity") {
    SceneConfig cfg;
    for (int seed = 0; seed < 30; ++seed) {
        const Sample s = gen_sample(cfg, 1000 + seed);
        const oracles::WarpCheck c = oracles::inverse_warp(s);
        CHECK(c.max_error <= 1e-6);
        CHECK(c.mask_mismatches == 0);
        CHECK(c.valid_pixels > 0);
    }
}

TEST_CASE("datasets are reproducible and distinct across seeds") {
    SceneConfig cfg;
    const Dataset a = gen_dataset(cfg, 4, 7);
    const Dataset b = gen_dataset(cfg, 4, 7);
    const Dataset c = gen_dataset(cfg, 4, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(testing::bitwise_equal(a[i].i1.values(), b[i].i1.values()));
        CHECK(testing::bitwise_equal(a[i].flow.tensor().values(), b[i].flow.tensor().values()));
        CHECK(!testing::bitwise_equal(a[i].i1.values(), c[i].i1.values()));
    }
    CHECK(!testing::bitwise_equal(a[0].i1.values(), a[1].i1.values()));
    // Offsets index the same stream.
    const Dataset tail = gen_dataset(cfg, 2, 7, 2);
    CHECK(testing::bitwise_equal(tail[0].i2.values(), a[2].i2.values()));
}

TEST_CASE("displacement histogram is symmetric") {
    SceneConfig cfg;
    std::map<int, double> hist;
    double n = 0;
    for (const Sample& s : gen_dataset(cfg, 500, 11)) {
        for (const auto& r : s.sprites) {
            hist[r.dx] += 1;
            hist[r.dy] += 1;
            n += 2;
        }
    }
    for (int d = 1; d <= cfg.max_displacement; ++d) CHECK(std::abs(hist[d] / n - hist[-d] / n) <= 0.05);
    double mean = 0;
    for (const auto& [d, c] : hist) mean += d * c / n;
    CHECK(std::abs(mean) < 0.3);
}

TEST_CASE("sprites carry texture") {
    SceneConfig cfg;
    for (int seed = 0; seed < 20; ++seed) {
        const Sample s = gen_sample(cfg, 50 + seed);
        const SpriteInfo& r = s.sprites.back();  // frontmost, fully visible in i1
        double energy = 0;
        for (int y = r.y + 1; y < r.y + r.height - 1; ++y)
            for (int x = r.x + 1; x < r.x + r.width - 1; ++x) {
                const double gx = s.i1.at(0, y, x + 1) - s.i1.at(0, y, x - 1);
                const double gy = s.i1.at(0, y + 1, x) - s.i1.at(0, y - 1, x);
                energy += gx * gx + gy * gy;
            }
        CHECK(energy > 0.0);
    }
}

TEST_CASE("noise is added after the flow is fixed") {
    SceneConfig cfg;
    const Sample clean = gen_sample(cfg, 3);
    cfg.noise_std = 0.02;
    const Sample noisy = gen_sample(cfg, 3);
    CHECK(testing::bitwise_equal(clean.flow.tensor().values(), noisy.flow.tensor().values()));
    CHECK(testing::bitwise_equal(clean.valid.values(), noisy.valid.values()));
    CHECK(!testing::bitwise_equal(clean.i1.values(), noisy.i1.values()));
    for (double v : noisy.i1.values()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("scene validation") {
    SceneConfig cfg;
    cfg.max_displacement = 24;
    CHECK_THROWS_AS(gen_sample(cfg, 0), ConfigError);
    cfg = {};
    cfg.max_sprites = 5;
    CHECK_THROWS_AS(gen_sample(cfg, 0), ConfigError);
}
