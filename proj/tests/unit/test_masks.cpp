#include <cmath>
#include <vector>

#include "doctest.h"
#include "focusflow/error.hpp"
#include "focusflow/masks.hpp"
#include "focusflow/random.hpp"
#include "support.hpp"

using namespace focusflow;

namespace {

KeyPointSet points_at(std::vector<std::pair<double, double>> xy, ImageSize size) {
    KeyPointSet s;
    s.size = size;
    for (auto [x, y] : xy) s.points.push_back({x, y, 1.0});
    return s;
}

double total(const ConditionMask& m) {
    double s = 0;
    for (double v : m.values.values()) s += v;
    return s;
}

}  // namespace

TEST_CASE("point mask") {
    const ConditionMask m = make_mask(points_at({{2, 3}}, {8, 8}), {8, 8}, MaskPattern::point, 31, 5.0);
    CHECK(m.values.shape() == Shape{1, 8, 8});
    CHECK(total(m) == 1.0);
    CHECK(m.values.at(0, 3, 2) == 1.0);
    // Two key points rounding to one pixel set a single one.
    const ConditionMask d = make_mask(points_at({{2, 3}, {2.4, 2.6}, {5, 5}}, {8, 8}), {8, 8}, MaskPattern::point, 31, 5.0);
    CHECK(total(d) == 2.0);
}

TEST_CASE("neighbor-E with diameter 3 is a plus sign") {
    const ConditionMask m = make_mask(points_at({{3, 3}}, {7, 7}), {7, 7}, MaskPattern::neighbor_e, 3, 1.0);
    CHECK(total(m) == 5.0);
    for (auto [y, x] : std::vector<std::pair<int, int>>{{3, 3}, {2, 3}, {4, 3}, {3, 2}, {3, 4}}) CHECK(m.values.at(0, y, x) == 1.0);
    CHECK(m.values.at(0, 2, 2) == 0.0);
}

TEST_CASE("frame pattern passes the normalized frame through") {
    const Tensor frame = testing::random_tensor({1, 6, 9}, 4, 0.2, 0.7);
    const ConditionMask a = make_mask(points_at({{1, 1}}, {6, 9}), {6, 9}, MaskPattern::frame, 3, 1.0, frame);
    const ConditionMask b = make_mask(KeyPointSet{}, {6, 9}, MaskPattern::frame, 3, 1.0, frame);
    CHECK(testing::bitwise_equal(a.values.values(), b.values.values()));
    const double lo = *std::min_element(frame.values().begin(), frame.values().end());
    const double hi = *std::max_element(frame.values().begin(), frame.values().end());
    for (std::size_t i = 0; i < frame.numel(); ++i)
        CHECK(a.values[i] == doctest::Approx((frame[i] - lo) / (hi - lo)).epsilon(1e-14));
}

TEST_CASE("reference mask") {
    const ConditionMask m = reference_mask({4, 4});
    CHECK(total(m) == 16.0);
    CHECK(m.pattern == MaskPattern::reference);
    CHECK(testing::bitwise_equal(m.values.values(), reference_mask({4, 4}).values.values()));
    CHECK(total(reference_mask({3, 11})) == 33.0);
}

TEST_CASE("disc membership matches a per-pixel distance scan") {
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        const int h = rng.uniform_int(4, 20), w = rng.uniform_int(4, 20);
        const int diameter = 2 * rng.uniform_int(0, 4) + 1;
        const double sigma = rng.uniform(0.5, 3.0);
        const int n = rng.uniform_int(0, 5);
        KeyPointSet pts;
        pts.size = {h, w};
        for (int i = 0; i < n; ++i) pts.points.push_back({rng.uniform(0, w - 1), rng.uniform(0, h - 1), 1.0});
        const Tensor frame = testing::random_tensor({1, h, w}, 1000 + seed, 0.0, 1.0);
        const Tensor norm = normalize_frame(frame);
        const auto e = make_mask(pts, {h, w}, MaskPattern::neighbor_e, diameter, sigma, frame);
        const auto g = make_mask(pts, {h, w}, MaskPattern::neighbor_g, diameter, sigma, frame);
        const auto c = make_mask(pts, {h, w}, MaskPattern::context, diameter, sigma, frame);
        const double r = (diameter - 1) / 2.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                bool inside = false;
                double peak = 0.0;
                for (const auto& p : pts.points) {
                    const double px = std::floor(p.x + 0.5), py = std::floor(p.y + 0.5);
                    const double d = std::hypot(x - px, y - py);
                    if (d <= r) {
                        inside = true;
                        peak = std::max(peak, std::exp(-d * d / (2 * sigma * sigma)));
                    }
                }
                CHECK(e.values.at(0, y, x) == (inside ? 1.0 : 0.0));
                CHECK(g.values.at(0, y, x) == doctest::Approx(peak).epsilon(1e-14));
                if (inside) CHECK(g.values.at(0, y, x) > 0.0);
                CHECK(c.values.at(0, y, x) == (inside ? norm.at(0, y, x) : 0.0));
            }
    }
}

TEST_CASE("neighbor-G peaks at one on key points and duplicates change nothing") {
    const auto pts = points_at({{4, 4}, {9, 2}}, {12, 12});
    const auto g = make_mask(pts, {12, 12}, MaskPattern::neighbor_g, 7, 1.5);
    CHECK(g.values.at(0, 4, 4) == 1.0);
    CHECK(g.values.at(0, 2, 9) == 1.0);
    for (double v : g.values.values()) CHECK(v <= 1.0);
    const auto dup = make_mask(points_at({{4, 4}, {9, 2}, {4, 4}}, {12, 12}), {12, 12}, MaskPattern::neighbor_g, 7, 1.5);
    CHECK(testing::bitwise_equal(g.values.values(), dup.values.values()));
}

TEST_CASE("mask argument errors") {
    const auto pts = points_at({{1, 1}}, {5, 5});
    CHECK_THROWS_AS(make_mask(pts, {5, 5}, MaskPattern::neighbor_e, 4, 1.0), Error);
    CHECK_THROWS_AS(make_mask(pts, {5, 5}, MaskPattern::context, 3, 1.0), Error);
    CHECK_THROWS_AS(make_mask(pts, {5, 5}, MaskPattern::frame, 3, 1.0), Error);
    CHECK_THROWS_AS(parse_mask_pattern("blob"), ConfigError);
    for (auto p : {MaskPattern::point, MaskPattern::neighbor_e, MaskPattern::neighbor_g, MaskPattern::context,
                   MaskPattern::frame, MaskPattern::reference})
        CHECK(parse_mask_pattern(to_string(p)) == p);
}
