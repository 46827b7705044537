#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "focusflow/error.hpp"
#include "focusflow/gradcheck.hpp"
#include "focusflow/losses.hpp"
#include "support.hpp"

using namespace focusflow;
using testing::random_tensor;

namespace {

FlowField constant_flow(ImageSize s, double u, double v) {
    std::vector<double> vals(2 * static_cast<std::size_t>(s.height) * s.width);
    const std::size_t n = vals.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
        vals[i] = u;
        vals[n + i] = v;
    }
    return FlowField(Tensor::from({2, s.height, s.width}, vals));
}

FlowField random_flow(ImageSize s, std::uint64_t seed) { return FlowField(random_tensor({2, s.height, s.width}, seed, -3, 3)); }

KeyPointSet one_point(double x, double y, ImageSize s) {
    KeyPointSet k;
    k.size = s;
    k.points.push_back({x, y, 1.0});
    return k;
}

WeightMap uniform_alpha(ImageSize s, double value) {
    WeightMap a;
    a.values = Tensor::full({s.height, s.width}, value);
    return a;
}

double norm_of(double du, double dv, Norm p) { return p == Norm::l1 ? std::abs(du) + std::abs(dv) : std::hypot(du, dv); }

}  // namespace

TEST_CASE("endpoint error by hand") {
    const ImageSize s{1, 1};
    const FlowField f = constant_flow(s, 3, 4), z = constant_flow(s, 0, 0);
    CHECK(epe_map(f, z, Norm::l2).item() == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(epe_map(f, z, Norm::l1).item() == doctest::Approx(7.0).epsilon(1e-15));
    const FlowField r = random_flow({4, 5}, 1);
    const Tensor zero = epe_map(r, r, Norm::l2);
    for (double v : zero.values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(epe_map(r, random_flow({5, 4}, 1), Norm::l1), ShapeError);
}

TEST_CASE("photometric loss") {
    const ImageSize s{6, 7};
    CHECK(photometric_loss(constant_flow(s, 3, 4), constant_flow(s, 0, 0), Norm::l2).item() == doctest::Approx(5.0).epsilon(1e-15));
    const FlowField a = random_flow(s, 4);
    CHECK(photometric_loss(a, a, Norm::l1).item() == 0.0);
    for (int seed = 0; seed < 20; ++seed) {
        const FlowField f = random_flow({5, 5}, 10 + seed), g = random_flow({5, 5}, 50 + seed);
        for (Norm p : {Norm::l1, Norm::l2}) {
            double acc = 0;
            for (int y = 0; y < 5; ++y)
                for (int x = 0; x < 5; ++x) acc += norm_of(f.u(y, x) - g.u(y, x), f.v(y, x) - g.v(y, x), p);
            CHECK(std::abs(photometric_loss(f, g, p).item() - acc / 25) < 1e-12);
        }
    }
}

TEST_CASE("alpha weights") {
    const ImageSize s{16, 16};
    SUBCASE("point supervision") {
        const WeightMap a = alpha_weights(one_point(5, 5, s), s, 1, 0.01);
        const double peak = 1.0 / (0.01 * std::sqrt(2 * std::numbers::pi));
        CHECK(peak == doctest::Approx(39.894).epsilon(1e-4));
        CHECK(a.values.values()[5 * 16 + 5] == doctest::Approx(peak).epsilon(1e-14));
        CHECK(a.total() == doctest::Approx(peak).epsilon(1e-14));
    }
    SUBCASE("mu 3 sigma 1") {
        const WeightMap a = alpha_weights(one_point(5, 5, s), s, 3, 1.0);
        auto at = [&](int y, int x) { return a.values.values()[static_cast<std::size_t>(y) * 16 + x]; };
        CHECK(at(5, 5) == doctest::Approx(0.39894).epsilon(1e-4));
        for (auto [y, x] : std::vector<std::pair<int, int>>{{4, 5}, {6, 5}, {5, 4}, {5, 6}})
            CHECK(at(y, x) == doctest::Approx(0.24197).epsilon(1e-4));
        CHECK(at(4, 4) == 0.0);
        CHECK(a.total() == doctest::Approx(0.39894228 + 4 * 0.24197072).epsilon(1e-7));
    }
    SUBCASE("empty set") {
        KeyPointSet none;
        none.size = s;
        CHECK(alpha_weights(none, s, 5, 1.0).total() == 0.0);
    }
    SUBCASE("overlapping key points add up") {
        KeyPointSet k = one_point(5, 5, s);
        k.points.push_back({6, 5, 1.0});
        const WeightMap a = alpha_weights(k, s, 3, 1.0);
        const double c = 1 / std::sqrt(2 * std::numbers::pi);
        CHECK(a.values.values()[5 * 16 + 5] == doctest::Approx(c + c * std::exp(-0.5)).epsilon(1e-14));
    }
}

TEST_CASE("cpcl") {
    const ImageSize s{5, 5};
    SUBCASE("uniform weights give the photometric loss") {
        for (int seed = 0; seed < 5; ++seed) {
            const FlowField f = random_flow(s, seed), g = random_flow(s, 100 + seed);
            for (Norm p : {Norm::l1, Norm::l2})
                CHECK(std::abs(cpcl(f, g, uniform_alpha(s, 0.3), p).item() - photometric_loss(f, g, p).item()) < 1e-14);
        }
    }
    SUBCASE("single supervised pixel") {
        WeightMap a;
        std::vector<double> w(25, 0.0);
        w[7] = 123.0;
        a.values = Tensor::from({5, 5}, w);
        const FlowField f = constant_flow(s, 1, 1), z = constant_flow(s, 0, 0);
        CHECK(cpcl(f, z, a, Norm::l1).item() == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("brute-force weighted sum and scale invariance") {
        for (int seed = 0; seed < 20; ++seed) {
            const ImageSize big{9, 9};
            KeyPointSet k = random_points(9, 9, 3, seed);
            const WeightMap a = alpha_weights(k, big, 5, 1.0);
            const FlowField f = random_flow(big, 200 + seed), g = random_flow(big, 300 + seed);
            for (Norm p : {Norm::l1, Norm::l2}) {
                double num = 0, den = 0;
                for (int y = 0; y < 9; ++y)
                    for (int x = 0; x < 9; ++x) {
                        double w = 0;
                        for (const auto& q : k.points) {
                            const double d2 = (x - q.x) * (x - q.x) + (y - q.y) * (y - q.y);
                            if (d2 <= 4.0) w += std::exp(-d2 / 2) / std::sqrt(2 * std::numbers::pi);
                        }
                        num += w * norm_of(f.u(y, x) - g.u(y, x), f.v(y, x) - g.v(y, x), p);
                        den += w;
                    }
                const double got = cpcl(f, g, a, p).item();
                CHECK(std::abs(got - num / den) < 1e-12);
                for (double c : {0.1, 7.0, 1000.0}) {
                    WeightMap scaled = a;
                    std::vector<double> v(a.values.values().begin(), a.values.values().end());
                    for (auto& x : v) x *= c;
                    scaled.values = Tensor::from({9, 9}, v);
                    CHECK(std::abs(cpcl(f, g, scaled, p).item() - got) < 1e-12);
                }
            }
        }
    }
    SUBCASE("all-zero weights are an error") {
        CHECK_THROWS_AS(cpcl(random_flow(s, 1), random_flow(s, 2), uniform_alpha(s, 0.0), Norm::l1), Error);
    }
}

TEST_CASE("mix loss") {
    const ImageSize s{6, 6};
    const FlowField f = random_flow(s, 7), g = random_flow(s, 8);
    LossConfig cfg;
    SUBCASE("lambda 0 is the photometric loss and skips cpcl") {
        cfg.lambda = 0.0;
        CHECK(mix_loss(f, g, uniform_alpha(s, 0.0), cfg).item() == photometric_loss(f, g, cfg.p).item());
    }
    SUBCASE("lambda 1 with uniform weights doubles it") {
        cfg.lambda = 1.0;
        CHECK(std::abs(mix_loss(f, g, uniform_alpha(s, 2.0), cfg).item() - 2 * photometric_loss(f, g, cfg.p).item()) < 1e-14);
    }
    SUBCASE("affine in lambda with slope cpcl") {
        const WeightMap a = alpha_weights(random_points(6, 6, 2, 3), s, 3, 1.0);
        const double lp = photometric_loss(f, g, cfg.p).item(), lc = cpcl(f, g, a, cfg.p).item();
        for (double lambda : {0.5, 2.0, 10.0}) {
            cfg.lambda = lambda;
            CHECK(std::abs(mix_loss(f, g, a, cfg).item() - (lp + lambda * lc)) < 1e-12);
        }
    }
    SUBCASE("single terms") {
        const WeightMap a = alpha_weights(random_points(6, 6, 2, 3), s, 3, 1.0);
        cfg.kind = LossKind::photometric;
        CHECK(mix_loss(f, g, a, cfg).item() == photometric_loss(f, g, cfg.p).item());
        cfg.kind = LossKind::cpcl;
        CHECK(mix_loss(f, g, a, cfg).item() == cpcl(f, g, a, cfg.p).item());
    }
    SUBCASE("defaults are point supervision with lambda 1") {
        const LossConfig d;
        CHECK(d.lambda == 1.0);
        CHECK(d.mu == 1);
        CHECK(d.sigma == 0.01);
        CHECK(d.p == Norm::l1);
    }
}

TEST_CASE("sigma paired with mu") {
    CHECK(sigma_for_mu(1) == 0.01);
    CHECK(sigma_for_mu(7) == doctest::Approx(1.0));
    CHECK(sigma_for_mu(31) == doctest::Approx(5.0));
}

TEST_CASE("loss gradients") {
    const ImageSize s{5, 6};
    for (int seed = 0; seed < 20; ++seed) {
        const FlowField f = random_flow(s, 400 + seed);
        const WeightMap a = alpha_weights(random_points(5, 6, 2, seed), s, 3, 1.0);
        LossConfig cfg;
        cfg.p = seed % 2 ? Norm::l2 : Norm::l1;
        cfg.lambda = 0.5 + seed;
        std::vector<Tensor> in{random_tensor({2, 5, 6}, 500 + seed, -3, 3)};
        const double err = grad_check(
            [&](std::span<const Tensor> x) { return mix_loss(f, FlowField(x[0]), a, cfg); }, in);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("cpcl gradient vanishes off the supervised support") {
    const ImageSize s{7, 7};
    const FlowField f = random_flow(s, 1);
    const WeightMap a = alpha_weights(random_points(7, 7, 2, 5), s, 3, 1.0);
    Tensor pred = random_tensor({2, 7, 7}, 2, -3, 3);
    pred.set_requires_grad();
    const Gradients g = backward(cpcl(f, FlowField(pred), a, Norm::l1));
    const Tensor d = g.get(pred);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 49; ++i) {
            if (a.values[static_cast<std::size_t>(i)] == 0.0) CHECK(d[static_cast<std::size_t>(c) * 49 + i] == 0.0);
        }
}
