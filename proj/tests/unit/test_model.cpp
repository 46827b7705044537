#include <cmath>
#include <vector>

#include "doctest.h"
#include "focusflow/error.hpp"
#include "focusflow/gradcheck.hpp"
#include "focusflow/model.hpp"
#include "focusflow/synth.hpp"
#include "focusflow/trainer.hpp"
#include "support.hpp"

using namespace focusflow;
using testing::random_tensor;

namespace {

std::vector<double> flat_parameters(const FlowNet& net) {
    std::vector<double> out;
    for (const auto& p : net.parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
    return out;
}

ConditionMask point_mask(int h, int w, std::vector<std::pair<int, int>> rows_cols) {
    std::vector<double> v(static_cast<std::size_t>(h) * w, 0.0);
    for (auto [r, c] : rows_cols) v[static_cast<std::size_t>(r) * w + c] = 1.0;
    return {Tensor::from({1, h, w}, v), MaskPattern::point};
}

ModelSpec small_spec() {
    ModelSpec s;
    s.widths = {4, 6};
    s.strides = {2, 2};
    s.corr_radius = 1;
    s.decoder_width = 4;
    return s;
}

}  // namespace

TEST_CASE("build_model is deterministic") {
    const ModelSpec spec;
    CHECK(testing::bitwise_equal(flat_parameters(build_model(spec, 5)), flat_parameters(build_model(spec, 5))));
    CHECK(!testing::bitwise_equal(flat_parameters(build_model(spec, 5)), flat_parameters(build_model(spec, 6))));
    for (double v : flat_parameters(build_model(spec, 5))) CHECK(static_cast<double>(static_cast<float>(v)) == v);
}

TEST_CASE("parameter count of the default spec") {
    // (cin*k*k + 1) * cout per conv, written out layer by layer.
    const std::size_t ffe = (1 * 9 + 1) * 16 + (16 * 9 + 1) * 32 + (32 * 9 + 1) * 64;  // 23296
    const std::size_t cfe = ffe;
    const std::size_t fusion = 2 * (16 * 16 + 16) + 2 * (32 * 32 + 32) + 2 * (64 * 64 + 64);
    const std::size_t head = (145 * 9 + 1) * 32 + (32 * 9 + 1) * 32 + (32 * 9 + 1) * 2;  // cost volume 81 + 64 features
    const std::size_t refine = (66 * 9 + 1) * 32 + (32 * 9 + 1) * 2 + (34 * 9 + 1) * 32 + (32 * 9 + 1) * 2;
    CHECK(ffe == 23296);
    CHECK(build_model(ModelSpec{}, 0).parameter_count() == ffe + cfe + fusion + head + refine);

    std::size_t summed = 0;
    for (const auto& p : build_model(ModelSpec{}, 0).parameters()) summed += p.tensor.numel();
    CHECK(summed == ffe + cfe + fusion + head + refine);
}

TEST_CASE("use_cfe=false has no condition or fusion parameters") {
    ModelSpec spec;
    spec.use_cfe = false;
    const FlowNet net = build_model(spec, 1);
    CHECK(net.cfe.empty());
    CHECK(net.fusion.empty());
    for (const auto& p : net.parameters()) {
        CHECK(p.group != ParamGroup::cfe);
        CHECK(p.group != ParamGroup::fusion);
    }
}

TEST_CASE("fusion kinds") {
    const Tensor f = random_tensor({3, 4, 5}, 1), c = random_tensor({3, 4, 5}, 2);
    SUBCASE("none passes through") {
        const auto [a, b] = fuse(f, c, nullptr, FusionKind::none);
        CHECK(testing::bitwise_equal(a.values(), f.values()));
        CHECK(testing::bitwise_equal(b.values(), c.values()));
    }
    SUBCASE("zero convs are the identity for residual kinds") {
        ModelSpec spec = small_spec();
        spec.widths = {3, 6};
        for (FusionKind k : {FusionKind::bidirectional, FusionKind::unidirectional, FusionKind::concat}) {
            spec.fusion = k;
            const FlowNet net = build_model(spec, 3);
            const auto [a, b] = fuse(f, c, &net.fusion[0], k);
            CHECK(testing::max_abs_diff(a.values(), f.values()) == 0.0);
            CHECK(testing::max_abs_diff(b.values(), c.values()) == 0.0);
        }
    }
    SUBCASE("unidirectional leaves the condition stream alone") {
        FusionModule m{{random_tensor({3, 3, 1, 1}, 4), random_tensor({3}, 5), 1, 0},
                       {random_tensor({3, 3, 1, 1}, 6), random_tensor({3}, 7), 1, 0}};
        const auto [a, b] = fuse(f, c, &m, FusionKind::unidirectional);
        CHECK(testing::bitwise_equal(b.values(), c.values()));
        CHECK(testing::max_abs_diff(a.values(), f.values()) > 0.0);
    }
    SUBCASE("shape mismatch") { CHECK_THROWS_AS(fuse(f, random_tensor({3, 4, 4}, 1), nullptr, FusionKind::none), ShapeError); }
}

TEST_CASE("gradients flow through both fusion branches") {
    for (int seed = 0; seed < 20; ++seed) {
        const FusionKind kind = seed % 3 == 0 ? FusionKind::bidirectional
                                : seed % 3 == 1 ? FusionKind::unidirectional
                                                : FusionKind::concat;
        const int cin = kind == FusionKind::concat ? 6 : 3;
        std::vector<Tensor> in{random_tensor({3, 3, 4}, 10 + seed), random_tensor({3, 3, 4}, 40 + seed),
                               random_tensor({3, cin, 1, 1}, 70 + seed), random_tensor({3}, 100 + seed),
                               random_tensor({3, cin, 1, 1}, 130 + seed), random_tensor({3}, 160 + seed)};
        const double err = grad_check(
            [&](std::span<const Tensor> x) {
                const FusionModule m{{x[2], x[3], 1, 0}, {x[4], x[5], 1, 0}};
                const auto [a, b] = fuse(x[0], x[1], &m, kind);
                const Tensor both[] = {square(a), b};
                return sum(concat_channels(both));
            },
            in);
        CHECK(err <= 1e-5);
    }
}

TEST_CASE("encoder without the condition branch is the plain frame encoder") {
    ModelSpec spec;
    spec.use_cfe = false;
    const FlowNet net = build_model(spec, 2);
    const Tensor img = random_tensor({1, 32, 32}, 3, 0, 1);
    const EncoderOutput e = cce_forward(net, img, point_mask(32, 32, {{4, 4}}));
    Tensor x = img;
    for (const Conv& c : net.ffe) x = leaky_relu(conv2d(x, c.weight, c.bias, c.stride, c.padding), 0.1);
    CHECK(testing::bitwise_equal(e.final_features().values(), x.values()));
    CHECK(e.cond.empty());
    CHECK(e.final_features().shape() == Shape{64, 4, 4});
}

TEST_CASE("stride arithmetic") {
    const FlowNet net = build_model(ModelSpec{}, 0);
    const EncoderOutput e = cce_forward(net, random_tensor({1, 32, 32}, 1, 0, 1), reference_mask({32, 32}));
    REQUIRE(e.frame.size() == 3);
    CHECK(e.frame[0].shape() == Shape{16, 16, 16});
    CHECK(e.frame[1].shape() == Shape{32, 8, 8});
    CHECK(e.frame[2].shape() == Shape{64, 4, 4});
    CHECK(cumulative_stride(ModelSpec{}) == 8);
    CHECK_THROWS_AS(cce_forward(net, random_tensor({1, 32, 32}, 1), reference_mask({16, 32})), ShapeError);
}

TEST_CASE("forward contract") {
    const ModelSpec spec;
    const FlowNet net = build_model(spec, 9);
    const Tensor i1 = random_tensor({1, 40, 48}, 1, 0, 1), i2 = random_tensor({1, 40, 48}, 2, 0, 1);
    const ConditionMask q = point_mask(40, 48, {{10, 10}, {20, 30}});
    const FlowPrediction a = forward(net, i1, i2, q, reference_mask({40, 48}));
    const FlowPrediction b = forward(net, i1, i2, q, reference_mask({40, 48}));
    CHECK(a.flow.tensor().shape() == Shape{2, 40, 48});
    CHECK(testing::bitwise_equal(a.flow.tensor().values(), b.flow.tensor().values()));
    REQUIRE(a.per_scale.size() == 3);
    for (const auto& s : a.per_scale) CHECK(s.tensor().shape() == Shape{2, 40, 48});
    CHECK(testing::bitwise_equal(a.per_scale.back().tensor().values(), a.flow.tensor().values()));
    CHECK_THROWS_AS(forward(net, i1, random_tensor({1, 40, 40}, 2), q, reference_mask({40, 48})), ShapeError);
}

TEST_CASE("initial predictions are finite and small") {
    SceneConfig scene;
    for (int seed = 0; seed < 20; ++seed) {
        for (bool cfe : {true, false}) {
            ModelSpec spec;
            spec.use_cfe = cfe;
            const FlowNet net = build_model(spec, static_cast<std::uint64_t>(seed));
            const Sample s = gen_sample(scene, 500 + seed);
            const FlowPrediction p = forward(net, s.i1, s.i1, point_mask(48, 48, {{5, 5}}), reference_mask({48, 48}));
            double m = 0;
            for (double v : p.flow.tensor().values()) {
                REQUIRE(std::isfinite(v));
                m += std::abs(v);
            }
            CHECK(m / static_cast<double>(p.flow.tensor().numel()) < 10.0);
        }
    }
}

TEST_CASE("a single mask pixel steers a trained encoder") {
    SceneConfig scene;
    scene.height = scene.width = 32;
    scene.max_sprite_size = 12;
    const Dataset data = gen_dataset(scene, 8, 4);
    ModelSpec spec = small_spec();
    spec.widths = {8, 8, 8};
    spec.strides = {2, 2, 2};
    TrainConfig cfg;
    cfg.iterations = 30;
    cfg.batch_size = 2;
    cfg.log_every = 1000;
    const TrainResult r = train(build_model(spec, 4), data, cfg);
    const ConditionMask m0 = point_mask(32, 32, {{8, 8}});
    const ConditionMask m1 = point_mask(32, 32, {{8, 8}, {20, 17}});
    const Tensor f0 = cce_forward(r.net, data[0].i1, m0).final_features();
    const Tensor f1 = cce_forward(r.net, data[0].i1, m1).final_features();
    CHECK(testing::max_abs_diff(f0.values(), f1.values()) > 0.0);
}

TEST_CASE("spec validation and structural comparison") {
    ModelSpec bad;
    bad.strides = {2, 2};
    CHECK_THROWS_AS(build_model(bad, 0), Error);
    ModelSpec other;
    CHECK(ModelSpec{}.structural_difference(other).empty());
    other.widths = {16, 32, 48};
    CHECK(!ModelSpec{}.structural_difference(other).empty());
    for (FusionKind k : {FusionKind::bidirectional, FusionKind::unidirectional, FusionKind::concat, FusionKind::none})
        CHECK(parse_fusion_kind(to_string(k)) == k);
}

TEST_CASE("copies do not share parameters") {
    FlowNet a = build_model(small_spec(), 1);
    FlowNet b = a;
    zero_parameters(b);
    CHECK(a.parameter_count() == b.parameter_count());
    double sa = 0, sb = 0;
    for (double v : flat_parameters(a)) sa += std::abs(v);
    for (double v : flat_parameters(b)) sb += std::abs(v);
    CHECK(sa > 0.0);
    CHECK(sb == 0.0);
}
