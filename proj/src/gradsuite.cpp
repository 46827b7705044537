#include "focusflow/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "focusflow/error.hpp"
#include "focusflow/gradcheck.hpp"
#include "focusflow/losses.hpp"
#include "focusflow/masks.hpp"
#include "focusflow/random.hpp"
#include "focusflow/trainer.hpp"

namespace focusflow {

const GradCase& GradSuiteReport::worst() const {
    if (cases.empty()) throw Error("grad suite: no cases");
    return *std::max_element(cases.begin(), cases.end(),
                             [](const GradCase& a, const GradCase& b) { return a.error < b.error; });
}

ModelSpec grad_suite_model() {
    ModelSpec spec;
    spec.widths = {4, 6};
    spec.strides = {2, 2};
    spec.corr_radius = 1;
    spec.refine_convs = 1;
    spec.decoder_width = 4;
    spec.condition = {MaskPattern::neighbor_g, 5, 1.5};
    return spec;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from(std::move(shape), std::move(v));
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
    std::vector<double> w(n);
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    return w;
}

// Reduces an op output to a scalar with fixed random weights.
ScalarFn reduced(std::function<Tensor(std::span<const Tensor>)> op, std::size_t out_numel, Rng& rng) {
    auto w = std::make_shared<std::vector<double>>(random_weights(out_numel, rng));
    return [op = std::move(op), w](std::span<const Tensor> in) { return weighted_sum(op(in), *w); };
}

// Values bounded away from zero so kinks are not straddled by the stencil.
Tensor away_from_zero(Shape shape, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 1.0);
    return Tensor::from(std::move(shape), std::move(v));
}

// He-uniform weights as in build_model, but also for fusion convs and biases,
// so that every parameter influences the loss.
void randomize(FlowNet& net, Rng& rng) {
    for (auto& p : net.parameters()) {
        const Shape& s = p.tensor.shape();
        double bound = 0.1;
        if (s.size() == 4) bound = std::sqrt(6.0 / (s[1] * s[2] * s[3]));
        for (auto& x : p.tensor.mutable_values()) x = rng.uniform(-bound, bound);
    }
}

double model_case(std::uint64_t seed, double eps) {
    Rng rng(seed);
    ModelSpec spec = grad_suite_model();
    const FusionKind kinds[] = {FusionKind::bidirectional, FusionKind::unidirectional, FusionKind::concat,
                                FusionKind::none};
    spec.fusion = kinds[seed % 4];
    FlowNet net = build_model(spec, seed);
    randomize(net, rng);
    const ImageSize size{8, 8};
    const Tensor i1 = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    const Tensor i2 = random_tensor({1, 8, 8}, rng, 0.0, 1.0);
    const FlowField gt(random_tensor({2, 8, 8}, rng, -2.0, 2.0));
    const KeyPointSet kps = random_points(8, 8, 3, seed);
    const ConditionMask qmask = make_mask(kps, size, spec.condition, i1);
    const ConditionMask rmask = reference_mask(size);
    LossConfig lc;
    lc.p = seed % 2 == 0 ? Norm::l1 : Norm::l2;
    lc.mu = 3;
    lc.sigma = 1.0;
    lc.lambda = 1.0;
    const WeightMap alpha = alpha_weights(kps, size, lc.mu, lc.sigma);

    std::vector<Tensor> params;
    for (const auto& p : net.parameters()) params.push_back(p.tensor);
    ScalarFn fn = [&](std::span<const Tensor>) {
        const FlowPrediction pred = forward(net, i1, i2, qmask, rmask);
        const int levels = static_cast<int>(pred.per_scale.size());
        Tensor total;
        for (int l = 0; l < levels; ++l) {
            Tensor t = scale(mix_loss(gt, pred.per_scale[static_cast<std::size_t>(l)], alpha, lc),
                             scale_weight(l, levels));
            total = total.defined() ? add(total, t) : t;
        }
        return total;
    };
    return grad_check(fn, params, eps);
}

}  // namespace

GradSuiteReport run_grad_suite(std::uint64_t first_seed, int seeds, double eps) {
    GradSuiteReport report;
    for (int k = 0; k < seeds; ++k) {
        const std::uint64_t seed = first_seed + static_cast<std::uint64_t>(k);
        Rng rng(derive_seed(seed, 0));
        auto run = [&](const std::string& name, const ScalarFn& fn, std::vector<Tensor> inputs) {
            report.cases.push_back({name, seed, grad_check(fn, inputs, eps)});
        };

        const Shape s{2, 3, 4};
        const std::size_t n = shape_numel(s);
        run("add", reduced([](auto in) { return add(in[0], in[1]); }, n, rng),
            {random_tensor(s, rng), random_tensor(s, rng)});
        run("sub", reduced([](auto in) { return sub(in[0], in[1]); }, n, rng),
            {random_tensor(s, rng), random_tensor(s, rng)});
        run("mul", reduced([](auto in) { return mul(in[0], in[1]); }, n, rng),
            {random_tensor(s, rng), random_tensor(s, rng)});
        run("relu", reduced([](auto in) { return relu(in[0]); }, n, rng), {away_from_zero(s, rng)});
        run("leaky_relu", reduced([](auto in) { return leaky_relu(in[0], 0.1); }, n, rng), {away_from_zero(s, rng)});
        run("scale", reduced([](auto in) { return scale(in[0], -1.7); }, n, rng), {random_tensor(s, rng)});
        {
            auto f = std::make_shared<std::vector<double>>(random_weights(2, rng));
            run("scale_channels", reduced([f](auto in) { return scale_channels(in[0], *f); }, n, rng),
                {random_tensor(s, rng)});
        }
        run("square", reduced([](auto in) { return square(in[0]); }, n, rng), {random_tensor(s, rng)});
        run("sum", [](auto in) { return sum(in[0]); }, {random_tensor(s, rng)});
        run("mean", [](auto in) { return mean(in[0]); }, {random_tensor(s, rng)});
        {
            auto w = std::make_shared<std::vector<double>>(random_weights(n, rng));
            run("weighted_sum", [w](auto in) { return weighted_sum(in[0], *w); }, {random_tensor(s, rng)});
        }
        run("conv2d", reduced([](auto in) { return conv2d(in[0], in[1], in[2], 1, 1); }, 3 * 5 * 5, rng),
            {random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
        run("conv2d_stride2", reduced([](auto in) { return conv2d(in[0], in[1], 2, 1); }, 3 * 3 * 3, rng),
            {random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng)});
        run("conv2d_1x1", reduced([](auto in) { return conv2d(in[0], in[1], 1, 0); }, 3 * 4 * 4, rng),
            {random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 1, 1}, rng)});
        run("bilinear_up", reduced([](auto in) { return bilinear_resize(in[0], 7, 9); }, 2 * 7 * 9, rng),
            {random_tensor({2, 3, 4}, rng)});
        run("bilinear_down", reduced([](auto in) { return bilinear_resize(in[0], 3, 2); }, 2 * 3 * 2, rng),
            {random_tensor({2, 6, 5}, rng)});
        run("concat_channels", reduced([](auto in) { return concat_channels(in); }, 5 * 3 * 3, rng),
            {random_tensor({2, 3, 3}, rng), random_tensor({3, 3, 3}, rng)});
        run("correlation_volume", reduced([](auto in) { return correlation_volume(in[0], in[1], 1); }, 9 * 4 * 5, rng),
            {random_tensor({3, 4, 5}, rng), random_tensor({3, 4, 5}, rng)});
        run("endpoint_error_l1",
            reduced([](auto in) { return endpoint_error(in[0], in[1], Norm::l1); }, 4 * 3, rng),
            {away_from_zero({2, 4, 3}, rng), Tensor::zeros({2, 4, 3})});
        run("endpoint_error_l2",
            reduced([](auto in) { return endpoint_error(in[0], in[1], Norm::l2); }, 4 * 3, rng),
            {random_tensor({2, 4, 3}, rng), random_tensor({2, 4, 3}, rng)});
        {
            const ImageSize size{5, 6};
            const KeyPointSet kps = random_points(5, 6, 2, seed);
            const WeightMap alpha = alpha_weights(kps, size, 3, 1.0);
            const Tensor gt = away_from_zero({2, 5, 6}, rng);
            LossConfig lc;
            lc.mu = 3;
            lc.sigma = 1.0;
            lc.lambda = 0.7;
            run("photometric_loss",
                [gt](auto in) { return photometric_loss(FlowField(gt), FlowField(in[0]), Norm::l2); },
                {random_tensor({2, 5, 6}, rng)});
            run("cpcl", [gt, alpha](auto in) { return cpcl(FlowField(gt), FlowField(in[0]), alpha, Norm::l2); },
                {random_tensor({2, 5, 6}, rng)});
            run("mix_loss", [gt, alpha, lc](auto in) { return mix_loss(FlowField(gt), FlowField(in[0]), alpha, lc); },
                {Tensor::zeros({2, 5, 6})});
        }
        report.cases.push_back({"model+mix_loss", seed, model_case(derive_seed(seed, 1), eps)});
    }
    return report;
}

}  // namespace focusflow
