#include "focusflow/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "focusflow/error.hpp"
#include "focusflow/ops.hpp"

namespace focusflow {

namespace {

struct Evaluation {
    double value;
    std::uint64_t kinks;
};

Evaluation evaluate(const ScalarFn& fn, std::span<Tensor> inputs) {
    kinks::begin();
    Tensor out;
    try {
        out = fn(std::span<const Tensor>(inputs.data(), inputs.size()));
    } catch (...) {
        kinks::end();
        throw;
    }
    const std::uint64_t signature = kinks::end();
    if (out.numel() != 1) throw ShapeError("grad_check: function is not scalar-valued");
    return {out.item(), signature};
}

constexpr int kMaxHalvings = 30;

// Central difference at step h, halving h while a stencil point sits on a
// different smooth piece than the unperturbed input. Returns the step used.
double central(const ScalarFn& fn, std::span<Tensor> inputs, std::span<double> values, std::size_t i,
               std::uint64_t base, double& h) {
    const double x = values[i];
    for (int attempt = 0;; ++attempt) {
        values[i] = x + h;
        const Evaluation up = evaluate(fn, inputs);
        values[i] = x - h;
        const Evaluation down = evaluate(fn, inputs);
        values[i] = x;
        if ((up.kinks == base && down.kinks == base) || attempt == kMaxHalvings) return (up.value - down.value) / (2.0 * h);
        h *= 0.5;
    }
}

// Ridders' extrapolation of central differences over shrinking steps.
double ridders(const ScalarFn& fn, std::span<Tensor> inputs, std::span<double> values, std::size_t i,
               std::uint64_t base, double h0) {
    constexpr int kTable = 10;
    constexpr double kShrink = 1.4;
    constexpr double kShrink2 = kShrink * kShrink;
    constexpr double kSafe = 2.0;
    double a[kTable][kTable];
    double h = h0;
    a[0][0] = central(fn, inputs, values, i, base, h);
    double best = a[0][0];
    double err = std::numeric_limits<double>::max();
    for (int k = 1; k < kTable; ++k) {
        h /= kShrink;
        a[0][k] = central(fn, inputs, values, i, base, h);
        double fac = kShrink2;
        for (int j = 1; j <= k; ++j) {
            a[j][k] = (a[j - 1][k] * fac - a[j - 1][k - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double e = std::max(std::abs(a[j][k] - a[j - 1][k]), std::abs(a[j][k] - a[j - 1][k - 1]));
            if (e <= err) {
                err = e;
                best = a[j][k];
            }
        }
        if (std::abs(a[k][k] - a[k - 1][k - 1]) >= kSafe * err) break;
    }
    return best;
}

}  // namespace

double grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double eps) {
    if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
    for (auto& t : inputs) t.set_requires_grad(true);
    kinks::begin();
    Tensor out = fn(std::span<const Tensor>(inputs.data(), inputs.size()));
    const std::uint64_t base = kinks::end();
    if (out.numel() != 1) throw ShapeError("grad_check: function is not scalar-valued");
    const Gradients grads = backward(out);
    out = Tensor();

    double worst = 0.0;
    for (auto& input : inputs) {
        const Tensor analytic = grads.get(input);
        auto values = input.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double x = values[i];
            const double numeric = ridders(fn, inputs, values, i, base, eps * std::max(1.0, std::abs(x)));
            const double a = analytic[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace focusflow
