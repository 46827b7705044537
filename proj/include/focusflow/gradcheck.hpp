#pragma once

#include <functional>
#include <span>

#include "focusflow/tensor.hpp"

namespace focusflow {

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares reverse-mode gradients of a scalar function with central
/// differences (f(x+h) - f(x-h)) / 2h for every element of every input,
/// refined by Ridders' extrapolation over steps shrinking from
/// h = eps * max(1, |x|). Returns the worst relative error, where the
/// denominator is max(|analytic|, |numeric|, 1e-12). When a stencil point
/// lands on the other side of a relu/abs kink than the unperturbed input,
/// h is halved until both points stay on the same piece.
///
/// Inputs are perturbed in place and restored; they are marked as
/// requiring grad for the analytic pass.
double grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double eps = 1e-3);

}  // namespace focusflow
