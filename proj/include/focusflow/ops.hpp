#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "focusflow/tensor.hpp"

namespace focusflow {

// Differentiable primitives. Binary ops require identical shapes; nothing
// broadcasts. Image-like tensors are laid out [C, H, W].

enum class ElementwiseOp { add, sub, mul, relu, leaky_relu };

// Unary ops ignore `b`; binary ops require it. `slope` is used by leaky_relu.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr, double slope = 0.1);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.1);
Tensor scale(const Tensor& a, double factor);
// Multiplies channel c of a [C,H,W] tensor by factors[c].
Tensor scale_channels(const Tensor& a, std::span<const double> factors);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// sum_i a_i * w_i with constant (non-differentiable) weights.
Tensor weighted_sum(const Tensor& a, std::span<const double> weights);

// Cross-correlation of input [Cin,H,W] with kernel [Cout,Cin,kh,kw].
// Output is [Cout, (H+2p-kh)/s+1, (W+2p-kw)/s+1] with zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);
// Same, plus a per-output-channel bias of shape [Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);

// Bilinear resampling of [C,H,W] with half-pixel (align_corners=false) centers.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

// Concatenation of [Ci,H,W] tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);

// Cost volume: out[(dy+r)*(2r+1)+(dx+r), y, x] =
//   <feat1(:,y,x), feat2(:,y+dy,x+dx)> / sqrt(C), zero outside feat2.
Tensor correlation_volume(const Tensor& feat1, const Tensor& feat2, int radius);

enum class Norm { l1 = 1, l2 = 2 };

// Per-pixel p-norm of the difference of two [2,H,W] fields, shape [H,W].
// The l2 norm uses the zero subgradient where the difference vanishes.
Tensor endpoint_error(const Tensor& f, const Tensor& f_hat, Norm p);

// Records on which side of each non-differentiable point (relu/leaky_relu
// at 0, |.| of the l1 norm, the l2 norm at 0) forward passes land, as a
// hash. Lets grad_check keep its stencil on one smooth piece. Per thread.
namespace kinks {
void begin();
std::uint64_t end();
}  // namespace kinks

}  // namespace focusflow
