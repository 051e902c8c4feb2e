#pragma once

// Differentiable building blocks shared by the network modules. Feature maps
// are channels-last {H, W, C}.

#include "dinorade/tensor.hpp"

namespace dinorade::ag {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor log1p(const Tensor& x);

/// Elementwise clamp into [lo, hi]; gradient passes where x is inside.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Softmax over the last axis.
Tensor softmax_last(const Tensor& x);

/// (x - mean) / sqrt(var + eps) over all elements of the tensor.
Tensor standardize(const Tensor& x, double eps = 1e-5);

Tensor sum(const Tensor& x);

/// x[..., Cin] * weight[Cin, Cout] (+ bias[Cout]).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias);

/// 2D convolution of x {H, W, Cin} with weight {K, K, Cin, Cout}, symmetric
/// zero padding, optional bias {Cout}.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor* bias, int stride, int pad);

Tensor concat_last(const Tensor& a, const Tensor& b);

/// Non-overlapping average pooling of {H, W, C} by integer factors.
Tensor avg_pool2d(const Tensor& x, int factor_h, int factor_w);

/// Bilinear 2x upsampling of {H, W, C} with half-pixel centers, edge clamped.
Tensor upsample_bilinear2x(const Tensor& x);

/// {..., A, B} -> {..., B, A}.
Tensor swap_last_two(const Tensor& x);

/// Arithmetic mean over the last axis.
Tensor mean_last(const Tensor& x);

}  // namespace dinorade::ag
