#pragma once

#include <vector>

#include "trinet/tensor.hpp"

namespace trinet {

// Elementwise binaries with numpy-style trailing broadcast; gradients are
// sum-reduced over broadcast dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

/// Multiply by a compile-time-constant scalar (not a tape value).
Tensor scale(const Tensor& x, double factor);

/// Matrix product. `a` has shape [..., m, k]; `b` is either [k, n] (applied
/// to the last axis of every leading slice) or [..., k, n] with leading
/// dimensions equal to a's.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);

Tensor gelu(const Tensor& x);
Tensor square(const Tensor& x);

/// Square root of a scalar tensor; the input must be nonnegative.
Tensor sqrt_scalar(const Tensor& x);

/// Natural log with the argument floored at `eps` (derivative zero in the
/// clamped region).
Tensor log_clamped(const Tensor& x, double eps = 1e-12);

/// Softmax along `axis` (negative axes allowed).
Tensor softmax(const Tensor& x, int axis);

/// Layer normalization over the last axis with affine gain/bias (1-D, sized
/// to the last axis).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

/// Parameter-free layer normalization over the last axis.
Tensor layer_norm(const Tensor& x, double eps = 1e-5);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor slice(const Tensor& x, int axis, std::size_t start, std::size_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// Identity in the forward direction; blocks all gradient flow backward.
Tensor stop_gradient(const Tensor& x);

}  // namespace trinet
