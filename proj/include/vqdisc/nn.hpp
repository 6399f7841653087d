#pragma once

// Differentiable primitives used by the codec. Every forward op has a
// matching *_backward that takes the upstream gradient and returns the
// gradient for the op input, accumulating parameter gradients in place.

#include "vqdisc/tensor.hpp"

namespace vqdisc::nn {

// y = x W + b over the innermost axis. x: [..., in], w: [in, out], b: [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor& dw, Tensor& db);

// [H, W, C] -> [H/r, W/r, r*r*C]; each r x r block's channel vectors are
// concatenated in row-major order within the block.
Tensor space_to_depth(const Tensor& x, std::size_t r);
Tensor depth_to_space(const Tensor& x, std::size_t r);

// Non-overlapping transposed convolution: kernel [k, k, in, out] with
// k == stride, bias [out]. [H, W, in] -> [stride*H, stride*W, out].
Tensor transposed_conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                         std::size_t stride);
Tensor transposed_conv2d_backward(const Tensor& x, const Tensor& kernel, std::size_t stride,
                                  const Tensor& dy, Tensor& dkernel, Tensor& dbias);

enum class Activation { relu, sigmoid };

Tensor activation(const Tensor& x, Activation kind);
// Takes the forward *output* y, which is sufficient for both kinds.
Tensor activation_backward(const Tensor& y, const Tensor& dy, Activation kind);

inline Tensor relu(const Tensor& x) { return activation(x, Activation::relu); }
inline Tensor sigmoid(const Tensor& x) { return activation(x, Activation::sigmoid); }

// Mean over all leading axes: [..., C] -> [C].
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dy);

// Mean over r x r blocks: [H, W, C] -> [H/r, W/r, C].
Tensor area_downsample(const Tensor& x, std::size_t r);
Tensor area_downsample_backward(const Shape& input_shape, std::size_t r, const Tensor& dy);

}  // namespace vqdisc::nn
