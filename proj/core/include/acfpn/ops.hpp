#pragma once

#include <utility>
#include <vector>

#include "acfpn/tensor.hpp"

namespace acfpn {

// Differentiable primitives over NCHW tensors. Convolution is
// cross-correlation (no kernel flip). All functions are pure; parallel
// implementations keep a fixed per-element reduction order, so results are
// bit-identical for any thread count.

/// Dilated 2-D cross-correlation. weight is (co, ci, kh, kw), bias is a
/// (1, co, 1, 1) tensor (pass an empty tensor for no bias).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvSpec& spec);

/// Grads of sum(grad_out * conv2d(...)) for slots "input", "weight", "bias".
/// value carries the forward output.
template <typename T>
GradPair<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias, const ConvSpec& spec,
                            const Tensor<T>& grad_out);

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kh, int kw, int sh, int sw);

/// Routes each output gradient to the first (row-major) argmax of its window.
template <typename T>
Tensor<T> max_pool2d_backward(const Tensor<T>& input, int kh, int kw, int sh, int sw,
                              const Tensor<T>& grad_out);

/// Mean over the spatial extent, (n, c, h, w) -> (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

/// Bilinear interpolation with half-pixel centers (align-corners false).
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w);

/// Transpose of bilinear_resize: scatters the interpolation weights.
template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& input_shape, const Tensor<T>& grad_out);

/// Nearest-neighbour 2x upsample, out[y, x] = in[y / 2, x / 2].
template <typename T>
Tensor<T> nearest_upsample2x(const Tensor<T>& input);

template <typename T>
Tensor<T> nearest_upsample2x_backward(const Shape& input_shape, const Tensor<T>& grad_out);

/// Concatenates along the channel axis; inputs must agree on (n, h, w).
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs);

/// Channels [c_begin, c_end) of x; exact inverse of concat_channels.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t c_begin, std::int64_t c_end);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Backward in terms of the forward output y: g * y * (1 - y).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Scales every channel of v by the single-channel map attn (n, 1, h, w).
template <typename T>
Tensor<T> mul_attention(const Tensor<T>& v, const Tensor<T>& attn);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_attention_backward(const Tensor<T>& v, const Tensor<T>& attn,
                                                       const Tensor<T>& grad_out);

/// Correlation of every spatial position against every other: with N = h*w,
/// result[n, i, y, x] = sum_c q[n, c, pos i] * k[n, c, y, x].
template <typename T>
Tensor<T> affinity_matrix(const Tensor<T>& q, const Tensor<T>& k);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> affinity_backward(const Tensor<T>& q, const Tensor<T>& k,
                                                  const Tensor<T>& grad_out);

/// Sigmoid elementwise, then mean over the N axis: (n, N, h, w) -> (n, 1, h, w).
/// Values are strictly inside (0, 1) for finite inputs.
template <typename T>
Tensor<T> attn_collapse(const Tensor<T>& r);

template <typename T>
Tensor<T> attn_collapse_backward(const Tensor<T>& r, const Tensor<T>& grad_out);

}  // namespace acfpn
