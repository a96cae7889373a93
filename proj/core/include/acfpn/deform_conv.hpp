#pragma once

#include "acfpn/tensor.hpp"

namespace acfpn {

/// Deformable 2-D convolution. A sibling convolution with the same geometry
/// predicts one (dy, dx) pair per kernel tap; taps sample the zero-padded
/// input at the displaced locations by bilinear interpolation. With all
/// offset parameters zero the layer reduces exactly to conv2d.
template <typename T>
struct DeformConv2d {
  Tensor<T> weight;        // (co, ci, kh, kw)
  Tensor<T> bias;          // (1, co, 1, 1), may be empty
  Tensor<T> offset_weight; // (2*kh*kw, ci, kh, kw)
  Tensor<T> offset_bias;   // (1, 2*kh*kw, 1, 1), may be empty
  ConvSpec spec;

  void validate(std::int64_t input_channels) const;
};

template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& input, const DeformConv2d<T>& layer);

/// Grads for slots "input", "weight", "bias", "offset_weight", "offset_bias".
/// The offset gradient follows the piecewise-linear bilinear kernel, with
/// subgradient 0 exactly at integer sample coordinates.
template <typename T>
GradPair<T> deform_conv2d_backward(const Tensor<T>& input, const DeformConv2d<T>& layer,
                                   const Tensor<T>& grad_out);

/// 4-neighbour bilinear read of map (c, h, w stored as a (1, c, h, w) tensor)
/// at fractional (y, x); everything outside [0, h) x [0, w) reads zero.
template <typename T>
std::vector<T> bilinear_sample(const Tensor<T>& map, double y, double x);

}  // namespace acfpn
