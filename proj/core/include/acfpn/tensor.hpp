#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace acfpn {

/// Shape of a dense rank-4 tensor in (batch, channel, height, width) order.
/// Zero extents are valid; they describe empty tensors that propagate
/// through the operations.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense NCHW tensor. The scalar type is float or double; one computation
/// graph uses a single precision throughout.
template <typename T>
struct Tensor {
  Shape shape{};
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<T> values);

  static Tensor full(Shape s, T value);
  static Tensor from_values(Shape s, std::vector<T> values) { return Tensor(s, std::move(values)); }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  bool empty() const { return data.empty(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return ((n * shape.c + c) * shape.h + y) * shape.w + x;
  }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data[static_cast<std::size_t>(index(n, c, y, x))];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data[static_cast<std::size_t>(index(n, c, y, x))];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  /// Exact comparison, used by determinism checks.
  bool bit_equal(const Tensor& other) const { return shape == other.shape && data == other.data; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Per-axis convolution geometry: kernel, stride, padding, dilation.
/// Output extent follows floor((in + 2p - d*(k-1) - 1) / s) + 1 and must be
/// non-negative.
struct ConvSpec {
  int kh = 1, kw = 1;
  int sh = 1, sw = 1;
  int ph = 0, pw = 0;
  int dh = 1, dw = 1;

  static ConvSpec make(int kernel, int stride = 1, int padding = 0, int dilation = 1) {
    return ConvSpec{kernel, kernel, stride, stride, padding, padding, dilation, dilation};
  }

  void validate() const;
  /// Extent of the dilated kernel footprint: d*(k-1) + 1.
  std::int64_t footprint_h() const { return static_cast<std::int64_t>(dh) * (kh - 1) + 1; }
  std::int64_t footprint_w() const { return static_cast<std::int64_t>(dw) * (kw - 1) + 1; }
  std::int64_t out_h(std::int64_t in_h) const;
  std::int64_t out_w(std::int64_t in_w) const;
  std::string str() const;
};

/// Result of a backward pass: the forward value together with one gradient
/// tensor per input slot, each shaped like its input.
template <typename T>
struct GradPair {
  Tensor<T> value;
  std::map<std::string, Tensor<T>> grads;
};

[[noreturn]] void shape_error(const std::string& message);

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace acfpn
