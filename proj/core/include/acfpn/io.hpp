#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acfpn/tensor.hpp"

namespace acfpn {

/// 8-bit binary portable graymap (magic "P5").
struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, height * width
};

/// Min-max normalization of a single-channel map (n=1, c=1) to 8 bits.
/// A constant map normalizes to 0 everywhere (degenerate-range convention,
/// recorded in the file comment).
template <typename T>
GrayImage normalize_to_gray(const Tensor<T>& map);

/// comment, when non-empty, is written as a "# ..." header line.
void write_pgm(const std::string& path, const GrayImage& image, const std::string& comment = {});
GrayImage read_pgm(const std::string& path);

/// Reads binary PGM (P5) or PPM (P6) into a (1, c, h, w) tensor scaled to
/// [0, 1].
TensorF read_image(const std::string& path);

/// Raw tensor dump: magic "ACFT", then n, c, h, w as little-endian 32-bit
/// unsigned ints, then the elements as little-endian 32-bit floats in NCHW
/// order.
template <typename T>
void write_acft(const std::string& path, const Tensor<T>& tensor);
TensorF read_acft(const std::string& path);

}  // namespace acfpn
