#include "acfpn/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace acfpn {

namespace {

[[noreturn]] void io_error(const std::string& path, const std::string& what) {
  throw std::runtime_error(path + ": " + what);
}

// netpbm headers allow '#' comments between tokens
std::string next_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}

std::uint32_t to_le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
  }
}

float float_to_le(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  bits = to_le32(bits);
  float out;
  std::memcpy(&out, &bits, sizeof(out));
  return out;
}

}  // namespace

template <typename T>
GrayImage normalize_to_gray(const Tensor<T>& map) {
  if (map.shape.n != 1 || map.shape.c != 1) {
    shape_error("normalize_to_gray: expected a (1, 1, h, w) map, got " + map.shape.str());
  }
  if (map.empty()) shape_error("normalize_to_gray: empty map");
  GrayImage img;
  img.height = map.shape.h;
  img.width = map.shape.w;
  img.pixels.resize(static_cast<std::size_t>(img.height * img.width));
  const auto [lo_it, hi_it] = std::minmax_element(map.data.begin(), map.data.end());
  const double lo = static_cast<double>(*lo_it);
  const double hi = static_cast<double>(*hi_it);
  if (hi <= lo) {
    std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{0});
    return img;
  }
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = (static_cast<double>(map.data[i]) - lo) * scale;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image, const std::string& comment) {
  if (image.width < 1 || image.height < 1 ||
      static_cast<std::int64_t>(image.pixels.size()) != image.width * image.height) {
    io_error(path, "inconsistent graymap dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error(path, "cannot open for writing");
  out << "P5\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  out << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) io_error(path, "write failed");
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open");
  if (next_token(in) != "P5") io_error(path, "not a binary graymap (expected magic P5)");
  GrayImage img;
  try {
    img.width = std::stoll(next_token(in));
    img.height = std::stoll(next_token(in));
    const long maxval = std::stol(next_token(in));
    if (maxval != 255) io_error(path, "unsupported maxval (expected 255)");
  } catch (const std::logic_error&) {
    io_error(path, "malformed header");
  }
  if (img.width < 1 || img.height < 1) io_error(path, "bad dimensions");
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    io_error(path, "truncated pixel data");
  }
  return img;
}

TensorF read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open");
  const std::string magic = next_token(in);
  std::int64_t channels = 0;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    io_error(path, "unsupported image format (expected P5 or P6)");
  }
  std::int64_t width = 0, height = 0;
  try {
    width = std::stoll(next_token(in));
    height = std::stoll(next_token(in));
    const long maxval = std::stol(next_token(in));
    if (maxval != 255) io_error(path, "unsupported maxval (expected 255)");
  } catch (const std::logic_error&) {
    io_error(path, "malformed header");
  }
  if (width < 1 || height < 1) io_error(path, "bad dimensions");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(width * height * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    io_error(path, "truncated pixel data");
  }
  TensorF img(Shape{1, channels, height, width});
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      for (std::int64_t c = 0; c < channels; ++c) {
        img.at(0, c, y, x) =
            static_cast<float>(raw[static_cast<std::size_t>((y * width + x) * channels + c)]) /
            255.0f;
      }
    }
  }
  return img;
}

template <typename T>
void write_acft(const std::string& path, const Tensor<T>& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_error(path, "cannot open for writing");
  out.write("ACFT", 4);
  const std::uint32_t dims[4] = {
      to_le32(static_cast<std::uint32_t>(tensor.shape.n)),
      to_le32(static_cast<std::uint32_t>(tensor.shape.c)),
      to_le32(static_cast<std::uint32_t>(tensor.shape.h)),
      to_le32(static_cast<std::uint32_t>(tensor.shape.w)),
  };
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  for (const T& v : tensor.data) {
    const float f = float_to_le(static_cast<float>(v));
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  if (!out) io_error(path, "write failed");
}

TensorF read_acft(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error(path, "cannot open");
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "ACFT", 4) != 0) {
    io_error(path, "bad magic (expected ACFT)");
  }
  std::uint32_t dims[4];
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (in.gcount() != sizeof(dims)) io_error(path, "truncated header");
  const Shape shape{static_cast<std::int64_t>(to_le32(dims[0])),
                    static_cast<std::int64_t>(to_le32(dims[1])),
                    static_cast<std::int64_t>(to_le32(dims[2])),
                    static_cast<std::int64_t>(to_le32(dims[3]))};
  TensorF t(shape);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.data.size() * sizeof(float))) {
    io_error(path, "truncated tensor data");
  }
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : t.data) v = float_to_le(v);
  }
  return t;
}

template GrayImage normalize_to_gray<float>(const TensorF&);
template GrayImage normalize_to_gray<double>(const TensorD&);
template void write_acft<float>(const std::string&, const TensorF&);
template void write_acft<double>(const std::string&, const TensorD&);

}  // namespace acfpn
