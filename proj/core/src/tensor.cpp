#include "acfpn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace acfpn {

namespace {

// floor division for possibly negative numerators (C++ / truncates toward 0)
std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  std::int64_t r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

std::int64_t conv_out_extent(std::int64_t in, int k, int s, int p, int d, const char* axis) {
  const std::int64_t numer = in + 2 * static_cast<std::int64_t>(p) -
                             static_cast<std::int64_t>(d) * (k - 1) - 1;
  const std::int64_t out = floor_div(numer, s) + 1;
  if (out < 0) {
    std::ostringstream msg;
    msg << "conv spec: negative output extent " << out << " along " << axis << " (in=" << in
        << ", k=" << k << ", s=" << s << ", p=" << p << ", d=" << d << ")";
    shape_error(msg.str());
  }
  return out;
}

}  // namespace

void shape_error(const std::string& message) { throw std::invalid_argument(message); }

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape s) : shape(s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    shape_error("tensor: negative shape component " + s.str());
  }
  data.assign(static_cast<std::size_t>(s.numel()), T{});
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
    shape_error("tensor: negative shape component " + s.str());
  }
  if (static_cast<std::int64_t>(data.size()) != s.numel()) {
    shape_error("tensor: data length " + std::to_string(data.size()) + " does not match shape " +
                s.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape s, T value) {
  Tensor t(s);
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

void ConvSpec::validate() const {
  if (kh < 1 || kw < 1) shape_error("conv spec: kernel must be positive, got " + str());
  if (sh < 1 || sw < 1) shape_error("conv spec: stride must be positive, got " + str());
  if (dh < 1 || dw < 1) shape_error("conv spec: dilation must be positive, got " + str());
  if (ph < 0 || pw < 0) shape_error("conv spec: padding must be non-negative, got " + str());
}

std::int64_t ConvSpec::out_h(std::int64_t in_h) const {
  return conv_out_extent(in_h, kh, sh, ph, dh, "h");
}

std::int64_t ConvSpec::out_w(std::int64_t in_w) const {
  return conv_out_extent(in_w, kw, sw, pw, dw, "w");
}

std::string ConvSpec::str() const {
  std::ostringstream os;
  os << "k=(" << kh << "," << kw << ") s=(" << sh << "," << sw << ") p=(" << ph << "," << pw
     << ") d=(" << dh << "," << dw << ")";
  return os.str();
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace acfpn
