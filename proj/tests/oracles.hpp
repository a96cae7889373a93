#pragma once

// Deliberately naive reference implementations used as independent oracles.
// They share nothing with the library kernels: plain nested loops, explicit
// padding checks, no layout tricks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "acfpn/tensor.hpp"

namespace oracle {

using acfpn::ConvSpec;
using acfpn::Shape;
using acfpn::Tensor;

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvSpec& s) {
  const std::int64_t oh = s.out_h(x.shape.h);
  const std::int64_t ow = s.out_w(x.shape.w);
  Tensor<T> out(Shape{x.shape.n, w.shape.n, oh, ow});
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t co = 0; co < w.shape.n; ++co)
      for (std::int64_t yo = 0; yo < oh; ++yo)
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          T acc = b.empty() ? T{} : b.at(0, co, 0, 0);
          for (std::int64_t ci = 0; ci < x.shape.c; ++ci)
            for (int ky = 0; ky < s.kh; ++ky)
              for (int kx = 0; kx < s.kw; ++kx) {
                const std::int64_t iy = yo * s.sh - s.ph + static_cast<std::int64_t>(ky) * s.dh;
                const std::int64_t ix = xo * s.sw - s.pw + static_cast<std::int64_t>(kx) * s.dw;
                if (iy < 0 || iy >= x.shape.h || ix < 0 || ix >= x.shape.w) continue;
                acc += x.at(n, ci, iy, ix) * w.at(co, ci, ky, kx);
              }
          out.at(n, co, yo, xo) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kh, int kw, int sh, int sw) {
  const std::int64_t oh = (x.shape.h - kh) / sh + 1;
  const std::int64_t ow = (x.shape.w - kw) / sw + 1;
  Tensor<T> out(Shape{x.shape.n, x.shape.c, oh, ow});
  for (std::int64_t n = 0; n < x.shape.n; ++n)
    for (std::int64_t c = 0; c < x.shape.c; ++c)
      for (std::int64_t yo = 0; yo < oh; ++yo)
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          T best = x.at(n, c, yo * sh, xo * sw);
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const T v = x.at(n, c, yo * sh + ky, xo * sw + kx);
              if (v > best) best = v;
            }
          out.at(n, c, yo, xo) = best;
        }
  return out;
}

template <typename T>
Tensor<T> affinity(const Tensor<T>& q, const Tensor<T>& k) {
  const std::int64_t N = q.shape.h * q.shape.w;
  Tensor<T> out(Shape{q.shape.n, N, q.shape.h, q.shape.w});
  for (std::int64_t n = 0; n < q.shape.n; ++n)
    for (std::int64_t i = 0; i < N; ++i)
      for (std::int64_t y = 0; y < q.shape.h; ++y)
        for (std::int64_t x = 0; x < q.shape.w; ++x) {
          T acc{};
          for (std::int64_t c = 0; c < q.shape.c; ++c) {
            acc += q.at(n, c, i / q.shape.w, i % q.shape.w) * k.at(n, c, y, x);
          }
          out.at(n, i, y, x) = acc;
        }
  return out;
}

template <typename T>
Tensor<T> mean_of_sigmoid(const Tensor<T>& r) {
  Tensor<T> out(Shape{r.shape.n, 1, r.shape.h, r.shape.w});
  for (std::int64_t n = 0; n < r.shape.n; ++n)
    for (std::int64_t y = 0; y < r.shape.h; ++y)
      for (std::int64_t x = 0; x < r.shape.w; ++x) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < r.shape.c; ++i) {
          acc += 1.0 / (1.0 + std::exp(-static_cast<double>(r.at(n, i, y, x))));
        }
        out.at(n, 0, y, x) = static_cast<T>(acc / static_cast<double>(r.shape.c));
      }
  return out;
}

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, T lo = T(-1), T hi = T(1)) {
  Tensor<T> t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (T& v : t.data) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape == b.shape)) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    worst = std::max(worst, std::fabs(static_cast<double>(a.data[i]) -
                                      static_cast<double>(b.data[i])));
  }
  return worst;
}

}  // namespace oracle
