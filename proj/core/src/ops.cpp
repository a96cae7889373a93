#include "acfpn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "acfpn/parallel.hpp"

namespace acfpn {

namespace {

template <typename T>
void check_conv_args(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                     const ConvSpec& spec) {
  spec.validate();
  if (weight.shape.h != spec.kh || weight.shape.w != spec.kw) {
    shape_error("conv2d: weight spatial shape " + weight.shape.str() + " does not match kernel " +
                spec.str());
  }
  if (input.shape.c != weight.shape.c) {
    shape_error("conv2d: input channels " + std::to_string(input.shape.c) +
                " != weight input channels " + std::to_string(weight.shape.c));
  }
  if (!bias.empty() && !(bias.shape == Shape{1, weight.shape.n, 1, 1})) {
    shape_error("conv2d: bias shape " + bias.shape.str() + " must be (1, " +
                std::to_string(weight.shape.n) + ", 1, 1)");
  }
}

}  // namespace

namespace {

// valid tap range [begin, end) keeping base + k*step inside [0, limit)
inline std::pair<int, int> tap_range(std::int64_t base, int step, int taps, std::int64_t limit) {
  int begin = 0;
  if (base < 0) begin = static_cast<int>((-base + step - 1) / step);
  const std::int64_t last = limit - 1 - base;
  int end = last < 0 ? 0 : static_cast<int>(std::min<std::int64_t>(taps, last / step + 1));
  if (end < begin) end = begin;
  return {begin, end};
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvSpec& spec) {
  check_conv_args(input, weight, bias, spec);
  const std::int64_t n = input.shape.n, ci = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t co = weight.shape.n;
  const std::int64_t oh = spec.out_h(ih), ow = spec.out_w(iw);
  Tensor<T> out(Shape{n, co, oh, ow});
  if (out.empty() || input.empty()) return out;

  const T* x = input.data.data();
  const T* wgt = weight.data.data();
  const T* b = bias.empty() ? nullptr : bias.data.data();
  T* y = out.data.data();
  const std::int64_t work = ci * spec.kh * spec.kw * oh * ow;

  const bool pointwise = spec.kh == 1 && spec.kw == 1 && spec.sh == 1 && spec.sw == 1 &&
                         spec.ph == 0 && spec.pw == 0;
  if (pointwise) {
    const std::int64_t hw = oh * ow;
    parallel_for(
        n * co,
        [&](std::int64_t nc) {
          const std::int64_t in = nc / co;
          const std::int64_t oc = nc % co;
          T* yrow = y + nc * hw;
          const T bias_val = b ? b[oc] : T{};
          for (std::int64_t p = 0; p < hw; ++p) yrow[p] = bias_val;
          for (std::int64_t c = 0; c < ci; ++c) {
            const T wv = wgt[oc * ci + c];
            const T* xrow = x + (in * ci + c) * hw;
            for (std::int64_t p = 0; p < hw; ++p) yrow[p] += wv * xrow[p];
          }
        },
        work);
    return out;
  }

  // valid kernel tap ranges per output row/column, hoisted out of the kernel
  std::vector<std::pair<int, int>> ky_range(static_cast<std::size_t>(oh));
  std::vector<std::pair<int, int>> kx_range(static_cast<std::size_t>(ow));
  for (std::int64_t yo = 0; yo < oh; ++yo) {
    ky_range[static_cast<std::size_t>(yo)] = tap_range(yo * spec.sh - spec.ph, spec.dh, spec.kh, ih);
  }
  for (std::int64_t xo = 0; xo < ow; ++xo) {
    kx_range[static_cast<std::size_t>(xo)] = tap_range(xo * spec.sw - spec.pw, spec.dw, spec.kw, iw);
  }

  parallel_for(
      n * co,
      [&](std::int64_t nc) {
        const std::int64_t in = nc / co;
        const std::int64_t oc = nc % co;
        const T bias_val = b ? b[oc] : T{};
        for (std::int64_t yo = 0; yo < oh; ++yo) {
          const std::int64_t iy0 = yo * spec.sh - spec.ph;
          const auto [ky0, ky1] = ky_range[static_cast<std::size_t>(yo)];
          for (std::int64_t xo = 0; xo < ow; ++xo) {
            const std::int64_t ix0 = xo * spec.sw - spec.pw;
            const auto [kx0, kx1] = kx_range[static_cast<std::size_t>(xo)];
            T acc = bias_val;
            for (std::int64_t c = 0; c < ci; ++c) {
              const T* xc = x + ((in * ci + c) * ih) * iw;
              const T* wc = wgt + ((oc * ci + c) * spec.kh) * spec.kw;
              for (int ky = ky0; ky < ky1; ++ky) {
                const T* xrow = xc + (iy0 + static_cast<std::int64_t>(ky) * spec.dh) * iw;
                const T* wrow = wc + static_cast<std::int64_t>(ky) * spec.kw;
                for (int kx = kx0; kx < kx1; ++kx) {
                  acc += xrow[ix0 + static_cast<std::int64_t>(kx) * spec.dw] * wrow[kx];
                }
              }
            }
            y[((nc * oh) + yo) * ow + xo] = acc;
          }
        }
      },
      work);
  return out;
}

template <typename T>
GradPair<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias, const ConvSpec& spec,
                            const Tensor<T>& grad_out) {
  check_conv_args(input, weight, bias, spec);
  const std::int64_t n = input.shape.n, ci = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t co = weight.shape.n;
  const std::int64_t oh = spec.out_h(ih), ow = spec.out_w(iw);
  if (!(grad_out.shape == Shape{n, co, oh, ow})) {
    shape_error("conv2d_backward: grad_out shape " + grad_out.shape.str() + " != output shape " +
                Shape{n, co, oh, ow}.str());
  }

  GradPair<T> result;
  result.value = conv2d(input, weight, bias, spec);
  Tensor<T> gx(input.shape);
  Tensor<T> gw(weight.shape);
  Tensor<T> gb(bias.empty() ? Shape{0, 0, 0, 0} : bias.shape);

  const T* x = input.data.data();
  const T* wgt = weight.data.data();
  const T* go = grad_out.data.data();

  // grad input: per-batch scatter, sequential over the output channels so the
  // accumulation order is fixed.
  parallel_for(n, [&](std::int64_t in) {
    for (std::int64_t oc = 0; oc < co; ++oc) {
      for (std::int64_t yo = 0; yo < oh; ++yo) {
        const std::int64_t iy0 = yo * spec.sh - spec.ph;
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          const std::int64_t ix0 = xo * spec.sw - spec.pw;
          const T g = go[(((in * co + oc) * oh) + yo) * ow + xo];
          if (g == T{}) continue;
          for (std::int64_t c = 0; c < ci; ++c) {
            T* gxc = gx.data.data() + ((in * ci + c) * ih) * iw;
            const T* wc = wgt + ((oc * ci + c) * spec.kh) * spec.kw;
            for (int ky = 0; ky < spec.kh; ++ky) {
              const std::int64_t iy = iy0 + static_cast<std::int64_t>(ky) * spec.dh;
              if (iy < 0 || iy >= ih) continue;
              for (int kx = 0; kx < spec.kw; ++kx) {
                const std::int64_t ix = ix0 + static_cast<std::int64_t>(kx) * spec.dw;
                if (ix < 0 || ix >= iw) continue;
                gxc[iy * iw + ix] += wc[ky * spec.kw + kx] * g;
              }
            }
          }
        }
      }
    }
  });

  // grad weight: each (oc, c, ky, kx) cell owned by one iteration.
  parallel_for(co * ci, [&](std::int64_t occ) {
    const std::int64_t oc = occ / ci;
    const std::int64_t c = occ % ci;
    for (int ky = 0; ky < spec.kh; ++ky) {
      for (int kx = 0; kx < spec.kw; ++kx) {
        T acc{};
        for (std::int64_t in = 0; in < n; ++in) {
          const T* xc = x + ((in * ci + c) * ih) * iw;
          const T* gc = go + ((in * co + oc) * oh) * ow;
          for (std::int64_t yo = 0; yo < oh; ++yo) {
            const std::int64_t iy = yo * spec.sh - spec.ph + static_cast<std::int64_t>(ky) * spec.dh;
            if (iy < 0 || iy >= ih) continue;
            for (std::int64_t xo = 0; xo < ow; ++xo) {
              const std::int64_t ix =
                  xo * spec.sw - spec.pw + static_cast<std::int64_t>(kx) * spec.dw;
              if (ix < 0 || ix >= iw) continue;
              acc += xc[iy * iw + ix] * gc[yo * ow + xo];
            }
          }
        }
        gw.data[static_cast<std::size_t>(((oc * ci + c) * spec.kh + ky) * spec.kw + kx)] = acc;
      }
    }
  });

  if (!bias.empty()) {
    for (std::int64_t oc = 0; oc < co; ++oc) {
      T acc{};
      for (std::int64_t in = 0; in < n; ++in) {
        const T* gc = go + ((in * co + oc) * oh) * ow;
        for (std::int64_t i = 0; i < oh * ow; ++i) acc += gc[i];
      }
      gb.data[static_cast<std::size_t>(oc)] = acc;
    }
  }

  result.grads["input"] = std::move(gx);
  result.grads["weight"] = std::move(gw);
  if (!bias.empty()) result.grads["bias"] = std::move(gb);
  return result;
}

namespace {

void check_pool_args(const Shape& s, int kh, int kw, int sh, int sw) {
  if (kh < 1 || kw < 1 || sh < 1 || sw < 1) {
    shape_error("max_pool2d: kernel and stride must be positive");
  }
  if (s.h < 1 || s.w < 1) {
    shape_error("max_pool2d: zero spatial input " + s.str());
  }
  if (kh > s.h || kw > s.w) {
    shape_error("max_pool2d: kernel (" + std::to_string(kh) + "," + std::to_string(kw) +
                ") does not fit input " + s.str());
  }
}

}  // namespace

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, int kh, int kw, int sh, int sw) {
  check_pool_args(input.shape, kh, kw, sh, sw);
  const std::int64_t n = input.shape.n, c = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t oh = (ih - kh) / sh + 1;
  const std::int64_t ow = (iw - kw) / sw + 1;
  Tensor<T> out(Shape{n, c, oh, ow});
  if (out.empty()) return out;

  parallel_for(n * c, [&](std::int64_t nc) {
    const T* xc = input.data.data() + nc * ih * iw;
    T* yc = out.data.data() + nc * oh * ow;
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        T best = std::numeric_limits<T>::lowest();
        for (int ky = 0; ky < kh; ++ky) {
          const T* row = xc + (yo * sh + ky) * iw + xo * sw;
          for (int kx = 0; kx < kw; ++kx) {
            if (row[kx] > best) best = row[kx];
          }
        }
        yc[yo * ow + xo] = best;
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Tensor<T>& input, int kh, int kw, int sh, int sw,
                              const Tensor<T>& grad_out) {
  check_pool_args(input.shape, kh, kw, sh, sw);
  const std::int64_t n = input.shape.n, c = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t oh = (ih - kh) / sh + 1;
  const std::int64_t ow = (iw - kw) / sw + 1;
  if (!(grad_out.shape == Shape{n, c, oh, ow})) {
    shape_error("max_pool2d_backward: grad_out shape " + grad_out.shape.str() + " != " +
                Shape{n, c, oh, ow}.str());
  }
  Tensor<T> gx(input.shape);
  parallel_for(n * c, [&](std::int64_t nc) {
    const T* xc = input.data.data() + nc * ih * iw;
    const T* gc = grad_out.data.data() + nc * oh * ow;
    T* gxc = gx.data.data() + nc * ih * iw;
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        // first occurrence in row-major window order wins on ties
        T best = std::numeric_limits<T>::lowest();
        std::int64_t best_idx = -1;
        for (int ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = yo * sh + ky;
          for (int kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = xo * sw + kx;
            const T v = xc[iy * iw + ix];
            if (v > best) {
              best = v;
              best_idx = iy * iw + ix;
            }
          }
        }
        gxc[best_idx] += gc[yo * ow + xo];
      }
    }
  });
  return gx;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  if (input.shape.h * input.shape.w < 1) {
    shape_error("global_avg_pool: zero spatial extent " + input.shape.str());
  }
  const std::int64_t n = input.shape.n, c = input.shape.c;
  const std::int64_t hw = input.shape.h * input.shape.w;
  Tensor<T> out(Shape{n, c, 1, 1});
  parallel_for(n * c, [&](std::int64_t nc) {
    const T* xc = input.data.data() + nc * hw;
    T acc{};
    for (std::int64_t i = 0; i < hw; ++i) acc += xc[i];
    out.data[static_cast<std::size_t>(nc)] = acc / static_cast<T>(hw);
  });
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  if (!(grad_out.shape == Shape{input_shape.n, input_shape.c, 1, 1})) {
    shape_error("global_avg_pool_backward: grad_out shape " + grad_out.shape.str());
  }
  const std::int64_t hw = input_shape.h * input_shape.w;
  Tensor<T> gx(input_shape);
  parallel_for(input_shape.n * input_shape.c, [&](std::int64_t nc) {
    const T g = grad_out.data[static_cast<std::size_t>(nc)] / static_cast<T>(hw);
    T* gxc = gx.data.data() + nc * hw;
    for (std::int64_t i = 0; i < hw; ++i) gxc[i] = g;
  });
  return gx;
}

namespace {

// Half-pixel source coordinate and clamped neighbour pair for one output index.
struct LinTap {
  std::int64_t lo, hi;
  double frac;
};

LinTap linear_tap(std::int64_t out_idx, std::int64_t in_size, std::int64_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  double src = (static_cast<double>(out_idx) + 0.5) * scale - 0.5;
  const double floor_src = std::floor(src);
  std::int64_t lo = static_cast<std::int64_t>(floor_src);
  double frac = src - floor_src;
  std::int64_t hi = lo + 1;
  lo = std::clamp<std::int64_t>(lo, 0, in_size - 1);
  hi = std::clamp<std::int64_t>(hi, 0, in_size - 1);
  return {lo, hi, frac};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) {
    shape_error("bilinear_resize: output extent must be positive");
  }
  if (input.shape.h < 1 || input.shape.w < 1) {
    shape_error("bilinear_resize: zero spatial input " + input.shape.str());
  }
  const std::int64_t n = input.shape.n, c = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  Tensor<T> out(Shape{n, c, out_h, out_w});
  if (out.empty()) return out;

  std::vector<LinTap> ytaps(static_cast<std::size_t>(out_h));
  std::vector<LinTap> xtaps(static_cast<std::size_t>(out_w));
  for (std::int64_t y = 0; y < out_h; ++y) ytaps[static_cast<std::size_t>(y)] = linear_tap(y, ih, out_h);
  for (std::int64_t x = 0; x < out_w; ++x) xtaps[static_cast<std::size_t>(x)] = linear_tap(x, iw, out_w);

  parallel_for(n * c, [&](std::int64_t nc) {
    const T* xc = input.data.data() + nc * ih * iw;
    T* yc = out.data.data() + nc * out_h * out_w;
    for (std::int64_t yo = 0; yo < out_h; ++yo) {
      const LinTap& ty = ytaps[static_cast<std::size_t>(yo)];
      for (std::int64_t xo = 0; xo < out_w; ++xo) {
        const LinTap& tx = xtaps[static_cast<std::size_t>(xo)];
        const double fy = ty.frac, fx = tx.frac;
        const double v = (1.0 - fy) * (1.0 - fx) * static_cast<double>(xc[ty.lo * iw + tx.lo]) +
                         (1.0 - fy) * fx * static_cast<double>(xc[ty.lo * iw + tx.hi]) +
                         fy * (1.0 - fx) * static_cast<double>(xc[ty.hi * iw + tx.lo]) +
                         fy * fx * static_cast<double>(xc[ty.hi * iw + tx.hi]);
        yc[yo * out_w + xo] = static_cast<T>(v);
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  if (grad_out.shape.n != input_shape.n || grad_out.shape.c != input_shape.c) {
    shape_error("bilinear_resize_backward: batch/channel mismatch");
  }
  const std::int64_t ih = input_shape.h, iw = input_shape.w;
  const std::int64_t oh = grad_out.shape.h, ow = grad_out.shape.w;
  Tensor<T> gx(input_shape);
  if (gx.empty() || grad_out.empty()) return gx;

  std::vector<LinTap> ytaps(static_cast<std::size_t>(oh));
  std::vector<LinTap> xtaps(static_cast<std::size_t>(ow));
  for (std::int64_t y = 0; y < oh; ++y) ytaps[static_cast<std::size_t>(y)] = linear_tap(y, ih, oh);
  for (std::int64_t x = 0; x < ow; ++x) xtaps[static_cast<std::size_t>(x)] = linear_tap(x, iw, ow);

  parallel_for(input_shape.n * input_shape.c, [&](std::int64_t nc) {
    const T* gc = grad_out.data.data() + nc * oh * ow;
    T* gxc = gx.data.data() + nc * ih * iw;
    for (std::int64_t yo = 0; yo < oh; ++yo) {
      const LinTap& ty = ytaps[static_cast<std::size_t>(yo)];
      for (std::int64_t xo = 0; xo < ow; ++xo) {
        const LinTap& tx = xtaps[static_cast<std::size_t>(xo)];
        const double g = static_cast<double>(gc[yo * ow + xo]);
        const double fy = ty.frac, fx = tx.frac;
        gxc[ty.lo * iw + tx.lo] += static_cast<T>((1.0 - fy) * (1.0 - fx) * g);
        gxc[ty.lo * iw + tx.hi] += static_cast<T>((1.0 - fy) * fx * g);
        gxc[ty.hi * iw + tx.lo] += static_cast<T>(fy * (1.0 - fx) * g);
        gxc[ty.hi * iw + tx.hi] += static_cast<T>(fy * fx * g);
      }
    }
  });
  return gx;
}

template <typename T>
Tensor<T> nearest_upsample2x(const Tensor<T>& input) {
  const std::int64_t n = input.shape.n, c = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  Tensor<T> out(Shape{n, c, ih * 2, iw * 2});
  parallel_for(n * c, [&](std::int64_t nc) {
    const T* xc = input.data.data() + nc * ih * iw;
    T* yc = out.data.data() + nc * ih * 2 * iw * 2;
    for (std::int64_t yo = 0; yo < ih * 2; ++yo) {
      const T* xrow = xc + (yo / 2) * iw;
      T* yrow = yc + yo * iw * 2;
      for (std::int64_t xo = 0; xo < iw * 2; ++xo) yrow[xo] = xrow[xo / 2];
    }
  });
  return out;
}

template <typename T>
Tensor<T> nearest_upsample2x_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  if (!(grad_out.shape == Shape{input_shape.n, input_shape.c, input_shape.h * 2, input_shape.w * 2})) {
    shape_error("nearest_upsample2x_backward: grad_out shape " + grad_out.shape.str());
  }
  const std::int64_t ih = input_shape.h, iw = input_shape.w;
  Tensor<T> gx(input_shape);
  parallel_for(input_shape.n * input_shape.c, [&](std::int64_t nc) {
    const T* gc = grad_out.data.data() + nc * ih * 2 * iw * 2;
    T* gxc = gx.data.data() + nc * ih * iw;
    for (std::int64_t yo = 0; yo < ih * 2; ++yo) {
      const T* grow = gc + yo * iw * 2;
      T* gxrow = gxc + (yo / 2) * iw;
      for (std::int64_t xo = 0; xo < iw * 2; ++xo) gxrow[xo / 2] += grow[xo];
    }
  });
  return gx;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) shape_error("concat_channels: no inputs");
  const Shape first = inputs[0]->shape;
  std::int64_t total_c = 0;
  for (const Tensor<T>* t : inputs) {
    if (t->shape.n != first.n || t->shape.h != first.h || t->shape.w != first.w) {
      shape_error("concat_channels: spatial/batch mismatch between " + first.str() + " and " +
                  t->shape.str());
    }
    total_c += t->shape.c;
  }
  Tensor<T> out(Shape{first.n, total_c, first.h, first.w});
  const std::int64_t hw = first.h * first.w;
  for (std::int64_t in = 0; in < first.n; ++in) {
    std::int64_t c_off = 0;
    for (const Tensor<T>* t : inputs) {
      const std::int64_t tc = t->shape.c;
      std::copy_n(t->data.data() + in * tc * hw, tc * hw,
                  out.data.data() + (in * total_c + c_off) * hw);
      c_off += tc;
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t c_begin, std::int64_t c_end) {
  if (c_begin < 0 || c_end < c_begin || c_end > x.shape.c) {
    shape_error("slice_channels: range [" + std::to_string(c_begin) + ", " +
                std::to_string(c_end) + ") out of " + std::to_string(x.shape.c));
  }
  const std::int64_t sc = c_end - c_begin;
  const std::int64_t hw = x.shape.h * x.shape.w;
  Tensor<T> out(Shape{x.shape.n, sc, x.shape.h, x.shape.w});
  for (std::int64_t in = 0; in < x.shape.n; ++in) {
    std::copy_n(x.data.data() + (in * x.shape.c + c_begin) * hw, sc * hw,
                out.data.data() + in * sc * hw);
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = x.data[i] > T{} ? x.data[i] : T{};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (!x.same_shape(grad_out)) shape_error("relu_backward: shape mismatch");
  Tensor<T> gx(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) gx.data[i] = x.data[i] > T{} ? grad_out.data[i] : T{};
  return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    out.data[i] = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-x.data[i]));
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  if (!y.same_shape(grad_out)) shape_error("sigmoid_backward: shape mismatch");
  Tensor<T> gx(y.shape);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    gx.data[i] = grad_out.data[i] * y.data[i] * (static_cast<T>(1) - y.data[i]);
  }
  return gx;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) {
    shape_error("add: shape mismatch " + a.shape.str() + " vs " + b.shape.str());
  }
  Tensor<T> out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
Tensor<T> mul_attention(const Tensor<T>& v, const Tensor<T>& attn) {
  if (attn.shape.c != 1 || attn.shape.n != v.shape.n || attn.shape.h != v.shape.h ||
      attn.shape.w != v.shape.w) {
    shape_error("mul_attention: attention map " + attn.shape.str() +
                " does not broadcast over " + v.shape.str());
  }
  const std::int64_t hw = v.shape.h * v.shape.w;
  Tensor<T> out(v.shape);
  parallel_for(v.shape.n * v.shape.c, [&](std::int64_t nc) {
    const std::int64_t in = nc / v.shape.c;
    const T* vc = v.data.data() + nc * hw;
    const T* ac = attn.data.data() + in * hw;
    T* yc = out.data.data() + nc * hw;
    for (std::int64_t i = 0; i < hw; ++i) yc[i] = vc[i] * ac[i];
  });
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_attention_backward(const Tensor<T>& v, const Tensor<T>& attn,
                                                       const Tensor<T>& grad_out) {
  if (!grad_out.same_shape(v)) shape_error("mul_attention_backward: grad_out shape mismatch");
  const std::int64_t hw = v.shape.h * v.shape.w;
  Tensor<T> gv(v.shape);
  Tensor<T> ga(attn.shape);
  parallel_for(v.shape.n * v.shape.c, [&](std::int64_t nc) {
    const std::int64_t in = nc / v.shape.c;
    const T* ac = attn.data.data() + in * hw;
    const T* gc = grad_out.data.data() + nc * hw;
    T* gvc = gv.data.data() + nc * hw;
    for (std::int64_t i = 0; i < hw; ++i) gvc[i] = gc[i] * ac[i];
  });
  for (std::int64_t in = 0; in < v.shape.n; ++in) {
    T* gac = ga.data.data() + in * hw;
    for (std::int64_t c = 0; c < v.shape.c; ++c) {
      const T* vc = v.data.data() + (in * v.shape.c + c) * hw;
      const T* gc = grad_out.data.data() + (in * v.shape.c + c) * hw;
      for (std::int64_t i = 0; i < hw; ++i) gac[i] += gc[i] * vc[i];
    }
  }
  return {std::move(gv), std::move(ga)};
}

template <typename T>
Tensor<T> affinity_matrix(const Tensor<T>& q, const Tensor<T>& k) {
  if (!q.same_shape(k)) {
    shape_error("affinity_matrix: q " + q.shape.str() + " != k " + k.shape.str());
  }
  const std::int64_t n = q.shape.n, c = q.shape.c;
  const std::int64_t h = q.shape.h, w = q.shape.w;
  const std::int64_t N = h * w;
  Tensor<T> out(Shape{n, N, h, w});
  if (out.empty()) return out;
  // out[in, i, j] = sum_c q[in, c, i] * k[in, c, j] over flattened positions
  parallel_for(n * N, [&](std::int64_t ni) {
    const std::int64_t in = ni / N;
    const std::int64_t i = ni % N;
    const T* qb = q.data.data() + in * c * N;
    const T* kb = k.data.data() + in * c * N;
    T* yrow = out.data.data() + (in * N + i) * N;
    for (std::int64_t j = 0; j < N; ++j) yrow[j] = T{};
    for (std::int64_t cc = 0; cc < c; ++cc) {
      const T qv = qb[cc * N + i];
      const T* krow = kb + cc * N;
      for (std::int64_t j = 0; j < N; ++j) yrow[j] += qv * krow[j];
    }
  });
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> affinity_backward(const Tensor<T>& q, const Tensor<T>& k,
                                                  const Tensor<T>& grad_out) {
  const std::int64_t n = q.shape.n, c = q.shape.c;
  const std::int64_t N = q.shape.h * q.shape.w;
  if (!(grad_out.shape == Shape{n, N, q.shape.h, q.shape.w})) {
    shape_error("affinity_backward: grad_out shape " + grad_out.shape.str());
  }
  Tensor<T> gq(q.shape);
  Tensor<T> gk(k.shape);
  parallel_for(n * c, [&](std::int64_t ncc) {
    const std::int64_t in = ncc / c;
    const std::int64_t cc = ncc % c;
    const T* qrow = q.data.data() + (in * c + cc) * N;
    const T* krow = k.data.data() + (in * c + cc) * N;
    const T* gbase = grad_out.data.data() + in * N * N;
    T* gqrow = gq.data.data() + (in * c + cc) * N;
    T* gkrow = gk.data.data() + (in * c + cc) * N;
    for (std::int64_t i = 0; i < N; ++i) {
      const T* grow = gbase + i * N;
      T acc{};
      for (std::int64_t j = 0; j < N; ++j) acc += grow[j] * krow[j];
      gqrow[i] = acc;
    }
    for (std::int64_t i = 0; i < N; ++i) {
      const T qv = qrow[i];
      const T* grow = gbase + i * N;
      for (std::int64_t j = 0; j < N; ++j) gkrow[j] += qv * grow[j];
    }
  });
  return {std::move(gq), std::move(gk)};
}

template <typename T>
Tensor<T> attn_collapse(const Tensor<T>& r) {
  const std::int64_t n = r.shape.n, N = r.shape.c;
  const std::int64_t hw = r.shape.h * r.shape.w;
  if (N < 1) shape_error("attn_collapse: need at least one affinity slice");
  Tensor<T> out(Shape{n, 1, r.shape.h, r.shape.w});
  parallel_for(n * hw, [&](std::int64_t nj) {
    const std::int64_t in = nj / hw;
    const std::int64_t j = nj % hw;
    const T* base = r.data.data() + in * N * hw;
    T acc{};
    for (std::int64_t i = 0; i < N; ++i) {
      const T v = base[i * hw + j];
      acc += static_cast<T>(1) / (static_cast<T>(1) + std::exp(-v));
    }
    out.data[static_cast<std::size_t>(in * hw + j)] = acc / static_cast<T>(N);
  });
  return out;
}

template <typename T>
Tensor<T> attn_collapse_backward(const Tensor<T>& r, const Tensor<T>& grad_out) {
  const std::int64_t n = r.shape.n, N = r.shape.c;
  const std::int64_t hw = r.shape.h * r.shape.w;
  if (!(grad_out.shape == Shape{n, 1, r.shape.h, r.shape.w})) {
    shape_error("attn_collapse_backward: grad_out shape " + grad_out.shape.str());
  }
  Tensor<T> gr(r.shape);
  parallel_for(n * N, [&](std::int64_t ni) {
    const std::int64_t in = ni / N;
    const std::int64_t i = ni % N;
    const T* rc = r.data.data() + (in * N + i) * hw;
    const T* gc = grad_out.data.data() + in * hw;
    T* grc = gr.data.data() + (in * N + i) * hw;
    for (std::int64_t j = 0; j < hw; ++j) {
      const T s = static_cast<T>(1) / (static_cast<T>(1) + std::exp(-rc[j]));
      grc[j] = gc[j] * s * (static_cast<T>(1) - s) / static_cast<T>(N);
    }
  });
  return gr;
}

#define ACFPN_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                               const ConvSpec&);                                                  \
  template GradPair<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                          const ConvSpec&, const Tensor<T>&);                     \
  template Tensor<T> max_pool2d<T>(const Tensor<T>&, int, int, int, int);                        \
  template Tensor<T> max_pool2d_backward<T>(const Tensor<T>&, int, int, int, int,                \
                                            const Tensor<T>&);                                   \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                                       \
  template Tensor<T> global_avg_pool_backward<T>(const Shape&, const Tensor<T>&);                \
  template Tensor<T> bilinear_resize<T>(const Tensor<T>&, std::int64_t, std::int64_t);           \
  template Tensor<T> bilinear_resize_backward<T>(const Shape&, const Tensor<T>&);                \
  template Tensor<T> nearest_upsample2x<T>(const Tensor<T>&);                                    \
  template Tensor<T> nearest_upsample2x_backward<T>(const Shape&, const Tensor<T>&);             \
  template Tensor<T> concat_channels<T>(const std::vector<const Tensor<T>*>&);                   \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t);            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                               \
  template Tensor<T> sigmoid_backward<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul_attention<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template std::pair<Tensor<T>, Tensor<T>> mul_attention_backward<T>(                            \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> affinity_matrix<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template std::pair<Tensor<T>, Tensor<T>> affinity_backward<T>(const Tensor<T>&,                \
                                                                const Tensor<T>&,                \
                                                                const Tensor<T>&);               \
  template Tensor<T> attn_collapse<T>(const Tensor<T>&);                                         \
  template Tensor<T> attn_collapse_backward<T>(const Tensor<T>&, const Tensor<T>&);

ACFPN_INSTANTIATE_OPS(float)
ACFPN_INSTANTIATE_OPS(double)

#undef ACFPN_INSTANTIATE_OPS

}  // namespace acfpn
