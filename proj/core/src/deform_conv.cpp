#include "acfpn/deform_conv.hpp"

#include <cmath>
#include <string>

#include "acfpn/ops.hpp"
#include "acfpn/parallel.hpp"

namespace acfpn {

namespace {

template <typename T>
struct Corner {
  std::int64_t y0, x0, y1, x1;
  double fy, fx;
  bool y_integer, x_integer;
};

template <typename T>
Corner<T> corner_of(double y, double x) {
  const double fy0 = std::floor(y);
  const double fx0 = std::floor(x);
  Corner<T> c;
  c.y0 = static_cast<std::int64_t>(fy0);
  c.x0 = static_cast<std::int64_t>(fx0);
  c.y1 = c.y0 + 1;
  c.x1 = c.x0 + 1;
  c.fy = y - fy0;
  c.fx = x - fx0;
  c.y_integer = (c.fy == 0.0);
  c.x_integer = (c.fx == 0.0);
  return c;
}

template <typename T>
inline T plane_at(const T* plane, std::int64_t h, std::int64_t w, std::int64_t y, std::int64_t x) {
  if (y < 0 || y >= h || x < 0 || x >= w) return T{};
  return plane[y * w + x];
}

template <typename T>
inline T sample_plane(const T* plane, std::int64_t h, std::int64_t w, const Corner<T>& c) {
  const T v00 = plane_at(plane, h, w, c.y0, c.x0);
  const T v01 = plane_at(plane, h, w, c.y0, c.x1);
  const T v10 = plane_at(plane, h, w, c.y1, c.x0);
  const T v11 = plane_at(plane, h, w, c.y1, c.x1);
  const T fy = static_cast<T>(c.fy), fx = static_cast<T>(c.fx);
  const T one = static_cast<T>(1);
  return (one - fy) * (one - fx) * v00 + (one - fy) * fx * v01 + fy * (one - fx) * v10 +
         fy * fx * v11;
}

}  // namespace

template <typename T>
void DeformConv2d<T>::validate(std::int64_t input_channels) const {
  spec.validate();
  const std::int64_t expected_offset_c = 2LL * spec.kh * spec.kw;
  if (weight.shape.h != spec.kh || weight.shape.w != spec.kw) {
    shape_error("deform_conv2d: weight shape " + weight.shape.str() + " does not match " +
                spec.str());
  }
  if (weight.shape.c != input_channels) {
    shape_error("deform_conv2d: weight input channels " + std::to_string(weight.shape.c) +
                " != input channels " + std::to_string(input_channels));
  }
  if (offset_weight.shape.n != expected_offset_c) {
    shape_error("deform_conv2d: offset branch must emit " + std::to_string(expected_offset_c) +
                " channels, got " + std::to_string(offset_weight.shape.n));
  }
  if (offset_weight.shape.c != input_channels || offset_weight.shape.h != spec.kh ||
      offset_weight.shape.w != spec.kw) {
    shape_error("deform_conv2d: offset weight shape " + offset_weight.shape.str() +
                " must share the main branch geometry");
  }
}

template <typename T>
Tensor<T> deform_conv2d(const Tensor<T>& input, const DeformConv2d<T>& layer) {
  layer.validate(input.shape.c);
  const ConvSpec& spec = layer.spec;
  const std::int64_t n = input.shape.n, ci = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t co = layer.weight.shape.n;
  const std::int64_t oh = spec.out_h(ih), ow = spec.out_w(iw);
  const std::int64_t taps = static_cast<std::int64_t>(spec.kh) * spec.kw;
  const std::int64_t positions = oh * ow;

  const Tensor<T> offsets = conv2d(input, layer.offset_weight, layer.offset_bias, spec);

  Tensor<T> out(Shape{n, co, oh, ow});
  if (out.empty()) return out;

  std::vector<T> cols(static_cast<std::size_t>(ci * taps * positions));
  for (std::int64_t in = 0; in < n; ++in) {
    const T* off = offsets.data.data() + in * 2 * taps * positions;
    // one sampled column per (channel, tap); shared across output channels
    parallel_for(ci, [&](std::int64_t c) {
      const T* plane = input.data.data() + (in * ci + c) * ih * iw;
      for (std::int64_t t = 0; t < taps; ++t) {
        const int ky = static_cast<int>(t / spec.kw);
        const int kx = static_cast<int>(t % spec.kw);
        T* col = cols.data() + (c * taps + t) * positions;
        const T* dy = off + (2 * t) * positions;
        const T* dx = off + (2 * t + 1) * positions;
        for (std::int64_t yo = 0; yo < oh; ++yo) {
          for (std::int64_t xo = 0; xo < ow; ++xo) {
            const std::int64_t p = yo * ow + xo;
            const double sy = static_cast<double>(yo * spec.sh - spec.ph + ky * spec.dh) +
                              static_cast<double>(dy[p]);
            const double sx = static_cast<double>(xo * spec.sw - spec.pw + kx * spec.dw) +
                              static_cast<double>(dx[p]);
            col[p] = sample_plane(plane, ih, iw, corner_of<T>(sy, sx));
          }
        }
      }
    });

    const T* b = layer.bias.empty() ? nullptr : layer.bias.data.data();
    parallel_for(co, [&](std::int64_t oc) {
      const T* wrow = layer.weight.data.data() + oc * ci * taps;
      T* yrow = out.data.data() + (in * co + oc) * positions;
      const T bias_val = b ? b[oc] : T{};
      for (std::int64_t p = 0; p < positions; ++p) yrow[p] = bias_val;
      for (std::int64_t k = 0; k < ci * taps; ++k) {
        const T wv = wrow[k];
        const T* col = cols.data() + k * positions;
        for (std::int64_t p = 0; p < positions; ++p) yrow[p] += wv * col[p];
      }
    });
  }
  return out;
}

template <typename T>
GradPair<T> deform_conv2d_backward(const Tensor<T>& input, const DeformConv2d<T>& layer,
                                   const Tensor<T>& grad_out) {
  layer.validate(input.shape.c);
  const ConvSpec& spec = layer.spec;
  const std::int64_t n = input.shape.n, ci = input.shape.c;
  const std::int64_t ih = input.shape.h, iw = input.shape.w;
  const std::int64_t co = layer.weight.shape.n;
  const std::int64_t oh = spec.out_h(ih), ow = spec.out_w(iw);
  const std::int64_t taps = static_cast<std::int64_t>(spec.kh) * spec.kw;
  const std::int64_t positions = oh * ow;
  if (!(grad_out.shape == Shape{n, co, oh, ow})) {
    shape_error("deform_conv2d_backward: grad_out shape " + grad_out.shape.str() + " != " +
                Shape{n, co, oh, ow}.str());
  }

  const Tensor<T> offsets = conv2d(input, layer.offset_weight, layer.offset_bias, spec);

  GradPair<T> result;
  result.value = Tensor<T>(Shape{n, co, oh, ow});
  Tensor<T> gx(input.shape);
  Tensor<T> gw(layer.weight.shape);
  Tensor<T> gb(layer.bias.empty() ? Shape{0, 0, 0, 0} : layer.bias.shape);
  Tensor<T> goff(offsets.shape);

  std::vector<T> cols(static_cast<std::size_t>(ci * taps * positions));
  std::vector<T> gcols(static_cast<std::size_t>(ci * taps * positions));

  for (std::int64_t in = 0; in < n; ++in) {
    const T* off = offsets.data.data() + in * 2 * taps * positions;
    const T* go = grad_out.data.data() + in * co * positions;

    parallel_for(ci, [&](std::int64_t c) {
      const T* plane = input.data.data() + (in * ci + c) * ih * iw;
      for (std::int64_t t = 0; t < taps; ++t) {
        const int ky = static_cast<int>(t / spec.kw);
        const int kx = static_cast<int>(t % spec.kw);
        T* col = cols.data() + (c * taps + t) * positions;
        const T* dy = off + (2 * t) * positions;
        const T* dx = off + (2 * t + 1) * positions;
        for (std::int64_t p = 0; p < positions; ++p) {
          const std::int64_t yo = p / ow, xo = p % ow;
          const double sy =
              static_cast<double>(yo * spec.sh - spec.ph + ky * spec.dh) + static_cast<double>(dy[p]);
          const double sx =
              static_cast<double>(xo * spec.sw - spec.pw + kx * spec.dw) + static_cast<double>(dx[p]);
          col[p] = sample_plane(plane, ih, iw, corner_of<T>(sy, sx));
        }
      }
    });

    // forward value from the sampled columns
    const T* b = layer.bias.empty() ? nullptr : layer.bias.data.data();
    parallel_for(co, [&](std::int64_t oc) {
      const T* wrow = layer.weight.data.data() + oc * ci * taps;
      T* yrow = result.value.data.data() + (in * co + oc) * positions;
      const T bias_val = b ? b[oc] : T{};
      for (std::int64_t p = 0; p < positions; ++p) yrow[p] = bias_val;
      for (std::int64_t k = 0; k < ci * taps; ++k) {
        const T wv = wrow[k];
        const T* col = cols.data() + k * positions;
        for (std::int64_t p = 0; p < positions; ++p) yrow[p] += wv * col[p];
      }
    });

    // gw[oc, k] += sum_p go[oc, p] * cols[k, p]; gcols[k, p] = sum_oc w[oc, k] * go[oc, p]
    parallel_for(co, [&](std::int64_t oc) {
      T* gwrow = gw.data.data() + oc * ci * taps;
      const T* grow = go + oc * positions;
      for (std::int64_t k = 0; k < ci * taps; ++k) {
        const T* col = cols.data() + k * positions;
        T acc{};
        for (std::int64_t p = 0; p < positions; ++p) acc += grow[p] * col[p];
        gwrow[k] += acc;
      }
    });
    parallel_for(ci * taps, [&](std::int64_t k) {
      T* gcol = gcols.data() + k * positions;
      for (std::int64_t p = 0; p < positions; ++p) gcol[p] = T{};
      for (std::int64_t oc = 0; oc < co; ++oc) {
        const T wv = layer.weight.data[static_cast<std::size_t>(oc * ci * taps + k)];
        const T* grow = go + oc * positions;
        for (std::int64_t p = 0; p < positions; ++p) gcol[p] += wv * grow[p];
      }
    });

    if (!gb.empty()) {
      for (std::int64_t oc = 0; oc < co; ++oc) {
        const T* grow = go + oc * positions;
        T acc{};
        for (std::int64_t p = 0; p < positions; ++p) acc += grow[p];
        gb.data[static_cast<std::size_t>(oc)] += acc;
      }
    }

    // scatter sample grads into the input and accumulate offset-map grads
    T* goff_n = goff.data.data() + in * 2 * taps * positions;
    parallel_for(taps, [&](std::int64_t t) {
      const int ky = static_cast<int>(t / spec.kw);
      const int kx = static_cast<int>(t % spec.kw);
      const T* dy = off + (2 * t) * positions;
      const T* dx = off + (2 * t + 1) * positions;
      T* gdy = goff_n + (2 * t) * positions;
      T* gdx = goff_n + (2 * t + 1) * positions;
      for (std::int64_t p = 0; p < positions; ++p) {
        const std::int64_t yo = p / ow, xo = p % ow;
        const double sy =
            static_cast<double>(yo * spec.sh - spec.ph + ky * spec.dh) + static_cast<double>(dy[p]);
        const double sx =
            static_cast<double>(xo * spec.sw - spec.pw + kx * spec.dw) + static_cast<double>(dx[p]);
        const Corner<T> cr = corner_of<T>(sy, sx);
        const T fy = static_cast<T>(cr.fy), fx = static_cast<T>(cr.fx);
        const T one = static_cast<T>(1);
        T acc_y{}, acc_x{};
        for (std::int64_t c = 0; c < ci; ++c) {
          const T g = gcols[static_cast<std::size_t>((c * taps + t) * positions + p)];
          if (g == T{}) continue;
          const T* plane = input.data.data() + (in * ci + c) * ih * iw;
          const T v00 = plane_at(plane, ih, iw, cr.y0, cr.x0);
          const T v01 = plane_at(plane, ih, iw, cr.y0, cr.x1);
          const T v10 = plane_at(plane, ih, iw, cr.y1, cr.x0);
          const T v11 = plane_at(plane, ih, iw, cr.y1, cr.x1);
          if (!cr.y_integer) {
            acc_y += g * (-(one - fx) * v00 - fx * v01 + (one - fx) * v10 + fx * v11);
          }
          if (!cr.x_integer) {
            acc_x += g * (-(one - fy) * v00 + (one - fy) * v01 - fy * v10 + fy * v11);
          }
        }
        gdy[p] = acc_y;
        gdx[p] = acc_x;
      }
    });

    // input grads through the sampling corners; sequential scatter per batch
    for (std::int64_t c = 0; c < ci; ++c) {
      T* gplane = gx.data.data() + (in * ci + c) * ih * iw;
      for (std::int64_t t = 0; t < taps; ++t) {
        const int ky = static_cast<int>(t / spec.kw);
        const int kx = static_cast<int>(t % spec.kw);
        const T* dy = off + (2 * t) * positions;
        const T* dx = off + (2 * t + 1) * positions;
        const T* gcol = gcols.data() + (c * taps + t) * positions;
        for (std::int64_t p = 0; p < positions; ++p) {
          const T g = gcol[p];
          if (g == T{}) continue;
          const std::int64_t yo = p / ow, xo = p % ow;
          const double sy = static_cast<double>(yo * spec.sh - spec.ph + ky * spec.dh) +
                            static_cast<double>(dy[p]);
          const double sx = static_cast<double>(xo * spec.sw - spec.pw + kx * spec.dw) +
                            static_cast<double>(dx[p]);
          const Corner<T> cr = corner_of<T>(sy, sx);
          const T fy = static_cast<T>(cr.fy), fx = static_cast<T>(cr.fx);
          const T one = static_cast<T>(1);
          auto scatter = [&](std::int64_t y, std::int64_t x, T wgt) {
            if (y < 0 || y >= ih || x < 0 || x >= iw || wgt == T{}) return;
            gplane[y * iw + x] += g * wgt;
          };
          scatter(cr.y0, cr.x0, (one - fy) * (one - fx));
          scatter(cr.y0, cr.x1, (one - fy) * fx);
          scatter(cr.y1, cr.x0, fy * (one - fx));
          scatter(cr.y1, cr.x1, fy * fx);
        }
      }
    }
  }

  // offsets come from the sibling convolution: fold their grads back into
  // the offset parameters and the input.
  GradPair<T> off_grads =
      conv2d_backward(input, layer.offset_weight, layer.offset_bias, spec, goff);
  Tensor<T>& gx_off = off_grads.grads.at("input");
  for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gx_off.data[i];

  result.grads["input"] = std::move(gx);
  result.grads["weight"] = std::move(gw);
  if (!gb.empty()) result.grads["bias"] = std::move(gb);
  result.grads["offset_weight"] = std::move(off_grads.grads.at("weight"));
  if (off_grads.grads.count("bias")) {
    result.grads["offset_bias"] = std::move(off_grads.grads.at("bias"));
  }
  return result;
}

template <typename T>
std::vector<T> bilinear_sample(const Tensor<T>& map, double y, double x) {
  if (map.shape.n != 1) shape_error("bilinear_sample: expected a single (c, h, w) map");
  const std::int64_t c = map.shape.c, h = map.shape.h, w = map.shape.w;
  const Corner<T> cr = corner_of<T>(y, x);
  std::vector<T> out(static_cast<std::size_t>(c));
  for (std::int64_t cc = 0; cc < c; ++cc) {
    out[static_cast<std::size_t>(cc)] = sample_plane(map.data.data() + cc * h * w, h, w, cr);
  }
  return out;
}

template struct DeformConv2d<float>;
template struct DeformConv2d<double>;

#define ACFPN_INSTANTIATE_DEFORM(T)                                                          \
  template Tensor<T> deform_conv2d<T>(const Tensor<T>&, const DeformConv2d<T>&);             \
  template GradPair<T> deform_conv2d_backward<T>(const Tensor<T>&, const DeformConv2d<T>&,   \
                                                 const Tensor<T>&);                          \
  template std::vector<T> bilinear_sample<T>(const Tensor<T>&, double, double);

ACFPN_INSTANTIATE_DEFORM(float)
ACFPN_INSTANTIATE_DEFORM(double)

#undef ACFPN_INSTANTIATE_DEFORM

}  // namespace acfpn
