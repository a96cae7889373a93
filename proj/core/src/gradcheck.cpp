#include "acfpn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "acfpn/deform_conv.hpp"
#include "acfpn/ops.hpp"
#include "acfpn/pyramid.hpp"

namespace acfpn {

double rel_error(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

namespace {

double loss_of(const TensorD& out) {
  double acc = 0.0;
  for (double v : out.data) acc += v;
  return acc;
}

std::uint64_t name_seed(const std::string& name) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : name) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

TensorD rand_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  TensorD t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

// magnitudes bounded away from zero; keeps finite differences off the kink
TensorD rand_signed_away_from_zero(Shape shape, std::uint64_t seed, double lo, double hi) {
  TensorD t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  for (double& v : t.data) v = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

// Sampled checks look at the largest-magnitude analytic coordinates: those
// carry the signal, and dividing finite-difference noise by a near-zero
// gradient would only measure the noise.
std::vector<std::int64_t> sample_indices(std::int64_t size, int max_coords,
                                         const TensorD* analytic) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(size));
  for (std::int64_t i = 0; i < size; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (max_coords <= 0 || size <= max_coords) return idx;
  if (analytic) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
      return std::fabs(analytic->data[static_cast<std::size_t>(a)]) >
             std::fabs(analytic->data[static_cast<std::size_t>(b)]);
    });
  }
  idx.resize(static_cast<std::size_t>(max_coords));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckOutcome grad_check(const GradCheckOp& op, const CheckInputs& inputs, double epsilon,
                            int max_coords_per_tensor) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw std::invalid_argument("grad_check: epsilon must lie in [1e-7, 1e-4]");
  }
  const CheckInputs analytic = op.backward(inputs);
  for (const auto& [slot, grad] : analytic) {
    auto it = inputs.find(slot);
    if (it != inputs.end() && !(grad.shape == it->second.shape)) {
      shape_error("grad_check: grad for slot '" + slot + "' has shape " + grad.shape.str() +
                  ", input is " + it->second.shape.str());
    }
  }

  CheckInputs work = inputs;
  GradCheckOutcome outcome;
  for (auto& [slot, tensor] : work) {
    const TensorD* grad = nullptr;
    if (auto it = analytic.find(slot); it != analytic.end()) grad = &it->second;
    const std::vector<std::int64_t> coords =
        sample_indices(tensor.size(), max_coords_per_tensor, grad);
    for (std::int64_t i : coords) {
      double& v = tensor.data[static_cast<std::size_t>(i)];
      const double original = v;
      v = original + epsilon;
      const double loss_hi = loss_of(op.forward(work));
      v = original - epsilon;
      const double loss_lo = loss_of(op.forward(work));
      v = original;
      const double fd = (loss_hi - loss_lo) / (2.0 * epsilon);
      const double an = grad ? grad->data[static_cast<std::size_t>(i)] : 0.0;
      const double err = rel_error(an, fd);
      if (err > outcome.max_rel_err) {
        outcome.max_rel_err = err;
        outcome.worst_slot = slot;
        outcome.worst_index = i;
      }
    }
  }
  return outcome;
}

namespace {

GradCheckCase make_conv_case(int kernel, int stride, int pad, int dil) {
  const ConvSpec spec = ConvSpec::make(kernel, stride, pad, dil);
  std::ostringstream name;
  name << "conv2d[k" << kernel << " s" << stride << " p" << pad << " d" << dil << "]";
  GradCheckCase c;
  c.op.name = name.str();
  c.op.forward = [spec](const CheckInputs& in) {
    return conv2d(in.at("input"), in.at("weight"), in.at("bias"), spec);
  };
  c.op.backward = [spec](const CheckInputs& in) {
    const TensorD out = conv2d(in.at("input"), in.at("weight"), in.at("bias"), spec);
    GradPair<double> gp = conv2d_backward(in.at("input"), in.at("weight"), in.at("bias"), spec,
                                          TensorD::full(out.shape, 1.0));
    return gp.grads;
  };
  const std::uint64_t seed = name_seed(c.op.name);
  // positive values keep every true gradient bounded away from zero, so the
  // relative error measures the backward pass instead of difference noise
  c.make_inputs = [seed, kernel]() {
    CheckInputs in;
    in["input"] = rand_tensor(Shape{2, 3, 6, 7}, seed, 0.1, 1.0);
    in["weight"] = rand_tensor(Shape{4, 3, kernel, kernel}, seed + 1, 0.1, 0.6);
    in["bias"] = rand_tensor(Shape{1, 4, 1, 1}, seed + 2, 0.1, 0.5);
    return in;
  };
  c.tolerance = 1e-5;
  return c;
}

GradCheckCase make_deform_case() {
  const ConvSpec spec = ConvSpec::make(3, 1, 0, 2);
  GradCheckCase c;
  c.op.name = "deform_conv2d[k3 s1 p0 d2]";
  auto layer_of = [spec](const CheckInputs& in) {
    DeformConv2d<double> layer;
    layer.weight = in.at("weight");
    layer.bias = in.at("bias");
    layer.offset_weight = in.at("offset_weight");
    layer.offset_bias = in.at("offset_bias");
    layer.spec = spec;
    return layer;
  };
  c.op.forward = [layer_of](const CheckInputs& in) {
    return deform_conv2d(in.at("input"), layer_of(in));
  };
  c.op.backward = [layer_of](const CheckInputs& in) {
    const DeformConv2d<double> layer = layer_of(in);
    const TensorD out = deform_conv2d(in.at("input"), layer);
    GradPair<double> gp =
        deform_conv2d_backward(in.at("input"), layer, TensorD::full(out.shape, 1.0));
    return gp.grads;
  };
  const std::uint64_t seed = name_seed(c.op.name);
  // A monotone ramp plus noise keeps the image gradient positive, so offset
  // gradients are sums of same-sign terms. The geometry keeps every sample
  // corner inside the map, and the small random offsets keep sampling away
  // from the integer lattice, where the bilinear kernel has kinks.
  c.make_inputs = [seed]() {
    CheckInputs in;
    TensorD input = rand_tensor(Shape{1, 2, 8, 8}, seed, 0.02, 0.2);
    for (std::int64_t cc = 0; cc < 2; ++cc) {
      for (std::int64_t y = 0; y < 8; ++y) {
        for (std::int64_t x = 0; x < 8; ++x) {
          input.at(0, cc, y, x) += 0.1 + 0.09 * static_cast<double>(y + x);
        }
      }
    }
    in["input"] = std::move(input);
    in["weight"] = rand_tensor(Shape{2, 2, 3, 3}, seed + 1, 0.1, 0.6);
    in["bias"] = rand_tensor(Shape{1, 2, 1, 1}, seed + 2, 0.1, 0.5);
    in["offset_weight"] = rand_tensor(Shape{18, 2, 3, 3}, seed + 3, -0.004, 0.004);
    in["offset_bias"] = rand_tensor(Shape{1, 18, 1, 1}, seed + 4, 0.2, 0.4);
    return in;
  };
  c.tolerance = 1e-4;
  return c;
}

GradCheckCase make_cxam_case() {
  GradCheckCase c;
  c.op.name = "cxam_path";
  auto weights_of = [](const CheckInputs& in) {
    CxamWeights<double> w;
    w.wq = in.at("wq");
    w.bq = in.at("bq");
    w.wk = in.at("wk");
    w.bk = in.at("bk");
    w.wv = in.at("wv");
    w.bv = in.at("bv");
    return w;
  };
  c.op.forward = [weights_of](const CheckInputs& in) {
    const CxamOutput<double> out = cxam_forward(in.at("f"), weights_of(in));
    // loss covers every output of the module
    TensorD packed(Shape{1, 3, 1, 1});
    packed.data[0] = loss_of(out.e);
    packed.data[1] = loss_of(out.v);
    packed.data[2] = loss_of(out.attn);
    return packed;
  };
  c.op.backward = [weights_of](const CheckInputs& in) {
    const TensorD& f = in.at("f");
    const CxamOutput<double> out = cxam_forward(f, weights_of(in));
    return cxam_backward(f, weights_of(in), TensorD::full(out.e.shape, 1.0),
                         TensorD::full(out.v.shape, 1.0), TensorD::full(out.attn.shape, 1.0));
  };
  const std::uint64_t seed = name_seed(c.op.name);
  c.make_inputs = [seed]() {
    CheckInputs in;
    in["f"] = rand_tensor(Shape{1, 6, 3, 3}, seed);
    in["wq"] = rand_tensor(Shape{4, 6, 1, 1}, seed + 1, -0.5, 0.5);
    in["bq"] = rand_tensor(Shape{1, 4, 1, 1}, seed + 2, -0.5, 0.5);
    in["wk"] = rand_tensor(Shape{4, 6, 1, 1}, seed + 3, -0.5, 0.5);
    in["bk"] = rand_tensor(Shape{1, 4, 1, 1}, seed + 4, -0.5, 0.5);
    in["wv"] = rand_tensor(Shape{6, 6, 1, 1}, seed + 5, -0.5, 0.5);
    in["bv"] = rand_tensor(Shape{1, 6, 1, 1}, seed + 6, -0.5, 0.5);
    return in;
  };
  c.tolerance = 1e-5;
  return c;
}

GradCheckCase make_cnam_case() {
  GradCheckCase c;
  c.op.name = "cnam_path";
  auto weights_of = [](const CheckInputs& in) {
    CnamWeights<double> w;
    w.wp = in.at("wp");
    w.bp = in.at("bp");
    w.wz = in.at("wz");
    w.bz = in.at("bz");
    return w;
  };
  c.op.forward = [weights_of](const CheckInputs& in) {
    const CnamOutput<double> out = cnam_forward(in.at("f5"), in.at("v"), weights_of(in));
    TensorD packed(Shape{1, 2, 1, 1});
    packed.data[0] = loss_of(out.d);
    packed.data[1] = loss_of(out.attn);
    return packed;
  };
  c.op.backward = [weights_of](const CheckInputs& in) {
    const CnamOutput<double> out = cnam_forward(in.at("f5"), in.at("v"), weights_of(in));
    return cnam_backward(in.at("f5"), in.at("v"), weights_of(in),
                         TensorD::full(out.d.shape, 1.0), TensorD::full(out.attn.shape, 1.0));
  };
  const std::uint64_t seed = name_seed(c.op.name);
  c.make_inputs = [seed]() {
    CheckInputs in;
    in["f5"] = rand_tensor(Shape{1, 8, 3, 3}, seed);
    in["v"] = rand_tensor(Shape{1, 6, 3, 3}, seed + 1);
    in["wp"] = rand_tensor(Shape{4, 8, 1, 1}, seed + 2, -0.5, 0.5);
    in["bp"] = rand_tensor(Shape{1, 4, 1, 1}, seed + 3, -0.5, 0.5);
    in["wz"] = rand_tensor(Shape{4, 8, 1, 1}, seed + 4, -0.5, 0.5);
    in["bz"] = rand_tensor(Shape{1, 4, 1, 1}, seed + 5, -0.5, 0.5);
    return in;
  };
  c.tolerance = 1e-5;
  return c;
}

GradCheckCase make_end_to_end_case() {
  GradCheckCase c;
  c.op.name = "acfpn_tiny_end_to_end";
  AcfpnConfig config = AcfpnConfig{}.scaled(16);
  auto net = std::make_shared<LayerGraph>(acfpn_build(config));

  auto split = [net](const CheckInputs& in, TensorD& image, ParamDict<double>& params) {
    for (const auto& [key, value] : in) {
      if (key == "image") {
        image = value;
      } else {
        params[key] = value;
      }
    }
  };
  c.op.forward = [net, split](const CheckInputs& in) {
    TensorD image;
    ParamDict<double> params;
    split(in, image, params);
    const Pyramid<double> p = acfpn_forward(*net, params, image);
    TensorD packed(Shape{1, 5, 1, 1});
    for (int k = 0; k < 5; ++k) packed.data[static_cast<std::size_t>(k)] = loss_of(p.level(k + 2));
    return packed;
  };
  c.op.backward = [net, split](const CheckInputs& in) {
    TensorD image;
    ParamDict<double> params;
    split(in, image, params);
    TensorMap<double> inputs;
    inputs["image"] = image;
    const TensorMap<double> acts = graph_forward(*net, params, inputs);
    TensorMap<double> upstream;
    for (const char* level : kPyramidLevels) {
      upstream[level] = TensorD::full(acts.at(level).shape, 1.0);
    }
    GraphGrads<double> grads = graph_backward(*net, params, acts, upstream);
    CheckInputs out = std::move(grads.params);
    out["image"] = std::move(grads.inputs.at("image"));
    return out;
  };
  c.make_inputs = [net]() {
    const std::uint64_t seed = name_seed("acfpn_tiny_end_to_end");
    CheckInputs in;
    ParamDict<double> params = init_params<double>(*net, 7);
    for (auto& [key, value] : params) {
      // give the offset branches small non-zero values so sampling happens
      // away from the integer lattice
      if (key.ends_with(".offset_weight")) {
        value = rand_tensor(value.shape, name_seed(key), -0.02, 0.02);
      } else if (key.ends_with(".offset_bias")) {
        value = rand_tensor(value.shape, name_seed(key), 0.2, 0.45);
      }
      in[key] = value;
    }
    in["image"] = rand_tensor(Shape{1, 3, 32, 32}, seed);
    return in;
  };
  c.tolerance = 1e-4;
  c.max_coords_per_tensor = 8;
  return c;
}

std::vector<GradCheckCase> build_suite() {
  std::vector<GradCheckCase> cases;

  // every stride/pad/dilation combination per kernel size (skipping
  // geometries with empty output)
  for (int kernel : {1, 2, 3}) {
    for (int stride : {1, 2}) {
      for (int pad : {0, 1, 2}) {
        for (int dil : {1, 2, 3}) {
          if (kernel == 1 && (dil > 1 || pad > 1)) continue;
          if (kernel == 2 && dil > 2) continue;
          const ConvSpec spec = ConvSpec::make(kernel, stride, pad, dil);
          if (spec.footprint_h() > 6 + 2 * pad || spec.footprint_w() > 7 + 2 * pad) continue;
          cases.push_back(make_conv_case(kernel, stride, pad, dil));
        }
      }
    }
  }

  {
    GradCheckCase c;
    c.op.name = "max_pool2d[k2 s2]";
    c.op.forward = [](const CheckInputs& in) { return max_pool2d(in.at("input"), 2, 2, 2, 2); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD out = max_pool2d(in.at("input"), 2, 2, 2, 2);
      CheckInputs g;
      g["input"] =
          max_pool2d_backward(in.at("input"), 2, 2, 2, 2, TensorD::full(out.shape, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_tensor(Shape{1, 3, 8, 8}, name_seed("max_pool2d[k2 s2]"));
      return in;
    };
    cases.push_back(std::move(c));
  }
  {
    GradCheckCase c;
    c.op.name = "max_pool2d[k3 s2]";
    c.op.forward = [](const CheckInputs& in) { return max_pool2d(in.at("input"), 3, 3, 2, 2); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD out = max_pool2d(in.at("input"), 3, 3, 2, 2);
      CheckInputs g;
      g["input"] =
          max_pool2d_backward(in.at("input"), 3, 3, 2, 2, TensorD::full(out.shape, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_tensor(Shape{2, 2, 7, 7}, name_seed("max_pool2d[k3 s2]"));
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "global_avg_pool";
    c.op.forward = [](const CheckInputs& in) { return global_avg_pool(in.at("input")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& x = in.at("input");
      CheckInputs g;
      g["input"] = global_avg_pool_backward(x.shape, TensorD::full(Shape{x.shape.n, x.shape.c, 1, 1}, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_tensor(Shape{2, 3, 4, 5}, name_seed("global_avg_pool"));
      return in;
    };
    cases.push_back(std::move(c));
  }

  auto add_resize_case = [&cases](const std::string& name, Shape in_shape, std::int64_t oh,
                                  std::int64_t ow) {
    GradCheckCase c;
    c.op.name = name;
    c.op.forward = [oh, ow](const CheckInputs& in) {
      return bilinear_resize(in.at("input"), oh, ow);
    };
    c.op.backward = [oh, ow](const CheckInputs& in) {
      const TensorD& x = in.at("input");
      CheckInputs g;
      g["input"] = bilinear_resize_backward(
          x.shape, TensorD::full(Shape{x.shape.n, x.shape.c, oh, ow}, 1.0));
      return g;
    };
    c.make_inputs = [name, in_shape]() {
      CheckInputs in;
      in["input"] = rand_tensor(in_shape, name_seed(name));
      return in;
    };
    cases.push_back(std::move(c));
  };
  add_resize_case("bilinear_resize[up]", Shape{1, 3, 4, 5}, 9, 7);
  add_resize_case("bilinear_resize[down]", Shape{1, 2, 8, 6}, 3, 4);
  add_resize_case("bilinear_resize[broadcast]", Shape{1, 4, 1, 1}, 5, 5);

  {
    GradCheckCase c;
    c.op.name = "nearest_upsample2x";
    c.op.forward = [](const CheckInputs& in) { return nearest_upsample2x(in.at("input")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& x = in.at("input");
      CheckInputs g;
      g["input"] = nearest_upsample2x_backward(
          x.shape, TensorD::full(Shape{x.shape.n, x.shape.c, x.shape.h * 2, x.shape.w * 2}, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_tensor(Shape{1, 3, 4, 4}, name_seed("nearest_upsample2x"));
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "concat_channels";
    c.op.forward = [](const CheckInputs& in) {
      return concat_channels<double>({&in.at("a"), &in.at("b"), &in.at("c")});
    };
    c.op.backward = [](const CheckInputs& in) {
      const std::int64_t ca = in.at("a").shape.c, cb = in.at("b").shape.c,
                         cc = in.at("c").shape.c;
      const Shape s = in.at("a").shape;
      const TensorD ones = TensorD::full(Shape{s.n, ca + cb + cc, s.h, s.w}, 1.0);
      CheckInputs g;
      g["a"] = slice_channels(ones, 0, ca);
      g["b"] = slice_channels(ones, ca, ca + cb);
      g["c"] = slice_channels(ones, ca + cb, ca + cb + cc);
      return g;
    };
    c.make_inputs = []() {
      const std::uint64_t seed = name_seed("concat_channels");
      CheckInputs in;
      in["a"] = rand_tensor(Shape{1, 2, 3, 4}, seed);
      in["b"] = rand_tensor(Shape{1, 3, 3, 4}, seed + 1);
      in["c"] = rand_tensor(Shape{1, 1, 3, 4}, seed + 2);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "relu";
    c.op.forward = [](const CheckInputs& in) { return relu(in.at("input")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& x = in.at("input");
      CheckInputs g;
      g["input"] = relu_backward(x, TensorD::full(x.shape, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_signed_away_from_zero(Shape{2, 3, 4, 4}, name_seed("relu"), 0.05, 1.0);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "sigmoid";
    c.op.forward = [](const CheckInputs& in) { return sigmoid(in.at("input")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD y = sigmoid(in.at("input"));
      CheckInputs g;
      g["input"] = sigmoid_backward(y, TensorD::full(y.shape, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["input"] = rand_tensor(Shape{1, 2, 4, 4}, name_seed("sigmoid"), -2.0, 2.0);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "add";
    c.op.forward = [](const CheckInputs& in) { return add(in.at("a"), in.at("b")); };
    c.op.backward = [](const CheckInputs& in) {
      CheckInputs g;
      g["a"] = TensorD::full(in.at("a").shape, 1.0);
      g["b"] = TensorD::full(in.at("b").shape, 1.0);
      return g;
    };
    c.make_inputs = []() {
      const std::uint64_t seed = name_seed("add");
      CheckInputs in;
      in["a"] = rand_tensor(Shape{2, 2, 3, 3}, seed);
      in["b"] = rand_tensor(Shape{2, 2, 3, 3}, seed + 1);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "mul_attention";
    c.op.forward = [](const CheckInputs& in) {
      return mul_attention(in.at("v"), in.at("attn"));
    };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& v = in.at("v");
      auto [gv, ga] = mul_attention_backward(v, in.at("attn"), TensorD::full(v.shape, 1.0));
      CheckInputs g;
      g["v"] = std::move(gv);
      g["attn"] = std::move(ga);
      return g;
    };
    c.make_inputs = []() {
      const std::uint64_t seed = name_seed("mul_attention");
      CheckInputs in;
      in["v"] = rand_tensor(Shape{1, 3, 4, 4}, seed);
      in["attn"] = rand_tensor(Shape{1, 1, 4, 4}, seed + 1);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "affinity_matrix";
    c.op.forward = [](const CheckInputs& in) { return affinity_matrix(in.at("q"), in.at("k")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& q = in.at("q");
      const std::int64_t n_pos = q.shape.h * q.shape.w;
      auto [gq, gk] = affinity_backward(
          q, in.at("k"), TensorD::full(Shape{q.shape.n, n_pos, q.shape.h, q.shape.w}, 1.0));
      CheckInputs g;
      g["q"] = std::move(gq);
      g["k"] = std::move(gk);
      return g;
    };
    c.make_inputs = []() {
      const std::uint64_t seed = name_seed("affinity_matrix");
      CheckInputs in;
      in["q"] = rand_tensor(Shape{1, 4, 3, 3}, seed);
      in["k"] = rand_tensor(Shape{1, 4, 3, 3}, seed + 1);
      return in;
    };
    cases.push_back(std::move(c));
  }

  {
    GradCheckCase c;
    c.op.name = "attn_collapse";
    c.op.forward = [](const CheckInputs& in) { return attn_collapse(in.at("r")); };
    c.op.backward = [](const CheckInputs& in) {
      const TensorD& r = in.at("r");
      CheckInputs g;
      g["r"] = attn_collapse_backward(
          r, TensorD::full(Shape{r.shape.n, 1, r.shape.h, r.shape.w}, 1.0));
      return g;
    };
    c.make_inputs = []() {
      CheckInputs in;
      in["r"] = rand_tensor(Shape{1, 9, 3, 3}, name_seed("attn_collapse"), -2.0, 2.0);
      return in;
    };
    cases.push_back(std::move(c));
  }

  cases.push_back(make_deform_case());
  cases.push_back(make_cxam_case());
  cases.push_back(make_cnam_case());
  cases.push_back(make_end_to_end_case());
  return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_suite_cases() {
  static const std::vector<GradCheckCase> cases = build_suite();
  return cases;
}

double grad_check(const std::string& op_name, const CheckInputs& inputs, double epsilon) {
  for (const GradCheckCase& c : gradcheck_suite_cases()) {
    if (c.op.name == op_name) {
      return grad_check(c.op, inputs, epsilon, c.max_coords_per_tensor).max_rel_err;
    }
  }
  throw std::invalid_argument("grad_check: no registered backward for op '" + op_name + "'");
}

SuiteReport run_gradcheck_suite(double epsilon, const std::string& inject_fault) {
  if (!inject_fault.empty()) {
    bool known = false;
    for (const GradCheckCase& c : gradcheck_suite_cases()) known |= (c.op.name == inject_fault);
    if (!known) {
      throw std::invalid_argument("gradcheck: cannot inject fault into unknown op '" +
                                  inject_fault + "'");
    }
  }
  SuiteReport report;
  for (const GradCheckCase& c : gradcheck_suite_cases()) {
    GradCheckOp op = c.op;
    if (c.op.name == inject_fault) {
      auto original = op.backward;
      op.backward = [original](const CheckInputs& in) {
        CheckInputs grads = original(in);
        for (auto& [slot, tensor] : grads) {
          for (double& v : tensor.data) v += 0.01;
        }
        return grads;
      };
    }
    const GradCheckOutcome outcome =
        grad_check(op, c.make_inputs(), epsilon, c.max_coords_per_tensor);
    SuiteRow row;
    row.name = c.op.name;
    row.max_rel_err = outcome.max_rel_err;
    row.tolerance = c.tolerance;
    row.pass = outcome.max_rel_err <= c.tolerance;
    report.all_pass = report.all_pass && row.pass;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace acfpn
