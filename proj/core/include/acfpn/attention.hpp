#pragma once

#include "acfpn/graph.hpp"
#include "acfpn/tensor.hpp"

namespace acfpn {

/// Query/key/value projections of the context attention module. wq and wk
/// share the reduced width; wv keeps the input width.
template <typename T>
struct CxamWeights {
  Tensor<T> wq, bq;  // (c', c, 1, 1), (1, c', 1, 1)
  Tensor<T> wk, bk;
  Tensor<T> wv, bv;  // (c, c, 1, 1), (1, c, 1, 1)
};

/// Projections of the content attention module, both reading the backbone
/// stride-32 feature map.
template <typename T>
struct CnamWeights {
  Tensor<T> wp, bp;
  Tensor<T> wz, bz;
};

template <typename T>
struct CxamOutput {
  Tensor<T> e;     // attention-scaled value
  Tensor<T> v;     // value projection, reused by the content attention
  Tensor<T> attn;  // (n, 1, h, w), strictly inside (0, 1)
};

template <typename T>
struct CnamOutput {
  Tensor<T> d;
  Tensor<T> attn;
};

template <typename T>
CxamOutput<T> cxam_forward(const Tensor<T>& f, const CxamWeights<T>& weights);

/// v is the value tensor produced by cxam_forward on the same feature map.
template <typename T>
CnamOutput<T> cnam_forward(const Tensor<T>& f5, const Tensor<T>& v, const CnamWeights<T>& weights);

/// Elementwise residual fusion f + e + d.
template <typename T>
Tensor<T> am_fuse(const Tensor<T>& f, const Tensor<T>& e, const Tensor<T>& d);

/// Gradients of sum-style losses through the module, composed from the
/// per-op backwards. grad maps slot names (wq, bq, ..., f) to tensors.
template <typename T>
TensorMap<T> cxam_backward(const Tensor<T>& f, const CxamWeights<T>& weights,
                           const Tensor<T>& grad_e, const Tensor<T>& grad_v,
                           const Tensor<T>& grad_attn);

template <typename T>
TensorMap<T> cnam_backward(const Tensor<T>& f5, const Tensor<T>& v, const CnamWeights<T>& weights,
                           const Tensor<T>& grad_d, const Tensor<T>& grad_attn);

// Graph builders mirroring the functional path exactly; used by the full
// pyramid assembly and by the complexity analysis. Node names take the
// given prefix ("CxAM_q", "CxAM_out", ...).
std::string append_cxam(LayerGraph& g, const std::string& input, std::int64_t channels,
                        std::int64_t attn_channels, const std::string& prefix = "CxAM");
std::string append_cnam(LayerGraph& g, const std::string& f5, const std::string& value,
                        std::int64_t f5_channels, std::int64_t value_channels,
                        std::int64_t attn_channels, const std::string& prefix = "CnAM");

/// Standalone graphs for complexity accounting.
LayerGraph cxam_build(std::int64_t channels = 256, std::int64_t attn_channels = 128);
LayerGraph cnam_build(std::int64_t f5_channels = 2048, std::int64_t value_channels = 256,
                      std::int64_t attn_channels = 256);

}  // namespace acfpn
