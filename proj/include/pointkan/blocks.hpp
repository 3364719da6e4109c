#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointkan/common.hpp"
#include "pointkan/kan.hpp"
#include "pointkan/nn.hpp"

namespace pointkan {

enum class Backend { bspline, rational, mlp };

std::string backend_name(Backend b);
Backend backend_from_name(const std::string& name);

// ---- Group-Norm with learnable affine and center concatenation ----

struct GroupNormCache {
  Tensor3 dev;                // G x K x d, deviations from the center feature
  std::vector<double> inv_s;  // per group, 1/sqrt(Var + eps)
  std::vector<double> mean;   // per group, mean of all deviation entries
  Matrix centers;             // raw center features (concatenated slice)
  bool filled = false;
};

/// Normalizes each group's neighbor features by the deviation from the
/// center feature, scaled by one scalar variance over all K*d deviation
/// entries, applies the affine map on the normalized slice, and
/// concatenates the raw center feature, doubling the channel width.
/// alpha/beta hold 2d entries; only the first d act on the normalized
/// slice, the rest exist for the doubled-width bookkeeping and stay inert.
struct GroupNormAffine {
  std::size_t dim = 0;  // d, input feature width
  bool learnable = true;
  double eps = 1e-5;
  Param alpha, beta;  // 2*dim each

  GroupNormAffine() = default;
  GroupNormAffine(std::size_t d, bool learnable_affine);

  Tensor3 forward(const Tensor3& neighbors, const Matrix& centers, GroupNormCache& cache) const;
  // Fills the neighbor/center input gradients; accumulates alpha/beta grads.
  void backward(const Tensor3& d_out, const GroupNormCache& cache, Tensor3& d_neighbors,
                Matrix& d_centers);

  void collect(ParamList& out, const std::string& prefix);
};

// ---- S-Pool: per-channel softmax-weighted pooling over the K axis ----

struct SPoolCache {
  Tensor3 x;
  Tensor3 weights;  // softmax over K, per group and channel
  Matrix out;
  bool filled = false;
};

Matrix s_pool(const Tensor3& x, SPoolCache& cache);
Tensor3 s_pool_backward(const Matrix& d_out, const SPoolCache& cache);

// ---- Max pooling over the K axis ----

struct MaxPoolCache {
  std::vector<std::size_t> argmax;  // G*C, winning K slot
  std::size_t k = 0;
  bool filled = false;
};

Matrix max_pool_k(const Tensor3& x, MaxPoolCache& cache);
Tensor3 max_pool_k_backward(const Matrix& d_out, const MaxPoolCache& cache);

// ---- Depthwise convolution along the distance-sorted neighbor axis ----

struct DwConvCache {
  Tensor3 x;
  bool filled = false;
};

/// One odd-width kernel per channel, zero padding, plus per-channel bias.
Tensor3 dwconv_neighbors(const Tensor3& x, const Matrix& kernels, std::span<const double> bias);

struct DwConv {
  std::size_t channels = 0, width = 3;
  Param kernels;  // channels x width
  Param bias;     // channels

  DwConv() = default;
  DwConv(std::size_t channels, std::size_t width, std::uint64_t seed);

  Tensor3 forward(const Tensor3& x, DwConvCache& cache) const;
  Tensor3 backward(const Tensor3& dy, const DwConvCache& cache);

  void collect(ParamList& out, const std::string& prefix);
};

// ---- Pointwise layer stack (the Phi inside the LFP block) ----

struct StackCache {
  std::vector<KanCache> kan;
  std::vector<RationalCache> rational;
  std::vector<LinCache> linear;
  std::vector<ReluCache> relu;
  bool filled = false;
};

/// A depth-L stack mapping C -> C with hidden width h applied row-wise:
/// B-spline KAN layers, grouped-rational layers, or plain linear+ReLU.
struct PointwiseStack {
  Backend backend = Backend::bspline;
  std::vector<KanLayer> kan;
  std::vector<RationalGroupLayer> rational;
  std::vector<Linear> linear;

  struct Spec {
    std::size_t channels = 0;
    std::size_t depth = 3;
    std::size_t hidden = 0;  // 0 -> channels/2
    Backend backend = Backend::bspline;
    std::size_t grid = 5, order = 3;
    std::size_t m = 5, n = 4, groups = 4;  // rational; groups clamped to divide widths
  };

  PointwiseStack() = default;
  PointwiseStack(const Spec& spec, std::uint64_t seed);

  Matrix forward(const Matrix& x, StackCache& cache) const;
  Matrix backward(const Matrix& dy, const StackCache& cache);

  void collect(ParamList& out, const std::string& prefix);
};

// ---- LFP block: residual pointwise stack with depthwise convolution ----

struct LfpCache {
  StackCache stack;
  DwConvCache dw;
  std::size_t g = 0, k = 0, c = 0;
  bool filled = false;
};

/// out = x + DwConv(Phi(x)); with the convolution disabled the residual
/// becomes x + Phi(x).
struct Lfp {
  PointwiseStack stack;
  DwConv dw;
  bool use_dwconv = true;

  Lfp() = default;
  Lfp(const PointwiseStack::Spec& spec, std::size_t dw_width, bool use_dwconv,
      std::uint64_t seed);

  Tensor3 forward(const Tensor3& x, LfpCache& cache) const;
  Tensor3 backward(const Tensor3& dy, const LfpCache& cache);

  void collect(ParamList& out, const std::string& prefix);
};

// ---- ResP block: residual linear/BN/ReLU/linear ----

struct ResPCache {
  LinCache lin1;
  BnCache bn;
  ReluCache relu;
  LinCache lin2;
  bool filled = false;
};

struct ResPBlock {
  Linear lin1, lin2;
  BatchNorm1d bn;

  ResPBlock() = default;
  ResPBlock(std::size_t dim, std::uint64_t seed);

  Matrix forward(const Matrix& x, bool training, bool update_stats, ResPCache& cache);
  Matrix backward(const Matrix& dy, const ResPCache& cache);

  void collect(ParamList& out, const std::string& prefix);
};

}  // namespace pointkan
