#pragma once

#include <cstdint>
#include <string>

#include "pointkan/common.hpp"

namespace pointkan {

struct LinCache {
  Matrix x;
  bool filled = false;
};

/// Fully connected layer, y = W^T x + b, weight stored d_in x d_out.
struct Linear {
  std::size_t d_in = 0, d_out = 0;
  Param weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::uint64_t seed);

  Matrix forward(const Matrix& x, LinCache& cache) const;
  // Accumulates parameter gradients, returns the input gradient.
  Matrix backward(const Matrix& dy, const LinCache& cache);

  void collect(ParamList& out, const std::string& prefix);
  std::size_t stored_param_count() const { return weight.size() + bias.size(); }
};

struct BnCache {
  Matrix x;
  Matrix xhat;
  std::vector<double> batch_mean, batch_var;  // population statistics
  std::vector<double> inv_std;
  bool training = false;
  bool filled = false;
};

/// 1-D batch normalization over the row axis. Running statistics are state,
/// not trainable parameters; evaluation mode before any statistics exist is
/// a usage error.
struct BatchNorm1d {
  std::size_t dim = 0;
  double momentum = 0.1;
  double eps = 1e-5;
  Param gamma, beta;
  Param running_mean, running_var;
  Param seen;  // 1 scalar, nonzero once statistics exist (serialized with the model)

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t d);

  Matrix forward(const Matrix& x, bool training, bool update_stats, BnCache& cache);
  Matrix backward(const Matrix& dy, const BnCache& cache);

  // Folds one forward pass worth of batch statistics into the running ones.
  void fold_stats(const std::vector<double>& mean, const std::vector<double>& var);
  bool has_stats() const { return seen.value[0] != 0.0; }

  void collect(ParamList& out, const std::string& prefix);
};

struct ReluCache {
  Matrix x;
  bool filled = false;
};

Matrix relu(const Matrix& x, ReluCache& cache);
Matrix relu_backward(const Matrix& dy, const ReluCache& cache);

}  // namespace pointkan
