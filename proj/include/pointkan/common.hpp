#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pointkan {

// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  std::size_t size() const { return data.size(); }
};

// Dense rank-3 tensor (d0 x d1 x d2), last index fastest.
struct Tensor3 {
  std::size_t d0 = 0;
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
      : d0(a), d1(b), d2(c), data(a * b * c, fill) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * d1 + j) * d2 + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * d1 + j) * d2 + k];
  }

  std::span<double> slice(std::size_t i, std::size_t j) {
    return {data.data() + (i * d1 + j) * d2, d2};
  }
  std::span<const double> slice(std::size_t i, std::size_t j) const {
    return {data.data() + (i * d1 + j) * d2, d2};
  }

  // View of the tensor as a (d0*d1) x d2 matrix.
  Matrix as_matrix() const {
    Matrix m(d0 * d1, d2);
    m.data = data;
    return m;
  }

  std::size_t size() const { return data.size(); }
};

// One trainable (or state) parameter block with its gradient buffer.
struct Param {
  std::vector<double> value;
  std::vector<double> grad;

  void init(std::size_t n, double fill = 0.0) {
    value.assign(n, fill);
    grad.assign(n, 0.0);
  }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// Named reference into a layer's parameter block. State blocks (batch-norm
// running statistics and the like) are serialized but never optimized.
struct ParamRef {
  std::string name;
  Param* param = nullptr;
  bool trainable = true;
};

using ParamList = std::vector<ParamRef>;

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void check_usage(bool ok, const std::string& msg) {
  if (!ok) throw std::logic_error(msg);
}

// Runs fn(i) for i in [0, n). Every index is independent; results must not
// depend on the assignment of indices to workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace pointkan
