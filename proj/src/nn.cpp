#include "pointkan/nn.hpp"

#include <cmath>
#include <random>

namespace pointkan {

Linear::Linear(std::size_t in, std::size_t out, std::uint64_t seed) : d_in(in), d_out(out) {
  check_arg(in >= 1 && out >= 1, "Linear: dimensions must be positive");
  weight.init(in * out);
  bias.init(out);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : weight.value) w = u(rng);
}

Matrix Linear::forward(const Matrix& x, LinCache& cache) const {
  check_arg(x.cols == d_in, "Linear::forward: expected " + std::to_string(d_in) +
                                " columns, got " + std::to_string(x.cols));
  Matrix y(x.rows, d_out);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double* yr = y.data.data() + r * d_out;
    for (std::size_t q = 0; q < d_out; ++q) yr[q] = bias.value[q];
    const double* xr = x.data.data() + r * d_in;
    for (std::size_t p = 0; p < d_in; ++p) {
      const double xv = xr[p];
      const double* wp = weight.value.data() + p * d_out;
      for (std::size_t q = 0; q < d_out; ++q) yr[q] += xv * wp[q];
    }
  }
  cache.x = x;
  cache.filled = true;
  return y;
}

Matrix Linear::backward(const Matrix& dy, const LinCache& cache) {
  check_usage(cache.filled, "Linear::backward: no forward cache");
  check_arg(dy.rows == cache.x.rows && dy.cols == d_out, "Linear::backward: shape mismatch");
  Matrix dx(cache.x.rows, d_in);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double* ur = dy.data.data() + r * d_out;
    const double* xr = cache.x.data.data() + r * d_in;
    for (std::size_t q = 0; q < d_out; ++q) bias.grad[q] += ur[q];
    for (std::size_t p = 0; p < d_in; ++p) {
      const double* wp = weight.value.data() + p * d_out;
      double* gp = weight.grad.data() + p * d_out;
      double acc = 0.0;
      const double xv = xr[p];
      for (std::size_t q = 0; q < d_out; ++q) {
        acc += ur[q] * wp[q];
        gp[q] += xv * ur[q];
      }
      dx(r, p) = acc;
    }
  }
  return dx;
}

void Linear::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

BatchNorm1d::BatchNorm1d(std::size_t d) : dim(d) {
  check_arg(d >= 1, "BatchNorm1d: dimension must be positive");
  gamma.init(d, 1.0);
  beta.init(d, 0.0);
  running_mean.init(d, 0.0);
  running_var.init(d, 1.0);
  seen.init(1, 0.0);
}

Matrix BatchNorm1d::forward(const Matrix& x, bool training, bool update_stats, BnCache& cache) {
  check_arg(x.cols == dim, "BatchNorm1d::forward: feature width mismatch");
  check_arg(x.rows >= 1, "BatchNorm1d::forward: empty batch");
  const std::size_t n = x.rows;
  Matrix y(n, dim);
  cache.x = x;
  cache.training = training;
  cache.inv_std.assign(dim, 0.0);
  cache.xhat = Matrix(n, dim);

  if (training) {
    cache.batch_mean.assign(dim, 0.0);
    cache.batch_var.assign(dim, 0.0);
    for (std::size_t c = 0; c < dim; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < n; ++r) m += x(r, c);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        const double d = x(r, c) - m;
        v += d * d;
      }
      v /= static_cast<double>(n);
      cache.batch_mean[c] = m;
      cache.batch_var[c] = v;
      const double inv = 1.0 / std::sqrt(v + eps);
      cache.inv_std[c] = inv;
      for (std::size_t r = 0; r < n; ++r) {
        const double h = (x(r, c) - m) * inv;
        cache.xhat(r, c) = h;
        y(r, c) = gamma.value[c] * h + beta.value[c];
      }
    }
    if (update_stats) fold_stats(cache.batch_mean, cache.batch_var);
  } else {
    check_usage(has_stats(),
                "BatchNorm1d: evaluation mode before any statistics exist");
    for (std::size_t c = 0; c < dim; ++c) {
      const double inv = 1.0 / std::sqrt(running_var.value[c] + eps);
      cache.inv_std[c] = inv;
      for (std::size_t r = 0; r < n; ++r) {
        const double h = (x(r, c) - running_mean.value[c]) * inv;
        cache.xhat(r, c) = h;
        y(r, c) = gamma.value[c] * h + beta.value[c];
      }
    }
  }
  cache.filled = true;
  return y;
}

Matrix BatchNorm1d::backward(const Matrix& dy, const BnCache& cache) {
  check_usage(cache.filled, "BatchNorm1d::backward: no forward cache");
  check_arg(dy.rows == cache.x.rows && dy.cols == dim, "BatchNorm1d::backward: shape mismatch");
  const std::size_t n = dy.rows;
  Matrix dx(n, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    double dg = 0.0, db = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      dg += dy(r, c) * cache.xhat(r, c);
      db += dy(r, c);
    }
    gamma.grad[c] += dg;
    beta.grad[c] += db;

    const double inv = cache.inv_std[c];
    if (!cache.training) {
      for (std::size_t r = 0; r < n; ++r) dx(r, c) = dy(r, c) * gamma.value[c] * inv;
      continue;
    }
    // Training mode: batch mean and variance are functions of the input.
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dxh = dy(r, c) * gamma.value[c];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * cache.xhat(r, c);
    }
    const double bn = static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      const double dxh = dy(r, c) * gamma.value[c];
      dx(r, c) = inv * (dxh - sum_dxhat / bn - cache.xhat(r, c) * sum_dxhat_xhat / bn);
    }
  }
  return dx;
}

void BatchNorm1d::fold_stats(const std::vector<double>& mean, const std::vector<double>& var) {
  check_arg(mean.size() == dim && var.size() == dim, "BatchNorm1d::fold_stats: size mismatch");
  for (std::size_t c = 0; c < dim; ++c) {
    running_mean.value[c] = (1.0 - momentum) * running_mean.value[c] + momentum * mean[c];
    running_var.value[c] = (1.0 - momentum) * running_var.value[c] + momentum * var[c];
  }
  seen.value[0] = 1.0;
}

void BatchNorm1d::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, false});
  out.push_back({prefix + ".running_var", &running_var, false});
  out.push_back({prefix + ".seen", &seen, false});
}

Matrix relu(const Matrix& x, ReluCache& cache) {
  Matrix y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  cache.x = x;
  cache.filled = true;
  return y;
}

Matrix relu_backward(const Matrix& dy, const ReluCache& cache) {
  check_usage(cache.filled, "relu_backward: no forward cache");
  Matrix dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i)
    if (cache.x.data[i] <= 0.0) dx.data[i] = 0.0;
  return dx;
}

}  // namespace pointkan
