#include "pointkan/blocks.hpp"

#include <cmath>
#include <random>

namespace pointkan {

std::string backend_name(Backend b) {
  switch (b) {
    case Backend::bspline: return "bspline";
    case Backend::rational: return "rational";
    case Backend::mlp: return "mlp";
  }
  return "?";
}

Backend backend_from_name(const std::string& name) {
  if (name == "bspline") return Backend::bspline;
  if (name == "rational") return Backend::rational;
  if (name == "mlp") return Backend::mlp;
  throw std::invalid_argument("unknown backend '" + name + "' (expected bspline|rational|mlp)");
}

// ---- GroupNormAffine ----

GroupNormAffine::GroupNormAffine(std::size_t d, bool learnable_affine)
    : dim(d), learnable(learnable_affine) {
  check_arg(d >= 1, "GroupNormAffine: width must be positive");
  if (learnable) {
    alpha.init(2 * d, 1.0);
    beta.init(2 * d, 0.0);
  }
}

Tensor3 GroupNormAffine::forward(const Tensor3& neighbors, const Matrix& centers,
                                 GroupNormCache& cache) const {
  const std::size_t g = neighbors.d0, k = neighbors.d1, d = neighbors.d2;
  check_arg(d == dim, "GroupNormAffine: feature width mismatch");
  check_arg(centers.rows == g && centers.cols == d, "GroupNormAffine: center shape mismatch");

  cache.dev = Tensor3(g, k, d);
  cache.inv_s.assign(g, 0.0);
  cache.mean.assign(g, 0.0);
  cache.centers = centers;

  Tensor3 out(g, k, 2 * d);
  const double denom = static_cast<double>(k * d);
  for (std::size_t gi = 0; gi < g; ++gi) {
    double m = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        const double e = neighbors(gi, j, t) - centers(gi, t);
        cache.dev(gi, j, t) = e;
        m += e;
      }
    m /= denom;
    double var = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        const double c = cache.dev(gi, j, t) - m;
        var += c * c;
      }
    var /= denom;
    const double inv_s = 1.0 / std::sqrt(var + eps);
    cache.mean[gi] = m;
    cache.inv_s[gi] = inv_s;

    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < d; ++t) {
        const double n = cache.dev(gi, j, t) * inv_s;
        out(gi, j, t) = learnable ? alpha.value[t] * n + beta.value[t] : n;
        out(gi, j, d + t) = centers(gi, t);
      }
    }
  }
  cache.filled = true;
  return out;
}

void GroupNormAffine::backward(const Tensor3& d_out, const GroupNormCache& cache,
                               Tensor3& d_neighbors, Matrix& d_centers) {
  check_usage(cache.filled, "GroupNormAffine::backward: no forward cache");
  const std::size_t g = cache.dev.d0, k = cache.dev.d1, d = cache.dev.d2;
  check_arg(d_out.d0 == g && d_out.d1 == k && d_out.d2 == 2 * d,
            "GroupNormAffine::backward: shape mismatch");

  d_neighbors = Tensor3(g, k, d);
  d_centers = Matrix(g, d);
  const double denom = static_cast<double>(k * d);

  for (std::size_t gi = 0; gi < g; ++gi) {
    const double inv_s = cache.inv_s[gi];
    const double m = cache.mean[gi];

    // The scalar variance couples every deviation entry of the group.
    double sum_ge = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        const double e = cache.dev(gi, j, t);
        const double a = learnable ? alpha.value[t] : 1.0;
        const double gn = d_out(gi, j, t) * a;
        sum_ge += gn * e;
        if (learnable) {
          alpha.grad[t] += d_out(gi, j, t) * e * inv_s;
          beta.grad[t] += d_out(gi, j, t);
        }
      }

    const double var_term = sum_ge * inv_s * inv_s * inv_s / denom;
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < d; ++t) {
        const double e = cache.dev(gi, j, t);
        const double a = learnable ? alpha.value[t] : 1.0;
        const double gn = d_out(gi, j, t) * a;
        const double de = gn * inv_s - (e - m) * var_term;
        d_neighbors(gi, j, t) = de;
        d_centers(gi, t) -= de;
        d_centers(gi, t) += d_out(gi, j, d + t);  // concatenated raw center path
      }
    }
  }
}

void GroupNormAffine::collect(ParamList& out, const std::string& prefix) {
  if (!learnable) return;
  out.push_back({prefix + ".alpha", &alpha, true});
  out.push_back({prefix + ".beta", &beta, true});
}

// ---- S-Pool ----

Matrix s_pool(const Tensor3& x, SPoolCache& cache) {
  const std::size_t g = x.d0, k = x.d1, c = x.d2;
  check_arg(g >= 1 && k >= 1 && c >= 1, "s_pool: empty input");
  cache.x = x;
  cache.weights = Tensor3(g, k, c);
  Matrix out(g, c);
  for (std::size_t gi = 0; gi < g; ++gi) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      double mx = x(gi, 0, ci);
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x(gi, j, ci));
      double z = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double w = std::exp(x(gi, j, ci) - mx);
        cache.weights(gi, j, ci) = w;
        z += w;
      }
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double w = cache.weights(gi, j, ci) / z;
        cache.weights(gi, j, ci) = w;
        acc += w * x(gi, j, ci);
      }
      out(gi, ci) = acc;
    }
  }
  cache.out = out;
  cache.filled = true;
  return out;
}

Tensor3 s_pool_backward(const Matrix& d_out, const SPoolCache& cache) {
  check_usage(cache.filled, "s_pool_backward: no forward cache");
  const std::size_t g = cache.x.d0, k = cache.x.d1, c = cache.x.d2;
  check_arg(d_out.rows == g && d_out.cols == c, "s_pool_backward: shape mismatch");
  Tensor3 dx(g, k, c);
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t ci = 0; ci < c; ++ci) {
      const double u = d_out(gi, ci);
      const double y = cache.out(gi, ci);
      for (std::size_t j = 0; j < k; ++j) {
        const double w = cache.weights(gi, j, ci);
        dx(gi, j, ci) = u * w * (1.0 + cache.x(gi, j, ci) - y);
      }
    }
  return dx;
}

// ---- Max pool over K ----

Matrix max_pool_k(const Tensor3& x, MaxPoolCache& cache) {
  const std::size_t g = x.d0, k = x.d1, c = x.d2;
  Matrix out(g, c);
  cache.argmax.assign(g * c, 0);
  cache.k = k;
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t ci = 0; ci < c; ++ci) {
      double best = x(gi, 0, ci);
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j)
        if (x(gi, j, ci) > best) {
          best = x(gi, j, ci);
          arg = j;
        }
      out(gi, ci) = best;
      cache.argmax[gi * c + ci] = arg;
    }
  cache.filled = true;
  return out;
}

Tensor3 max_pool_k_backward(const Matrix& d_out, const MaxPoolCache& cache) {
  check_usage(cache.filled, "max_pool_k_backward: no forward cache");
  Tensor3 dx(d_out.rows, cache.k, d_out.cols);
  for (std::size_t gi = 0; gi < d_out.rows; ++gi)
    for (std::size_t ci = 0; ci < d_out.cols; ++ci)
      dx(gi, cache.argmax[gi * d_out.cols + ci], ci) = d_out(gi, ci);
  return dx;
}

// ---- Depthwise convolution ----

Tensor3 dwconv_neighbors(const Tensor3& x, const Matrix& kernels, std::span<const double> bias) {
  const std::size_t g = x.d0, k = x.d1, c = x.d2, w = kernels.cols;
  check_arg(w % 2 == 1, "dwconv_neighbors: kernel width must be odd");
  check_arg(kernels.rows == c && bias.size() == c, "dwconv_neighbors: channel mismatch");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(w) / 2;
  Tensor3 out(g, k, c);
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = bias[ci];
        for (std::size_t t = 0; t < w; ++t) {
          const std::ptrdiff_t src =
              static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(t) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(k)) continue;  // zero padding
          acc += kernels(ci, t) * x(gi, static_cast<std::size_t>(src), ci);
        }
        out(gi, j, ci) = acc;
      }
  return out;
}

DwConv::DwConv(std::size_t c, std::size_t w, std::uint64_t seed) : channels(c), width(w) {
  check_arg(c >= 1, "DwConv: channels must be positive");
  check_arg(w % 2 == 1, "DwConv: kernel width must be odd");
  kernels.init(c * w);
  bias.init(c);
  // Near-zero start: the surrounding residual block begins close to the
  // identity, and the tiny randomness keeps pooled channels free of exact
  // ties.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (double& v : kernels.value) v = u(rng);
}

Tensor3 DwConv::forward(const Tensor3& x, DwConvCache& cache) const {
  check_arg(x.d2 == channels, "DwConv::forward: channel mismatch");
  Matrix km(channels, width);
  km.data = kernels.value;
  Tensor3 y = dwconv_neighbors(x, km, bias.value);
  cache.x = x;
  cache.filled = true;
  return y;
}

Tensor3 DwConv::backward(const Tensor3& dy, const DwConvCache& cache) {
  check_usage(cache.filled, "DwConv::backward: no forward cache");
  const Tensor3& x = cache.x;
  const std::size_t g = x.d0, k = x.d1, c = x.d2;
  check_arg(dy.d0 == g && dy.d1 == k && dy.d2 == c, "DwConv::backward: shape mismatch");
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(width) / 2;
  Tensor3 dx(g, k, c);
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t ci = 0; ci < c; ++ci) {
        const double u = dy(gi, j, ci);
        if (u == 0.0) continue;
        bias.grad[ci] += u;
        for (std::size_t t = 0; t < width; ++t) {
          const std::ptrdiff_t src =
              static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(t) - half;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(k)) continue;
          kernels.grad[ci * width + t] += u * x(gi, static_cast<std::size_t>(src), ci);
          dx(gi, static_cast<std::size_t>(src), ci) += u * kernels.value[ci * width + t];
        }
      }
  return dx;
}

void DwConv::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".kernels", &kernels, true});
  out.push_back({prefix + ".bias", &bias, true});
}

// ---- PointwiseStack ----

namespace {
std::size_t clamp_groups(std::size_t requested, std::size_t width) {
  std::size_t g = std::min(std::max<std::size_t>(requested, 1), width);
  while (width % g != 0) --g;  // largest divisor not exceeding the request
  return g;
}
}  // namespace

PointwiseStack::PointwiseStack(const Spec& spec, std::uint64_t seed) : backend(spec.backend) {
  check_arg(spec.channels >= 1, "PointwiseStack: channels must be positive");
  check_arg(spec.depth >= 1, "PointwiseStack: depth must be positive");
  const std::size_t hidden =
      spec.hidden > 0 ? spec.hidden : std::max<std::size_t>(1, spec.channels / 2);

  std::vector<std::pair<std::size_t, std::size_t>> dims;
  if (spec.depth == 1) {
    dims.emplace_back(spec.channels, spec.channels);
  } else {
    dims.emplace_back(spec.channels, hidden);
    for (std::size_t i = 0; i + 2 < spec.depth; ++i) dims.emplace_back(hidden, hidden);
    dims.emplace_back(hidden, spec.channels);
  }

  for (std::size_t i = 0; i < dims.size(); ++i) {
    const std::uint64_t layer_seed = seed * 0x9e3779b97f4a7c15ull + i + 1;
    switch (backend) {
      case Backend::bspline:
        kan.emplace_back(dims[i].first, dims[i].second,
                         SplineGrid::uniform(-1.0, 1.0, spec.grid, spec.order), layer_seed);
        break;
      case Backend::rational:
        rational.emplace_back(dims[i].first, dims[i].second,
                              clamp_groups(spec.groups, dims[i].first), spec.m, spec.n,
                              layer_seed);
        break;
      case Backend::mlp:
        linear.emplace_back(dims[i].first, dims[i].second, layer_seed);
        break;
    }
  }
}

Matrix PointwiseStack::forward(const Matrix& x, StackCache& cache) const {
  Matrix cur = x;
  switch (backend) {
    case Backend::bspline:
      cache.kan.resize(kan.size());
      for (std::size_t i = 0; i < kan.size(); ++i) cur = kan[i].forward(cur, cache.kan[i]);
      break;
    case Backend::rational:
      cache.rational.resize(rational.size());
      for (std::size_t i = 0; i < rational.size(); ++i)
        cur = rational[i].forward(cur, cache.rational[i]);
      break;
    case Backend::mlp:
      cache.linear.resize(linear.size());
      cache.relu.resize(linear.size() > 0 ? linear.size() - 1 : 0);
      for (std::size_t i = 0; i < linear.size(); ++i) {
        cur = linear[i].forward(cur, cache.linear[i]);
        if (i + 1 < linear.size()) cur = relu(cur, cache.relu[i]);
      }
      break;
  }
  cache.filled = true;
  return cur;
}

Matrix PointwiseStack::backward(const Matrix& dy, const StackCache& cache) {
  check_usage(cache.filled, "PointwiseStack::backward: no forward cache");
  Matrix cur = dy;
  switch (backend) {
    case Backend::bspline:
      for (std::size_t i = kan.size(); i-- > 0;) cur = kan[i].backward(cur, cache.kan[i]);
      break;
    case Backend::rational:
      for (std::size_t i = rational.size(); i-- > 0;)
        cur = rational[i].backward(cur, cache.rational[i]);
      break;
    case Backend::mlp:
      for (std::size_t i = linear.size(); i-- > 0;) {
        if (i + 1 < linear.size()) cur = relu_backward(cur, cache.relu[i]);
        cur = linear[i].backward(cur, cache.linear[i]);
      }
      break;
  }
  return cur;
}

void PointwiseStack::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < kan.size(); ++i)
    kan[i].collect(out, prefix + ".kan" + std::to_string(i));
  for (std::size_t i = 0; i < rational.size(); ++i)
    rational[i].collect(out, prefix + ".rational" + std::to_string(i));
  for (std::size_t i = 0; i < linear.size(); ++i)
    linear[i].collect(out, prefix + ".linear" + std::to_string(i));
}

// ---- Lfp ----

Lfp::Lfp(const PointwiseStack::Spec& spec, std::size_t dw_width, bool use_dw, std::uint64_t seed)
    : stack(spec, seed),
      dw(spec.channels, dw_width, seed ^ 0xabcdef1234567890ull),
      use_dwconv(use_dw) {}

Tensor3 Lfp::forward(const Tensor3& x, LfpCache& cache) const {
  cache.g = x.d0;
  cache.k = x.d1;
  cache.c = x.d2;
  Matrix rows(x.d0 * x.d1, x.d2);
  rows.data = x.data;
  Matrix phi = stack.forward(rows, cache.stack);
  check_arg(phi.cols == x.d2, "Lfp::forward: stack must preserve the channel width");

  Tensor3 out(x.d0, x.d1, x.d2);
  if (use_dwconv) {
    Tensor3 phi_t(x.d0, x.d1, x.d2);
    phi_t.data = phi.data;
    Tensor3 conv = dw.forward(phi_t, cache.dw);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] + conv.data[i];
  } else {
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] + phi.data[i];
  }
  cache.filled = true;
  return out;
}

Tensor3 Lfp::backward(const Tensor3& dy, const LfpCache& cache) {
  check_usage(cache.filled, "Lfp::backward: no forward cache");
  check_arg(dy.d0 == cache.g && dy.d1 == cache.k && dy.d2 == cache.c,
            "Lfp::backward: shape mismatch");
  Matrix d_phi(cache.g * cache.k, cache.c);
  if (use_dwconv) {
    Tensor3 d_conv = dw.backward(dy, cache.dw);
    d_phi.data = d_conv.data;
  } else {
    d_phi.data = dy.data;
  }
  Matrix d_rows = stack.backward(d_phi, cache.stack);
  Tensor3 dx(cache.g, cache.k, cache.c);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = dy.data[i] + d_rows.data[i];
  return dx;
}

void Lfp::collect(ParamList& out, const std::string& prefix) {
  stack.collect(out, prefix + ".stack");
  if (use_dwconv) dw.collect(out, prefix + ".dwconv");
}

// ---- ResPBlock ----

ResPBlock::ResPBlock(std::size_t dim, std::uint64_t seed)
    : lin1(dim, dim, seed), lin2(dim, dim, seed ^ 0x5bd1e995u), bn(dim) {
  // Identity start: the residual branch fades in as lin2 grows.
  std::fill(lin2.weight.value.begin(), lin2.weight.value.end(), 0.0);
}

Matrix ResPBlock::forward(const Matrix& x, bool training, bool update_stats, ResPCache& cache) {
  Matrix h = lin1.forward(x, cache.lin1);
  h = bn.forward(h, training, update_stats, cache.bn);
  h = relu(h, cache.relu);
  h = lin2.forward(h, cache.lin2);
  for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] += x.data[i];
  cache.filled = true;
  return h;
}

Matrix ResPBlock::backward(const Matrix& dy, const ResPCache& cache) {
  check_usage(cache.filled, "ResPBlock::backward: no forward cache");
  Matrix d = lin2.backward(dy, cache.lin2);
  d = relu_backward(d, cache.relu);
  d = bn.backward(d, cache.bn);
  Matrix dx = lin1.backward(d, cache.lin1);
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dy.data[i];
  return dx;
}

void ResPBlock::collect(ParamList& out, const std::string& prefix) {
  lin1.collect(out, prefix + ".lin1");
  bn.collect(out, prefix + ".bn");
  lin2.collect(out, prefix + ".lin2");
}

}  // namespace pointkan
