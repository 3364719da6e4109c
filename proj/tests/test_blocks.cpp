#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pointkan/blocks.hpp"
#include "pointkan/model.hpp"

using namespace pointkan;

namespace {

double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

Tensor3 random_t3(std::size_t a, std::size_t b, std::size_t c, std::uint64_t seed,
                  double extent = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  Tensor3 t(a, b, c);
  for (double& v : t.data) v = u(rng);
  return t;
}

Matrix random_mat(std::size_t r, std::size_t c, std::uint64_t seed, double extent = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-extent, extent);
  Matrix m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

}  // namespace

TEST_CASE("group_norm_affine: degenerate group emits (beta, center)") {
  const std::size_t g = 1, k = 3, d = 2;
  GroupNormAffine gn(d, true);
  gn.beta.value = {0.25, -0.5, 0.0, 0.0};
  Matrix centers(g, d);
  centers(0, 0) = 1.5;
  centers(0, 1) = -2.0;
  Tensor3 neigh(g, k, d);
  for (std::size_t j = 0; j < k; ++j) {
    neigh(0, j, 0) = 1.5;
    neigh(0, j, 1) = -2.0;
  }
  GroupNormCache cache;
  Tensor3 out = gn.forward(neigh, centers, cache);
  for (std::size_t j = 0; j < k; ++j) {
    CHECK(out(0, j, 0) == 0.25);
    CHECK(out(0, j, 1) == -0.5);
    CHECK(out(0, j, 2) == 1.5);
    CHECK(out(0, j, 3) == -2.0);
  }
}

TEST_CASE("group_norm_affine: K=2 d=1 deviations of unit variance") {
  GroupNormAffine gn(1, true);
  Matrix centers(1, 1);
  centers(0, 0) = 0.0;
  Tensor3 neigh(1, 2, 1);
  neigh(0, 0, 0) = -1.0;
  neigh(0, 1, 0) = 1.0;
  GroupNormCache cache;
  Tensor3 out = gn.forward(neigh, centers, cache);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(out(0, 0, 0) == doctest::Approx(-expect).epsilon(1e-14));
  CHECK(out(0, 1, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("group_norm_affine: output width is 2d") {
  for (std::size_t d : {1u, 3u, 5u}) {
    GroupNormAffine gn(d, true);
    Tensor3 neigh = random_t3(2, 4, d, d);
    Matrix centers = random_mat(2, d, d + 10);
    GroupNormCache cache;
    Tensor3 out = gn.forward(neigh, centers, cache);
    CHECK(out.d2 == 2 * d);
    CHECK(out.d0 == 2);
    CHECK(out.d1 == 4);
  }
}

TEST_CASE("group_norm_affine: normalized slice has variance Var/(Var+eps)") {
  const std::size_t g = 3, k = 6, d = 4;
  GroupNormAffine gn(d, false);  // identity affine isolates the normalization
  Tensor3 neigh = random_t3(g, k, d, 99, 3.0);
  Matrix centers = random_mat(g, d, 17, 3.0);
  GroupNormCache cache;
  Tensor3 out = gn.forward(neigh, centers, cache);
  for (std::size_t gi = 0; gi < g; ++gi) {
    double mean = 0.0, var_in = 0.0;
    const double n = static_cast<double>(k * d);
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) mean += neigh(gi, j, t) - centers(gi, t);
    mean /= n;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        const double dev = neigh(gi, j, t) - centers(gi, t) - mean;
        var_in += dev * dev;
      }
    var_in /= n;

    double m2 = 0.0, m1 = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) m1 += out(gi, j, t);
    m1 /= n;
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        const double dev = out(gi, j, t) - m1;
        m2 += dev * dev;
      }
    m2 /= n;
    CHECK(m2 == doctest::Approx(var_in / (var_in + 1e-5)).epsilon(1e-6));
  }
}

TEST_CASE("group_norm_affine: gradients match finite differences") {
  const std::size_t g = 2, k = 3, d = 2;
  GroupNormAffine gn(d, true);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : gn.alpha.value) v = 1.0 + 0.3 * u(rng);
  for (double& v : gn.beta.value) v = 0.3 * u(rng);
  Tensor3 neigh = random_t3(g, k, d, 31);
  Matrix centers = random_mat(g, d, 32);
  std::vector<double> w(g * k * 2 * d);
  for (double& v : w) v = u(rng);

  auto loss = [&] {
    GroupNormCache c;
    Tensor3 y = gn.forward(neigh, centers, c);
    double L = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
    return L;
  };

  gn.alpha.zero_grad();
  gn.beta.zero_grad();
  GroupNormCache cache;
  gn.forward(neigh, centers, cache);
  Tensor3 up(g, k, 2 * d);
  std::copy(w.begin(), w.end(), up.data.begin());
  Tensor3 dn;
  Matrix dc;
  gn.backward(up, cache, dn, dc);

  for (std::size_t i = 0; i < neigh.data.size(); ++i) {
    const double fd = oracle::central_diff(loss, neigh.data[i], 1e-5);
    CHECK(rel_err(fd, dn.data[i]) < 1e-5);
  }
  for (std::size_t i = 0; i < centers.data.size(); ++i) {
    const double fd = oracle::central_diff(loss, centers.data[i], 1e-5);
    CHECK(rel_err(fd, dc.data[i]) < 1e-5);
  }
  for (std::size_t i = 0; i < gn.alpha.value.size(); ++i) {
    const double fd = oracle::central_diff(loss, gn.alpha.value[i], 1e-5);
    CHECK(rel_err(fd, gn.alpha.grad[i]) < 1e-5);
  }
  // The inert upper half of alpha/beta must see zero gradient.
  for (std::size_t t = d; t < 2 * d; ++t) {
    CHECK(gn.alpha.grad[t] == 0.0);
    CHECK(gn.beta.grad[t] == 0.0);
  }
}

TEST_CASE("s_pool: equal neighbor values pass through") {
  Tensor3 x(2, 4, 3);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t c = 0; c < 3; ++c) x(g, j, c) = 0.7 * static_cast<double>(c + 1);
  SPoolCache cache;
  Matrix out = s_pool(x, cache);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t c = 0; c < 3; ++c)
      CHECK(out(g, c) == doctest::Approx(0.7 * static_cast<double>(c + 1)).epsilon(1e-15));
}

TEST_CASE("s_pool: K=1 is the identity") {
  Tensor3 x = random_t3(3, 1, 5, 8);
  SPoolCache cache;
  Matrix out = s_pool(x, cache);
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t c = 0; c < 5; ++c) CHECK(out(g, c) == x(g, 0, c));
}

TEST_CASE("s_pool: two-value example weights 1/4 and 3/4") {
  Tensor3 x(1, 2, 1);
  x(0, 0, 0) = 0.0;
  x(0, 1, 0) = std::log(3.0);
  SPoolCache cache;
  Matrix out = s_pool(x, cache);
  CHECK(cache.weights(0, 0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(cache.weights(0, 1, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(out(0, 0) == doctest::Approx(0.75 * std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("s_pool: invariant under K-axis permutation") {
  Tensor3 x = random_t3(4, 7, 6, 21, 2.0);
  SPoolCache c1;
  Matrix a = s_pool(x, c1);
  std::mt19937_64 rng(3);
  std::vector<std::size_t> perm(7);
  for (std::size_t i = 0; i < 7; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor3 y(4, 7, 6);
  for (std::size_t g = 0; g < 4; ++g)
    for (std::size_t j = 0; j < 7; ++j)
      for (std::size_t ci = 0; ci < 6; ++ci) y(g, perm[j], ci) = x(g, j, ci);
  SPoolCache c2;
  Matrix b = s_pool(y, c2);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-9);
}

TEST_CASE("s_pool: backward matches finite differences") {
  Tensor3 x = random_t3(2, 3, 2, 44);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(2 * 2);
  for (double& v : w) v = u(rng);
  auto loss = [&] {
    SPoolCache c;
    Matrix y = s_pool(x, c);
    double L = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
    return L;
  };
  SPoolCache cache;
  s_pool(x, cache);
  Matrix up(2, 2);
  std::copy(w.begin(), w.end(), up.data.begin());
  Tensor3 dx = s_pool_backward(up, cache);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double fd = oracle::central_diff(loss, x.data[i], 1e-6);
    CHECK(rel_err(fd, dx.data[i]) < 1e-5);
  }
}

TEST_CASE("dwconv_neighbors: delta kernel is the identity") {
  Tensor3 x = random_t3(2, 5, 3, 7);
  Matrix kernels(3, 3);
  for (std::size_t c = 0; c < 3; ++c) kernels(c, 1) = 1.0;
  std::vector<double> bias(3, 0.0);
  Tensor3 y = dwconv_neighbors(x, kernels, bias);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("dwconv_neighbors: zero kernels emit the bias") {
  Tensor3 x = random_t3(2, 4, 2, 12);
  Matrix kernels(2, 3);
  std::vector<double> bias = {0.5, -1.25};
  Tensor3 y = dwconv_neighbors(x, kernels, bias);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(y(g, j, 0) == 0.5);
      CHECK(y(g, j, 1) == -1.25);
    }
}

TEST_CASE("dwconv_neighbors: hand-convolved box kernel") {
  Tensor3 x(1, 3, 1);
  x(0, 0, 0) = 1.0;
  x(0, 1, 0) = 2.0;
  x(0, 2, 0) = 3.0;
  Matrix kernels(1, 3);
  kernels(0, 0) = 1.0;
  kernels(0, 1) = 1.0;
  kernels(0, 2) = 1.0;
  std::vector<double> bias = {0.0};
  Tensor3 y = dwconv_neighbors(x, kernels, bias);
  CHECK(y(0, 0, 0) == 3.0);
  CHECK(y(0, 1, 0) == 6.0);
  CHECK(y(0, 2, 0) == 5.0);
}

TEST_CASE("dwconv: even kernel width is rejected") {
  Tensor3 x = random_t3(1, 3, 2, 1);
  Matrix kernels(2, 4);
  std::vector<double> bias(2, 0.0);
  CHECK_THROWS_AS(dwconv_neighbors(x, kernels, bias), std::invalid_argument);
  CHECK_THROWS_AS(DwConv(2, 4, 0), std::invalid_argument);
}

TEST_CASE("dwconv: backward matches finite differences") {
  DwConv dw(3, 3, 5);
  Tensor3 x = random_t3(2, 4, 3, 77);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : dw.kernels.value) v = u(rng);
  for (double& v : dw.bias.value) v = u(rng);
  std::vector<double> w(2 * 4 * 3);
  for (double& v : w) v = u(rng);
  auto loss = [&] {
    DwConvCache c;
    Tensor3 y = dw.forward(x, c);
    double L = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
    return L;
  };
  dw.kernels.zero_grad();
  dw.bias.zero_grad();
  DwConvCache cache;
  dw.forward(x, cache);
  Tensor3 up(2, 4, 3);
  std::copy(w.begin(), w.end(), up.data.begin());
  Tensor3 dx = dw.backward(up, cache);
  for (std::size_t i = 0; i < dw.kernels.value.size(); ++i)
    CHECK(rel_err(oracle::central_diff(loss, dw.kernels.value[i], 1e-5), dw.kernels.grad[i]) <
          1e-5);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(rel_err(oracle::central_diff(loss, x.data[i], 1e-5), dx.data[i]) < 1e-5);
}

TEST_CASE("lfp_forward: zero dwconv parameters give the exact identity") {
  PointwiseStack::Spec spec;
  spec.channels = 4;
  spec.depth = 3;
  spec.backend = Backend::bspline;
  Lfp lfp(spec, 3, true, 42);
  std::fill(lfp.dw.kernels.value.begin(), lfp.dw.kernels.value.end(), 0.0);
  std::fill(lfp.dw.bias.value.begin(), lfp.dw.bias.value.end(), 0.0);
  Tensor3 x = random_t3(3, 4, 4, 13, 2.0);
  LfpCache cache;
  Tensor3 y = lfp.forward(x, cache);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("lfp_forward: output shape equals input shape") {
  for (Backend b : {Backend::bspline, Backend::rational, Backend::mlp}) {
    PointwiseStack::Spec spec;
    spec.channels = 6;
    spec.backend = b;
    spec.groups = 2;
    Lfp lfp(spec, 3, true, 9);
    Tensor3 x = random_t3(2, 5, 6, 21);
    LfpCache cache;
    Tensor3 y = lfp.forward(x, cache);
    CHECK(y.d0 == 2);
    CHECK(y.d1 == 5);
    CHECK(y.d2 == 6);
  }
}

TEST_CASE("lfp_forward: matches the step-by-step compositional oracle") {
  PointwiseStack::Spec spec;
  spec.channels = 4;
  spec.depth = 3;
  spec.backend = Backend::bspline;
  spec.grid = 5;
  spec.order = 3;
  Lfp lfp(spec, 3, true, 31);
  {
    std::mt19937_64 krng(2);
    std::uniform_real_distribution<double> ku(-0.5, 0.5);
    for (double& v : lfp.dw.kernels.value) v = ku(krng);
    for (double& v : lfp.dw.bias.value) v = ku(krng);
  }
  const std::size_t g = 2, k = 3, c = 4;
  Tensor3 x = random_t3(g, k, c, 55);

  LfpCache cache;
  Tensor3 fused = lfp.forward(x, cache);

  // Oracle: per-point single-vector stack evaluation, then the free-function
  // convolution, then the residual sum.
  Tensor3 phi(g, k, c);
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t j = 0; j < k; ++j) {
      std::vector<double> v(x.slice(gi, j).begin(), x.slice(gi, j).end());
      for (const auto& layer : lfp.stack.kan) {
        KanCache kc;
        v = layer.forward(v, kc);
      }
      std::copy(v.begin(), v.end(), phi.slice(gi, j).begin());
    }
  Matrix kernels(c, 3);
  kernels.data = lfp.dw.kernels.value;
  Tensor3 conv = dwconv_neighbors(phi, kernels, lfp.dw.bias.value);
  for (std::size_t i = 0; i < fused.data.size(); ++i)
    CHECK(fused.data[i] == doctest::Approx(x.data[i] + conv.data[i]).epsilon(1e-12));
}

TEST_CASE("resp_block_forward: zero second linear is the identity") {
  ResPBlock block(3, 7);
  std::fill(block.lin2.weight.value.begin(), block.lin2.weight.value.end(), 0.0);
  std::fill(block.lin2.bias.value.begin(), block.lin2.bias.value.end(), 0.0);
  Matrix x = random_mat(5, 3, 2);
  ResPCache cache;
  Matrix y = block.forward(x, true, false, cache);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("resp_block_forward: eval with unit stats and identity maps doubles the input") {
  ResPBlock block(3, 7);
  // W1 = I, b1 = 0, W2 = I, b2 = 0, unit running statistics.
  std::fill(block.lin1.weight.value.begin(), block.lin1.weight.value.end(), 0.0);
  std::fill(block.lin2.weight.value.begin(), block.lin2.weight.value.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    block.lin1.weight.value[i * 3 + i] = 1.0;
    block.lin2.weight.value[i * 3 + i] = 1.0;
  }
  std::fill(block.bn.running_mean.value.begin(), block.bn.running_mean.value.end(), 0.0);
  std::fill(block.bn.running_var.value.begin(), block.bn.running_var.value.end(),
            1.0 - block.bn.eps);  // so 1/sqrt(var + eps) is exactly 1
  block.bn.seen.value[0] = 1.0;
  Matrix x(2, 3);
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = 0.25 * static_cast<double>(i);
  ResPCache cache;
  Matrix y = block.forward(x, false, false, cache);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-12));
}

TEST_CASE("resp_block_forward: eval before any statistics is a usage error") {
  ResPBlock block(4, 3);
  Matrix x = random_mat(2, 4, 5);
  ResPCache cache;
  CHECK_THROWS_AS(block.forward(x, false, false, cache), std::logic_error);
}

TEST_CASE("resp_block_forward: batch of 8 matches the compositional oracle") {
  ResPBlock block(4, 11);
  Matrix x = random_mat(8, 4, 23);
  ResPCache cache;
  Matrix y = block.forward(x, true, false, cache);

  // linear -> batch mean/var normalize -> scale-shift -> relu -> linear -> add
  LinCache lc;
  Matrix h = block.lin1.forward(x, lc);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 8; ++r) mean += h(r, c);
    mean /= 8.0;
    double var = 0.0;
    for (std::size_t r = 0; r < 8; ++r) var += (h(r, c) - mean) * (h(r, c) - mean);
    var /= 8.0;
    for (std::size_t r = 0; r < 8; ++r)
      h(r, c) = block.bn.gamma.value[c] * (h(r, c) - mean) / std::sqrt(var + 1e-5) +
                block.bn.beta.value[c];
  }
  for (double& v : h.data) v = std::max(v, 0.0);
  LinCache lc2;
  Matrix o = block.lin2.forward(h, lc2);
  for (std::size_t i = 0; i < o.data.size(); ++i) o.data[i] += x.data[i];
  for (std::size_t i = 0; i < o.data.size(); ++i)
    CHECK(y.data[i] == doctest::Approx(o.data[i]).epsilon(1e-12));
}

TEST_CASE("resp_block: training backward matches finite differences") {
  ResPBlock block(3, 19);
  Matrix x = random_mat(5, 3, 71);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(5 * 3);
  for (double& v : w) v = u(rng);
  auto loss = [&] {
    ResPCache c;
    Matrix y = block.forward(x, true, false, c);
    double L = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
    return L;
  };
  ParamList plist;
  block.collect(plist, "resp");
  for (auto& ref : plist) ref.param->zero_grad();
  ResPCache cache;
  block.forward(x, true, false, cache);
  Matrix up(5, 3);
  std::copy(w.begin(), w.end(), up.data.begin());
  Matrix dx = block.backward(up, cache);
  for (auto& ref : plist) {
    if (!ref.trainable) continue;
    for (std::size_t i = 0; i < ref.param->value.size(); ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(ref.param->value[i]));
      const double fd = oracle::central_diff(loss, ref.param->value[i], h);
      CHECK(rel_err(fd, ref.param->grad[i]) < 1e-5);
    }
  }
  for (std::size_t i = 0; i < x.data.size(); ++i)
    CHECK(rel_err(oracle::central_diff(loss, x.data[i], 1e-5), dx.data[i]) < 1e-5);
}

TEST_CASE("model: output length equals the class count") {
  ModelConfig cfg;
  cfg.points = 32;
  cfg.embed_dim = 4;
  cfg.classes = 5;
  cfg.num_stages = 2;
  cfg.stage_centers = {16, 8, 4, 2};
  cfg.stage_neighbors = {4, 4, 4, 4};
  cfg.grid_size = 3;
  cfg.spline_order = 2;
  cfg.resp_blocks = 1;
  Model model(cfg, 1);
  auto cloud = oracle::random_cloud(32, 5);
  ModelCache cache;
  auto scores = model.forward(cloud, true, false, cache);
  CHECK(scores.size() == 5);
}

TEST_CASE("model: deterministic scores and permutation invariance") {
  ModelConfig cfg;
  cfg.points = 48;
  cfg.embed_dim = 4;
  cfg.classes = 3;
  cfg.num_stages = 2;
  cfg.stage_centers = {16, 8, 4, 2};
  cfg.stage_neighbors = {6, 4, 4, 4};
  cfg.grid_size = 3;
  cfg.spline_order = 2;
  cfg.resp_blocks = 1;
  Model model(cfg, 33);
  auto cloud = oracle::random_cloud(48, 91);
  model.warm_stats(cloud);

  ModelCache c1, c2;
  auto s1 = model.forward(cloud, false, false, c1);
  auto s2 = model.forward(cloud, false, false, c2);
  CHECK(s1 == s2);  // bit-identical

  std::mt19937_64 rng(4);
  std::vector<std::size_t> perm(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud shuffled;
  shuffled.points.resize(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.points[perm[i]] = cloud.points[i];
  ModelCache c3;
  auto s3 = model.forward(shuffled, false, false, c3);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(std::abs(s1[i] - s3[i]) <= 1e-6);
}

TEST_CASE("model: ablation toggles change the trainable count by the block sizes") {
  ModelConfig cfg;
  cfg.points = 32;
  cfg.embed_dim = 4;
  cfg.classes = 3;
  cfg.num_stages = 2;
  cfg.stage_centers = {16, 8, 4, 2};
  cfg.stage_neighbors = {4, 4, 4, 4};
  cfg.grid_size = 3;
  cfg.spline_order = 2;
  cfg.resp_blocks = 1;
  Model base(cfg, 7);
  const std::size_t full = base.trainable_param_count();

  // Affine: alpha and beta are 2*(2*width) scalars per stage.
  ModelConfig no_affine = cfg;
  no_affine.gam_affine = false;
  std::size_t affine_params = 0;
  for (const auto& sc : cfg.stage_configs()) affine_params += 2 * (2 * sc.width);
  CHECK(Model(no_affine, 7).trainable_param_count() == full - affine_params);

  // DwConv: channels*(width+1) per stage.
  ModelConfig no_dw = cfg;
  no_dw.dwconv = false;
  std::size_t dw_params = 0;
  for (const auto& sc : cfg.stage_configs())
    dw_params += 2 * sc.width * (sc.dwconv_kernel + 1);
  CHECK(Model(no_dw, 7).trainable_param_count() == full - dw_params);

  // S-Pool carries no parameters.
  ModelConfig no_sp = cfg;
  no_sp.s_pool = false;
  CHECK(Model(no_sp, 7).trainable_param_count() == full);

  // GFP: each ResP block holds two square linears plus batch-norm affine.
  ModelConfig no_gfp = cfg;
  no_gfp.gfp = false;
  std::size_t gfp_params = 0;
  for (const auto& sc : cfg.stage_configs()) {
    const std::size_t c = 2 * sc.width;
    gfp_params += cfg.resp_blocks * (2 * (c * c + c) + 2 * c);
  }
  CHECK(Model(no_gfp, 7).trainable_param_count() == full - gfp_params);

  // LFP off removes the whole stack and its convolution.
  ModelConfig no_lfp = cfg;
  no_lfp.lfp = false;
  std::size_t lfp_params = 0;
  for (const auto& sc : cfg.stage_configs()) {
    const std::size_t c = 2 * sc.width;
    const std::size_t h = sc.kan_hidden;
    const std::size_t nb = cfg.grid_size + cfg.spline_order;
    const auto edge = [&](std::size_t a, std::size_t b) { return a * b * (nb + 2) + b; };
    lfp_params += edge(c, h) + edge(h, h) + edge(h, c);  // kan_depth = 3
    lfp_params += c * (sc.dwconv_kernel + 1);
  }
  CHECK(Model(no_lfp, 7).trainable_param_count() == full - lfp_params);
}

TEST_CASE("sensitivity_scores: nonnegative, zero off-group, percentile flags") {
  ModelConfig cfg;
  cfg.points = 40;
  cfg.embed_dim = 4;
  cfg.classes = 3;
  cfg.num_stages = 2;
  cfg.stage_centers = {8, 4, 2, 1};
  cfg.stage_neighbors = {3, 3, 2, 1};
  cfg.grid_size = 3;
  cfg.spline_order = 2;
  cfg.resp_blocks = 1;
  Model model(cfg, 3);
  auto cloud = oracle::random_cloud(40, 8);
  auto scores = model.sensitivity_scores(cloud);
  REQUIRE(scores.size() == 40);
  for (double s : scores) CHECK(s >= 0.0);
  // 8 groups x 3 neighbors = 24 slots at most; some of 40 points must be
  // outside every group and score exactly zero.
  std::size_t zeros = 0;
  for (double s : scores)
    if (s == 0.0) ++zeros;
  CHECK(zeros >= 40 - 24);

  auto flags = sensitivity_flags(scores, 80.0);
  std::size_t marked = 0;
  for (int f : flags) marked += static_cast<std::size_t>(f);
  CHECK(marked == 8);  // ceil(0.2 * 40)

  // Ties break by index: duplicate scores must mark the earliest indices.
  std::vector<double> tied = {1.0, 3.0, 3.0, 3.0, 0.0};
  auto tf = sensitivity_flags(tied, 80.0);
  CHECK(tf == std::vector<int>{0, 1, 0, 0, 0});
}
