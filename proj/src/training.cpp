#include "pointkan/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace pointkan {

std::size_t Dataset::num_classes() const {
  if (!class_names.empty()) return class_names.size();
  int max_label = -1;
  for (const auto& s : samples) max_label = std::max(max_label, s.label);
  return static_cast<std::size_t>(max_label + 1);
}

CrossEntropyResult cross_entropy(std::span<const double> scores, std::size_t label) {
  check_arg(!scores.empty(), "cross_entropy: empty score vector");
  check_arg(label < scores.size(), "cross_entropy: label " + std::to_string(label) +
                                       " out of range for " + std::to_string(scores.size()) +
                                       " classes");
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  CrossEntropyResult out;
  out.loss = -(scores[label] - mx - std::log(z));
  out.grad.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.grad[i] = std::exp(scores[i] - mx) / z;
    if (i == label) out.grad[i] -= 1.0;
  }
  return out;
}

double Optimizer::lr_at(std::size_t epoch) const {
  const double t = std::min(static_cast<double>(epoch), static_cast<double>(cfg_.total_epochs));
  const double T = static_cast<double>(std::max<std::size_t>(cfg_.total_epochs, 1));
  return cfg_.lr_min + 0.5 * (cfg_.lr0 - cfg_.lr_min) * (1.0 + std::cos(M_PI * t / T));
}

void Optimizer::step(const ParamList& params, std::size_t epoch) {
  if (m1_.empty()) {
    for (const auto& ref : params)
      m1_.emplace_back(ref.trainable ? ref.param->size() : 0, 0.0);
    if (cfg_.kind == OptimizerKind::adam)
      for (const auto& ref : params)
        m2_.emplace_back(ref.trainable ? ref.param->size() : 0, 0.0);
  }
  check_arg(m1_.size() == params.size(), "Optimizer::step: parameter list changed size");
  const double lr = lr_at(epoch);

  if (cfg_.kind == OptimizerKind::adam) ++adam_t_;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (!params[b].trainable) continue;
    Param& p = *params[b].param;
    check_arg(m1_[b].size() == p.size(), "Optimizer::step: shape mismatch in block " +
                                             params[b].name);
    if (cfg_.kind == OptimizerKind::sgd_momentum) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        m1_[b][i] = cfg_.momentum * m1_[b][i] + p.grad[i];
        p.value[i] -= lr * m1_[b][i];
      }
    } else {
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(adam_t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(adam_t_));
      for (std::size_t i = 0; i < p.size(); ++i) {
        m1_[b][i] = cfg_.beta1 * m1_[b][i] + (1.0 - cfg_.beta1) * p.grad[i];
        m2_[b][i] = cfg_.beta2 * m2_[b][i] + (1.0 - cfg_.beta2) * p.grad[i] * p.grad[i];
        const double mhat = m1_[b][i] / c1;
        const double vhat = m2_[b][i] / c2;
        p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }
}

// ---- gradient checking ----

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Checks sampled coordinates of one parameter block against central
// differences of `loss`.
template <typename LossFn>
GradCheckBlock check_block(const std::string& name, std::vector<double>& values,
                           const std::vector<double>& grads, LossFn&& loss, double tol,
                           std::uint64_t seed, std::size_t coords) {
  GradCheckBlock out;
  out.name = name;
  if (values.empty()) return out;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (values.size() > coords) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(coords);
  }
  for (std::size_t i : idx) {
    const double saved = values[i];
    const double h = 1e-5 * std::max(1.0, std::abs(saved));
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    out.max_rel_err = std::max(out.max_rel_err, rel_err(fd, grads[i]));
  }
  out.pass = out.max_rel_err < tol;
  return out;
}

void merge(GradCheckReport& report, GradCheckBlock block) {
  report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
  report.pass = report.pass && block.pass;
  report.blocks.push_back(std::move(block));
}

std::vector<double> probe(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (double& v : w) v = u(rng);
  return w;
}

Matrix random_mat(std::size_t r, std::size_t c, std::mt19937_64& rng, double extent = 1.5) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Matrix m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

Tensor3 random_t3(std::size_t a, std::size_t b, std::size_t c, std::mt19937_64& rng,
                  double extent = 1.5) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Tensor3 t(a, b, c);
  for (double& v : t.data) v = u(rng);
  return t;
}

// Moves every trainable parameter to a generic position. Zero-initialized
// biases can park ReLU pre-activations exactly on the kink, where central
// differences disagree with the subgradient. Rational denominators can be
// kept at zero: a steep Q makes the h^2 truncation term of the central
// difference itself exceed the tolerance in deep compositions, and the
// denominator formulas are checked with fully random coefficients at layer
// level.
void jitter_params(const ParamList& params, std::mt19937_64& rng, bool skip_denominators,
                   double magnitude = 0.05) {
  std::uniform_real_distribution<double> u(-magnitude, magnitude);
  for (const auto& ref : params) {
    if (!ref.trainable) continue;
    if (skip_denominators && ref.name.ends_with(".denominator")) continue;
    for (double& v : ref.param->value) v += u(rng);
  }
}

}  // namespace

GradCheckReport grad_check(Model& model, const PointCloud& input, std::size_t label,
                           double tolerance, std::uint64_t seed,
                           std::size_t coords_per_block) {
  GradCheckReport report;
  report.tolerance = tolerance;

  // Seed the running statistics once, then keep batch norm frozen in
  // evaluation mode so the loss is a deterministic function of parameters.
  model.warm_stats(input);

  auto loss = [&] {
    ModelCache cache;
    auto scores = model.forward(input, false, false, cache);
    return cross_entropy(scores, label).loss;
  };

  model.zero_grad();
  ModelCache cache;
  auto scores = model.forward(input, false, false, cache);
  auto ce = cross_entropy(scores, label);
  model.backward(ce.grad, cache);

  std::size_t salt = 0;
  for (auto& ref : model.params()) {
    if (!ref.trainable) continue;
    merge(report, check_block(ref.name, ref.param->value, ref.param->grad, loss, tolerance,
                              seed ^ (0x517cc1b727220a95ull * ++salt), coords_per_block));
  }
  return report;
}

GradCheckReport gradcheck_battery(double tolerance, std::uint64_t seed) {
  GradCheckReport report;
  report.tolerance = tolerance;
  std::mt19937_64 rng(seed);
  auto dim = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  // B-spline KAN layers.
  for (int t = 0; t < 16; ++t) {
    const std::size_t din = dim(1, 5), dout = dim(1, 4);
    const std::size_t grid = dim(3, 6), order = dim(1, 3);
    KanLayer layer(din, dout, SplineGrid::uniform(-1.0, 1.0, grid, order), rng());
    Matrix x = random_mat(2, din, rng);
    auto w = probe(2 * dout, rng);
    auto loss = [&] {
      KanCache c;
      Matrix y = layer.forward(x, c);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    layer.zero_grads();
    KanCache c;
    layer.forward(x, c);
    Matrix up(2, dout);
    std::copy(w.begin(), w.end(), up.data.begin());
    Matrix dx = layer.backward(up, c);
    const std::string tag = "kan[" + std::to_string(t) + "]";
    merge(report, check_block(tag + ".spline_coeffs", layer.spline_coeffs.value,
                              layer.spline_coeffs.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".scale_base", layer.scale_base.value,
                              layer.scale_base.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".scale_spline", layer.scale_spline.value,
                              layer.scale_spline.grad, loss, tolerance, rng(), 20));
    merge(report,
          check_block(tag + ".bias", layer.bias.value, layer.bias.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".input", x.data, dx.data, loss, tolerance, rng(), 20));
  }

  // Rational layers (validates the explicit gradient formulas).
  for (int t = 0; t < 16; ++t) {
    const std::size_t din = dim(1, 4) * 2, dout = dim(1, 4);
    const std::size_t groups = din % 4 == 0 && t % 2 == 0 ? 4 : 2;
    const std::size_t m = dim(1, 6), n = dim(0, 4);
    RationalGroupLayer layer(din, dout, groups, m, n, rng());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : layer.numerator.value) v = u(rng);
    for (double& v : layer.denominator.value) v = u(rng);
    Matrix x = random_mat(2, din, rng);
    auto w = probe(2 * dout, rng);
    auto loss = [&] {
      RationalCache c;
      Matrix y = layer.forward(x, c);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    layer.zero_grads();
    RationalCache c;
    layer.forward(x, c);
    Matrix up(2, dout);
    std::copy(w.begin(), w.end(), up.data.begin());
    Matrix dx = layer.backward(up, c);
    const std::string tag = "rational[" + std::to_string(t) + "]";
    merge(report, check_block(tag + ".numerator", layer.numerator.value, layer.numerator.grad,
                              loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".denominator", layer.denominator.value,
                              layer.denominator.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".weight", layer.weight.value, layer.weight.grad, loss,
                              tolerance, rng(), 20));
    merge(report,
          check_block(tag + ".bias", layer.bias.value, layer.bias.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".input", x.data, dx.data, loss, tolerance, rng(), 20));
  }

  // Group-Norm with affine.
  for (int t = 0; t < 14; ++t) {
    const std::size_t g = dim(1, 3), k = dim(2, 5), d = dim(1, 4);
    GroupNormAffine gn(d, t % 3 != 2);
    if (gn.learnable) {
      std::uniform_real_distribution<double> u(0.5, 1.5);
      for (double& v : gn.alpha.value) v = u(rng);
      for (double& v : gn.beta.value) v = u(rng) - 1.0;
    }
    Tensor3 x = random_t3(g, k, d, rng);
    Matrix centers = random_mat(g, d, rng);
    auto w = probe(g * k * 2 * d, rng);
    auto loss = [&] {
      GroupNormCache c;
      Tensor3 y = gn.forward(x, centers, c);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    if (gn.learnable) {
      gn.alpha.zero_grad();
      gn.beta.zero_grad();
    }
    GroupNormCache c;
    gn.forward(x, centers, c);
    Tensor3 up(g, k, 2 * d);
    std::copy(w.begin(), w.end(), up.data.begin());
    Tensor3 dx;
    Matrix dc;
    gn.backward(up, c, dx, dc);
    const std::string tag = "group_norm[" + std::to_string(t) + "]";
    if (gn.learnable) {
      merge(report, check_block(tag + ".alpha", gn.alpha.value, gn.alpha.grad, loss, tolerance,
                                rng(), 20));
      merge(report,
            check_block(tag + ".beta", gn.beta.value, gn.beta.grad, loss, tolerance, rng(), 20));
    }
    merge(report, check_block(tag + ".neighbors", x.data, dx.data, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".centers", centers.data, dc.data, loss, tolerance, rng(), 20));
  }

  // S-Pool (input gradients; the operation has no parameters).
  for (int t = 0; t < 12; ++t) {
    const std::size_t g = dim(1, 3), k = dim(1, 6), c = dim(1, 5);
    Tensor3 x = random_t3(g, k, c, rng);
    auto w = probe(g * c, rng);
    auto loss = [&] {
      SPoolCache sc;
      Matrix y = s_pool(x, sc);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    SPoolCache sc;
    s_pool(x, sc);
    Matrix up(g, c);
    std::copy(w.begin(), w.end(), up.data.begin());
    Tensor3 dx = s_pool_backward(up, sc);
    merge(report, check_block("s_pool[" + std::to_string(t) + "].input", x.data, dx.data, loss,
                              tolerance, rng(), 20));
  }

  // Depthwise convolution.
  for (int t = 0; t < 12; ++t) {
    const std::size_t g = dim(1, 3), k = dim(1, 6), c = dim(1, 4);
    const std::size_t width = 2 * dim(0, 2) + 1;
    DwConv dw(c, width, rng());
    {
      std::uniform_real_distribution<double> ku(-1.0, 1.0);
      for (double& v : dw.kernels.value) v = ku(rng);
      for (double& v : dw.bias.value) v = ku(rng);
    }
    Tensor3 x = random_t3(g, k, c, rng);
    auto w = probe(g * k * c, rng);
    auto loss = [&] {
      DwConvCache dc;
      Tensor3 y = dw.forward(x, dc);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    dw.kernels.zero_grad();
    dw.bias.zero_grad();
    DwConvCache dc;
    dw.forward(x, dc);
    Tensor3 up(g, k, c);
    std::copy(w.begin(), w.end(), up.data.begin());
    Tensor3 dx = dw.backward(up, dc);
    const std::string tag = "dwconv[" + std::to_string(t) + "]";
    merge(report,
          check_block(tag + ".kernels", dw.kernels.value, dw.kernels.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".bias", dw.bias.value, dw.bias.grad, loss, tolerance, rng(), 20));
    merge(report, check_block(tag + ".input", x.data, dx.data, loss, tolerance, rng(), 20));
  }

  // Full LFP blocks across the three backends.
  for (int t = 0; t < 12; ++t) {
    PointwiseStack::Spec spec;
    spec.channels = 2 * dim(1, 3);
    spec.depth = dim(1, 3);
    spec.backend = t % 3 == 0 ? Backend::bspline : (t % 3 == 1 ? Backend::rational : Backend::mlp);
    spec.grid = 4;
    spec.order = 2;
    spec.m = 4;
    spec.n = 3;
    spec.groups = 2;
    Lfp lfp(spec, 3, t % 4 != 1, rng());
    {
      ParamList jl;
      lfp.collect(jl, "jitter");
      jitter_params(jl, rng, false);
    }
    const std::size_t g = dim(1, 2), k = dim(2, 4);
    Tensor3 x = random_t3(g, k, spec.channels, rng, 1.0);
    auto w = probe(g * k * spec.channels, rng);
    auto loss = [&] {
      LfpCache c;
      Tensor3 y = lfp.forward(x, c);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    ParamList plist;
    lfp.collect(plist, "lfp[" + std::to_string(t) + "]");
    for (auto& ref : plist) ref.param->zero_grad();
    LfpCache c;
    lfp.forward(x, c);
    Tensor3 up(g, k, spec.channels);
    std::copy(w.begin(), w.end(), up.data.begin());
    Tensor3 dx = lfp.backward(up, c);
    for (auto& ref : plist)
      merge(report,
            check_block(ref.name, ref.param->value, ref.param->grad, loss, tolerance, rng(), 12));
    merge(report, check_block("lfp[" + std::to_string(t) + "].input", x.data, dx.data, loss,
                              tolerance, rng(), 12));
  }

  // ResP blocks, training and evaluation modes.
  for (int t = 0; t < 10; ++t) {
    const std::size_t d = dim(2, 6), rows = dim(3, 8);
    ResPBlock block(d, rng());
    {
      ParamList jl;
      block.collect(jl, "jitter");
      jitter_params(jl, rng, false);
    }
    Matrix x = random_mat(rows, d, rng);
    const bool training = t % 2 == 0;
    if (!training) {
      ResPCache warm;
      block.forward(x, true, true, warm);
    }
    auto w = probe(rows * d, rng);
    auto loss = [&] {
      ResPCache c;
      Matrix y = block.forward(x, training, false, c);
      double L = 0;
      for (std::size_t i = 0; i < y.data.size(); ++i) L += w[i] * y.data[i];
      return L;
    };
    ParamList plist;
    block.collect(plist, "resp[" + std::to_string(t) + "]");
    for (auto& ref : plist) ref.param->zero_grad();
    ResPCache c;
    block.forward(x, training, false, c);
    Matrix up(rows, d);
    std::copy(w.begin(), w.end(), up.data.begin());
    Matrix dx = block.backward(up, c);
    for (auto& ref : plist) {
      if (!ref.trainable) continue;
      merge(report,
            check_block(ref.name, ref.param->value, ref.param->grad, loss, tolerance, rng(), 12));
    }
    merge(report, check_block("resp[" + std::to_string(t) + "].input", x.data, dx.data, loss,
                              tolerance, rng(), 12));
  }

  // Two-stage miniature models end to end.
  for (int t = 0; t < 8; ++t) {
    ModelConfig cfg;
    cfg.points = 16;
    cfg.embed_dim = 3;
    cfg.classes = 3;
    cfg.num_stages = 2;
    cfg.stage_centers = {8, 4, 2, 1};
    cfg.stage_neighbors = {4, 3, 2, 1};
    cfg.grid_size = 3;
    cfg.spline_order = 2;
    cfg.kan_depth = 2;
    cfg.resp_blocks = 1;
    cfg.rational_groups = 2;
    // Low polynomial degrees keep the composition inside the regime where
    // an h = 1e-5 central difference is accurate to the tolerance; the
    // layer-level sweeps above cover the higher degrees.
    cfg.rational_degree_num = 3;
    cfg.rational_degree_den = 2;
    cfg.backend = t % 3 == 0 ? Backend::bspline : (t % 3 == 1 ? Backend::rational : Backend::mlp);
    cfg.gam_affine = t % 2 == 0;
    cfg.dwconv = t % 4 != 3;
    Model model(cfg, rng());
    {
      auto plist = model.params();
      jitter_params(plist, rng, true, 0.02);
    }

    PointCloud cloud;
    cloud.points.resize(16);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& p : cloud.points)
      for (double& v : p) v = u(rng);

    GradCheckReport sub = grad_check(model, cloud, t % 3, tolerance, rng(), 6);
    for (auto& b : sub.blocks) {
      b.name = "model2stage[" + std::to_string(t) + "]." + b.name;
      merge(report, std::move(b));
    }
  }

  return report;
}

// ---- training ----

namespace {

void sync_values(Model& dst, Model& src) {
  auto d = dst.params();
  auto s = src.params();
  for (std::size_t i = 0; i < d.size(); ++i) d[i].param->value = s[i].param->value;
}

}  // namespace

std::vector<EpochRecord> train(Model& model, const Dataset& train_set, const Dataset* test_set,
                               const TrainOptions& opts) {
  check_arg(!train_set.samples.empty(), "train: empty dataset");
  const std::size_t classes = model.config().classes;
  for (const auto& s : train_set.samples)
    check_arg(s.label >= 0 && static_cast<std::size_t>(s.label) < classes,
              "train: sample label out of range");
  check_arg(opts.batch_size >= 1, "train: batch size must be positive");

  Optimizer optimizer(opts.optimizer);
  std::mt19937_64 rng(opts.seed);
  const std::size_t n = train_set.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  // One worker clone per batch slot; gradients always reduce in slot order,
  // so results do not depend on the thread count.
  const std::size_t bs = std::min(opts.batch_size, n);
  std::vector<Model> clones(bs, model);
  std::vector<ModelCache> caches(bs);
  std::vector<double> losses(bs, 0.0);
  std::vector<char> correct(bs, 0);

  std::vector<EpochRecord> log;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_correct = 0;

    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      for (std::size_t i = 0; i < count; ++i) sync_values(clones[i], model);

      parallel_for(count, opts.threads, [&](std::size_t i) {
        const PointCloud& sample = train_set.samples[order[start + i]];
        Model& worker = clones[i];
        worker.zero_grad();
        caches[i] = ModelCache{};
        auto scores = worker.forward(sample, true, false, caches[i]);
        auto ce = cross_entropy(scores, static_cast<std::size_t>(sample.label));
        worker.backward(ce.grad, caches[i]);
        losses[i] = ce.loss;
        const std::size_t pred =
            std::max_element(scores.begin(), scores.end()) - scores.begin();
        correct[i] = pred == static_cast<std::size_t>(sample.label) ? 1 : 0;
      });

      // Deterministic reduction: slot 0, slot 1, ... regardless of threads.
      model.zero_grad();
      auto master = model.params();
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        auto worker = clones[i].params();
        for (std::size_t b = 0; b < master.size(); ++b) {
          if (!master[b].trainable) continue;
          auto& mg = master[b].param->grad;
          const auto& wg = worker[b].param->grad;
          for (std::size_t j = 0; j < mg.size(); ++j) mg[j] += wg[j] * inv;
        }
        model.fold_bn_stats(caches[i]);
        epoch_loss += losses[i];
        epoch_correct += correct[i];
      }
      optimizer.step(master, epoch);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = epoch_loss / static_cast<double>(n);
    rec.train_acc = static_cast<double>(epoch_correct) / static_cast<double>(n);
    rec.test_acc = test_set ? evaluate(model, *test_set).overall_acc
                            : evaluate(model, train_set).overall_acc;
    log.push_back(rec);
    if (opts.log)
      (*opts.log) << "epoch " << rec.epoch << " loss " << rec.loss << " train_acc "
                  << rec.train_acc << " test_acc " << rec.test_acc << "\n";
    if (opts.stop_at_test_acc >= 0.0 && rec.test_acc >= opts.stop_at_test_acc) break;
  }
  return log;
}

EvalResult accuracy_stats(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t classes) {
  check_arg(!labels.empty(), "accuracy_stats: empty label set");
  check_arg(predictions.size() == labels.size(), "accuracy_stats: size mismatch");
  std::vector<std::size_t> per_class_total(classes, 0), per_class_correct(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check_arg(labels[i] < classes, "accuracy_stats: label out of range");
    ++per_class_total[labels[i]];
    if (predictions[i] == labels[i]) {
      ++correct;
      ++per_class_correct[labels[i]];
    }
  }
  EvalResult out;
  out.overall_acc = static_cast<double>(correct) / static_cast<double>(labels.size());
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (per_class_total[c] == 0) continue;
    sum += static_cast<double>(per_class_correct[c]) / static_cast<double>(per_class_total[c]);
    ++present;
  }
  out.mean_class_acc = present > 0 ? sum / static_cast<double>(present) : 0.0;
  return out;
}

EvalResult evaluate(Model& model, const Dataset& data) {
  check_arg(!data.samples.empty(), "evaluate: empty dataset");
  const std::size_t classes = model.config().classes;
  std::vector<std::size_t> preds, labels;
  preds.reserve(data.samples.size());
  labels.reserve(data.samples.size());
  for (const auto& sample : data.samples) {
    check_arg(sample.label >= 0 && static_cast<std::size_t>(sample.label) < classes,
              "evaluate: sample label out of range");
    ModelCache cache;
    auto scores = model.forward(sample, false, false, cache);
    preds.push_back(static_cast<std::size_t>(
        std::max_element(scores.begin(), scores.end()) - scores.begin()));
    labels.push_back(static_cast<std::size_t>(sample.label));
  }
  return accuracy_stats(preds, labels, classes);
}

// ---- few-shot ----

std::vector<FewShotEpisode> few_shot_episodes(const Dataset& data, std::size_t way,
                                              std::size_t shot, std::size_t trials,
                                              std::uint64_t seed) {
  check_arg(way >= 1 && shot >= 1 && trials >= 1, "few_shot_episodes: way, shot, trials must be positive");
  const std::size_t num_classes = data.num_classes();
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const int label = data.samples[i].label;
    check_arg(label >= 0 && static_cast<std::size_t>(label) < num_classes,
              "few_shot_episodes: sample label out of range");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  constexpr std::size_t kTestPerClass = 20;
  std::vector<std::size_t> eligible;
  for (std::size_t c = 0; c < num_classes; ++c)
    if (by_class[c].size() >= shot + kTestPerClass) eligible.push_back(c);
  check_arg(eligible.size() >= way,
            "few_shot_episodes: need " + std::to_string(way) + " classes with at least " +
                std::to_string(shot + kTestPerClass) + " instances, have " +
                std::to_string(eligible.size()));

  std::mt19937_64 rng(seed);
  std::vector<FewShotEpisode> episodes;
  for (std::size_t t = 0; t < trials; ++t) {
    FewShotEpisode ep;
    std::vector<std::size_t> pool = eligible;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(way);
    ep.classes = pool;
    for (std::size_t c : pool) {
      std::vector<std::size_t> inst = by_class[c];
      std::shuffle(inst.begin(), inst.end(), rng);
      for (std::size_t i = 0; i < shot; ++i) ep.train_indices.push_back(inst[i]);
      for (std::size_t i = 0; i < kTestPerClass; ++i)
        ep.test_indices.push_back(inst[shot + i]);
    }
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

MeanStd aggregate_accuracy(std::span<const double> accuracies) {
  check_arg(!accuracies.empty(), "aggregate_accuracy: empty sequence");
  MeanStd out;
  for (double a : accuracies) out.mean += a;
  out.mean /= static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double a : accuracies) var += (a - out.mean) * (a - out.mean);
  out.stddev = std::sqrt(var / static_cast<double>(accuracies.size()));
  return out;
}

FewShotRunResult run_few_shot(const Dataset& data, const ModelConfig& base_cfg, std::size_t way,
                              std::size_t shot, std::size_t trials, std::uint64_t seed,
                              const TrainOptions& opts) {
  FewShotRunResult out;
  out.episodes = few_shot_episodes(data, way, shot, trials, seed);

  ModelConfig cfg = base_cfg;
  cfg.classes = way;
  for (std::size_t t = 0; t < out.episodes.size(); ++t) {
    const FewShotEpisode& ep = out.episodes[t];
    // Remap the sampled classes to labels 0..way-1.
    std::vector<int> remap(data.num_classes(), -1);
    for (std::size_t c = 0; c < ep.classes.size(); ++c)
      remap[ep.classes[c]] = static_cast<int>(c);

    auto subset = [&](const std::vector<std::size_t>& indices) {
      Dataset d;
      for (std::size_t i : indices) {
        PointCloud cloud = data.samples[i];
        cloud.label = remap[static_cast<std::size_t>(cloud.label)];
        d.samples.push_back(std::move(cloud));
      }
      for (std::size_t c : ep.classes)
        d.class_names.push_back(c < data.class_names.size() ? data.class_names[c]
                                                            : std::to_string(c));
      return d;
    };
    Dataset train_set = subset(ep.train_indices);
    Dataset test_set = subset(ep.test_indices);

    Model model(cfg, seed * 1000003ull + t);
    TrainOptions topts = opts;
    topts.seed = seed * 7919ull + t;
    train(model, train_set, &test_set, topts);
    out.accuracies.push_back(evaluate(model, test_set).overall_acc);
  }
  out.summary = aggregate_accuracy(out.accuracies);
  return out;
}

}  // namespace pointkan
