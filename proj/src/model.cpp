#include "pointkan/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pointkan {

void ModelConfig::validate() const {
  check_arg(points >= 1, "config: points must be positive");
  check_arg(embed_dim >= 1, "config: embed_dim must be positive");
  check_arg(classes >= 1, "config: classes must be positive");
  check_arg(grid_size >= 1, "config: grid_size must be positive");
  check_arg(kan_depth >= 1, "config: kan_depth must be positive");
  check_arg(kan_hidden_num >= 1 && kan_hidden_den >= 1,
            "config: kan hidden ratio must be positive");
  check_arg(dwconv_kernel % 2 == 1, "config: dwconv_kernel must be odd");
  check_arg(resp_blocks >= 1, "config: resp_blocks must be positive");
  check_arg(num_stages >= 1 && num_stages <= 4, "config: num_stages must be in [1, 4]");
  for (std::size_t s = 0; s < num_stages; ++s) {
    check_arg(stage_centers[s] >= 1, "config: stage centers must be positive");
    check_arg(stage_neighbors[s] >= 1, "config: stage neighbors must be positive");
    if (s > 0)
      check_arg(stage_centers[s] < stage_centers[s - 1],
                "config: stage center counts must be strictly decreasing");
  }
  check_arg(stage_centers[0] <= points, "config: stage1 centers exceed the point budget");
}

std::vector<StageConfig> ModelConfig::stage_configs() const {
  std::vector<StageConfig> out;
  std::size_t width = embed_dim;
  for (std::size_t s = 0; s < num_stages; ++s) {
    StageConfig sc;
    sc.centers = stage_centers[s];
    sc.neighbors = stage_neighbors[s];
    sc.width = width;
    sc.kan_depth = kan_depth;
    sc.kan_hidden = std::max<std::size_t>(1, 2 * width * kan_hidden_num / kan_hidden_den);
    sc.backend = backend;
    sc.dwconv_kernel = dwconv_kernel;
    out.push_back(sc);
    width *= 2;  // Group-Norm concatenation doubles the channel width
  }
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

PointwiseStack::Spec stack_spec(const ModelConfig& cfg, const StageConfig& sc) {
  PointwiseStack::Spec spec;
  spec.channels = 2 * sc.width;
  spec.depth = sc.kan_depth;
  spec.hidden = sc.kan_hidden;
  spec.backend = sc.backend;
  spec.grid = cfg.grid_size;
  spec.order = cfg.spline_order;
  spec.m = cfg.rational_degree_num;
  spec.n = cfg.rational_degree_den;
  spec.groups = cfg.rational_groups;
  return spec;
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  stage_cfgs_ = cfg_.stage_configs();
  embed_ = Linear(3, cfg_.embed_dim, mix_seed(seed, 0));

  for (std::size_t s = 0; s < stage_cfgs_.size(); ++s) {
    const StageConfig& sc = stage_cfgs_[s];
    StageModules mod;
    mod.cfg = sc;
    mod.gn = GroupNormAffine(sc.width, cfg_.gam_affine);
    mod.use_lfp = cfg_.lfp;
    mod.use_spool = cfg_.s_pool;
    if (mod.use_lfp)
      mod.lfp = Lfp(stack_spec(cfg_, sc), sc.dwconv_kernel, cfg_.dwconv, mix_seed(seed, 16 + s));
    if (cfg_.gfp)
      for (std::size_t b = 0; b < cfg_.resp_blocks; ++b)
        mod.resp.emplace_back(2 * sc.width, mix_seed(seed, 64 + 8 * s + b));
    stages_.push_back(std::move(mod));
  }

  const std::size_t final_c = 2 * stage_cfgs_.back().width;
  const std::size_t hidden = std::max<std::size_t>(8, final_c / 2);
  head1_ = Linear(2 * final_c, hidden, mix_seed(seed, 200));
  head2_ = Linear(hidden, cfg_.classes, mix_seed(seed, 201));
}

std::vector<double> Model::forward(const PointCloud& cloud, bool training, bool update_stats,
                                   ModelCache& cache) {
  const std::size_t n = cloud.size();
  check_arg(n >= 1, "Model::forward: empty cloud");
  {
    std::size_t avail = n;
    for (const auto& sc : stage_cfgs_) {
      check_arg(sc.centers <= avail && sc.neighbors <= avail,
                "Model::forward: cloud too small for stage geometry (need G=" +
                    std::to_string(sc.centers) + ", K=" + std::to_string(sc.neighbors) +
                    ", have " + std::to_string(avail) + " points)");
      avail = sc.centers;
    }
  }

  PointCloud current = centroid_normalize(cloud);
  Matrix coords(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < 3; ++d) coords(i, d) = current.points[i][d];

  cache.stages.assign(stages_.size(), StageCache{});
  Matrix feats = embed_.forward(coords, cache.embed);

  for (std::size_t s = 0; s < stages_.size(); ++s) {
    StageModules& mod = stages_[s];
    StageCache& sc = cache.stages[s];
    const std::size_t g = mod.cfg.centers, k = mod.cfg.neighbors, w = feats.cols;
    check_arg(w == mod.cfg.width, "Model::forward: stage width mismatch");

    auto centers = farthest_point_sample(current, g);
    sc.grouping = knn_group(current, centers, k);
    sc.in_rows = feats.rows;

    sc.neighbors = Tensor3(g, k, w);
    sc.center_feats = Matrix(g, w);
    for (std::size_t gi = 0; gi < g; ++gi) {
      const std::size_t ci = sc.grouping.center_indices[gi];
      for (std::size_t t = 0; t < w; ++t) sc.center_feats(gi, t) = feats(ci, t);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t ni = sc.grouping.neighbor(gi, j);
        for (std::size_t t = 0; t < w; ++t) sc.neighbors(gi, j, t) = feats(ni, t);
      }
    }

    sc.gn_out = mod.gn.forward(sc.neighbors, sc.center_feats, sc.gn);

    Matrix local;
    if (mod.use_lfp) {
      Tensor3 lfp_out = mod.lfp.forward(sc.gn_out, sc.lfp);
      local = max_pool_k(lfp_out, sc.maxpool);
    } else {
      local = max_pool_k(sc.gn_out, sc.maxpool);
    }
    if (mod.use_spool) {
      Matrix pooled = s_pool(sc.gn_out, sc.spool);
      for (std::size_t i = 0; i < local.data.size(); ++i) local.data[i] += pooled.data[i];
    }

    sc.resp.assign(mod.resp.size(), ResPCache{});
    for (std::size_t b = 0; b < mod.resp.size(); ++b)
      local = mod.resp[b].forward(local, training, update_stats, sc.resp[b]);

    feats = std::move(local);
    PointCloud next;
    next.points.resize(g);
    for (std::size_t gi = 0; gi < g; ++gi) next.points[gi] = current.points[centers[gi]];
    current = std::move(next);
  }

  // Global pooling: concatenated channel-wise max and mean over the centers.
  cache.final_feats = feats;
  cache.head_rows = feats.rows;
  const std::size_t c = feats.cols;
  cache.head_argmax.assign(c, 0);
  Matrix pooled(1, 2 * c);
  for (std::size_t ci = 0; ci < c; ++ci) {
    double best = feats(0, ci);
    std::size_t arg = 0;
    double mean = 0.0;
    for (std::size_t r = 0; r < feats.rows; ++r) {
      const double v = feats(r, ci);
      mean += v;
      if (v > best) {
        best = v;
        arg = r;
      }
    }
    pooled(0, ci) = best;
    pooled(0, c + ci) = mean / static_cast<double>(feats.rows);
    cache.head_argmax[ci] = arg;
  }

  Matrix h = head1_.forward(pooled, cache.head1);
  h = relu(h, cache.head_relu);
  Matrix scores = head2_.forward(h, cache.head2);
  cache.filled = true;
  return scores.data;
}

void Model::backward(std::span<const double> d_scores, const ModelCache& cache) {
  check_usage(cache.filled, "Model::backward: no forward cache");
  check_arg(d_scores.size() == cfg_.classes, "Model::backward: score gradient size mismatch");

  Matrix ds(1, cfg_.classes);
  std::copy(d_scores.begin(), d_scores.end(), ds.data.begin());
  Matrix dh = head2_.backward(ds, cache.head2);
  dh = relu_backward(dh, cache.head_relu);
  Matrix d_pooled = head1_.backward(dh, cache.head1);

  const std::size_t c = cache.final_feats.cols;
  const std::size_t rows = cache.head_rows;
  Matrix d_feats(rows, c);
  for (std::size_t ci = 0; ci < c; ++ci) {
    d_feats(cache.head_argmax[ci], ci) += d_pooled(0, ci);
    const double dm = d_pooled(0, c + ci) / static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) d_feats(r, ci) += dm;
  }

  for (std::size_t s = stages_.size(); s-- > 0;) {
    StageModules& mod = stages_[s];
    const StageCache& sc = cache.stages[s];

    Matrix d_local = std::move(d_feats);
    for (std::size_t b = mod.resp.size(); b-- > 0;)
      d_local = mod.resp[b].backward(d_local, sc.resp[b]);

    Tensor3 d_gn_out(sc.gn_out.d0, sc.gn_out.d1, sc.gn_out.d2);
    if (mod.use_spool) {
      Tensor3 d_sp = s_pool_backward(d_local, sc.spool);
      for (std::size_t i = 0; i < d_gn_out.data.size(); ++i) d_gn_out.data[i] += d_sp.data[i];
    }
    {
      Tensor3 d_pool = max_pool_k_backward(d_local, sc.maxpool);
      if (mod.use_lfp) {
        Tensor3 d_in = mod.lfp.backward(d_pool, sc.lfp);
        for (std::size_t i = 0; i < d_gn_out.data.size(); ++i) d_gn_out.data[i] += d_in.data[i];
      } else {
        for (std::size_t i = 0; i < d_gn_out.data.size(); ++i) d_gn_out.data[i] += d_pool.data[i];
      }
    }

    Tensor3 d_neighbors;
    Matrix d_centers;
    mod.gn.backward(d_gn_out, sc.gn, d_neighbors, d_centers);

    const std::size_t g = sc.grouping.group_count, k = sc.grouping.group_size,
                      w = d_neighbors.d2;
    Matrix d_prev(sc.in_rows, w);
    for (std::size_t gi = 0; gi < g; ++gi) {
      const std::size_t ci = sc.grouping.center_indices[gi];
      for (std::size_t t = 0; t < w; ++t) d_prev(ci, t) += d_centers(gi, t);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t ni = sc.grouping.neighbor(gi, j);
        for (std::size_t t = 0; t < w; ++t) d_prev(ni, t) += d_neighbors(gi, j, t);
      }
    }
    d_feats = std::move(d_prev);
  }

  embed_.backward(d_feats, cache.embed);
}

void Model::warm_stats(const PointCloud& cloud) {
  ModelCache cache;
  forward(cloud, /*training=*/true, /*update_stats=*/true, cache);
}

void Model::fold_bn_stats(const ModelCache& cache) {
  check_usage(cache.filled, "Model::fold_bn_stats: cache not filled");
  for (std::size_t s = 0; s < stages_.size(); ++s)
    for (std::size_t b = 0; b < stages_[s].resp.size(); ++b) {
      const BnCache& bc = cache.stages[s].resp[b].bn;
      if (bc.filled && bc.training)
        stages_[s].resp[b].bn.fold_stats(bc.batch_mean, bc.batch_var);
    }
}

ParamList Model::params() {
  ParamList out;
  embed_.collect(out, "embed");
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const std::string prefix = "stage" + std::to_string(s + 1);
    stages_[s].gn.collect(out, prefix + ".gn");
    if (stages_[s].use_lfp) stages_[s].lfp.collect(out, prefix + ".lfp");
    for (std::size_t b = 0; b < stages_[s].resp.size(); ++b)
      stages_[s].resp[b].collect(out, prefix + ".resp" + std::to_string(b));
  }
  head1_.collect(out, "head.lin1");
  head2_.collect(out, "head.lin2");
  return out;
}

void Model::zero_grad() {
  for (auto& ref : params()) ref.param->zero_grad();
}

std::size_t Model::trainable_param_count() {
  std::size_t total = 0;
  for (auto& ref : params())
    if (ref.trainable) total += ref.param->size();
  return total;
}

std::vector<double> Model::sensitivity_scores(const PointCloud& cloud) {
  check_usage(cfg_.lfp, "sensitivity_scores: the model was built without the LFP block");
  const std::size_t n = cloud.size();
  check_arg(n >= 1, "sensitivity_scores: empty cloud");
  const StageConfig& sc = stage_cfgs_[0];
  check_arg(sc.centers <= n && sc.neighbors <= n,
            "sensitivity_scores: cloud too small for stage 1 geometry");

  PointCloud norm = centroid_normalize(cloud);
  Matrix coords(n, 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < 3; ++d) coords(i, d) = norm.points[i][d];
  LinCache embed_cache;
  Matrix feats = embed_.forward(coords, embed_cache);

  auto centers = farthest_point_sample(norm, sc.centers);
  Grouping grouping = knn_group(norm, centers, sc.neighbors);

  const std::size_t g = sc.centers, k = sc.neighbors, w = sc.width;
  Tensor3 neigh(g, k, w);
  Matrix center_feats(g, w);
  for (std::size_t gi = 0; gi < g; ++gi) {
    const std::size_t ci = grouping.center_indices[gi];
    for (std::size_t t = 0; t < w; ++t) center_feats(gi, t) = feats(ci, t);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t ni = grouping.neighbor(gi, j);
      for (std::size_t t = 0; t < w; ++t) neigh(gi, j, t) = feats(ni, t);
    }
  }

  GroupNormCache gn_cache;
  Tensor3 gn_out = stages_[0].gn.forward(neigh, center_feats, gn_cache);
  LfpCache lfp_cache;
  Tensor3 lfp_out = stages_[0].lfp.forward(gn_out, lfp_cache);

  std::vector<double> scores(n, 0.0);
  for (std::size_t gi = 0; gi < g; ++gi)
    for (std::size_t j = 0; j < k; ++j) {
      double norm2 = 0.0;
      for (std::size_t t = 0; t < lfp_out.d2; ++t) {
        const double v = lfp_out(gi, j, t);
        norm2 += v * v;
      }
      scores[grouping.neighbor(gi, j)] += std::sqrt(norm2);
    }
  return scores;
}

std::vector<int> sensitivity_flags(const std::vector<double>& scores, double percentile) {
  check_arg(percentile >= 0.0 && percentile <= 100.0,
            "sensitivity_flags: percentile must be in [0, 100]");
  const std::size_t n = scores.size();
  const auto marked = static_cast<std::size_t>(
      std::ceil((100.0 - percentile) / 100.0 * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<int> flags(n, 0);
  for (std::size_t i = 0; i < marked && i < n; ++i) flags[order[i]] = 1;
  return flags;
}

}  // namespace pointkan
