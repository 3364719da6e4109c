#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pointkan/blocks.hpp"
#include "pointkan/geometry.hpp"

namespace pointkan {

/// Resolved per-stage hyperparameters.
struct StageConfig {
  std::size_t centers = 0;    // G
  std::size_t neighbors = 0;  // K
  std::size_t width = 0;      // input feature width d (doubles across the stage)
  std::size_t kan_depth = 3;
  std::size_t kan_hidden = 0;
  Backend backend = Backend::bspline;
  std::size_t dwconv_kernel = 3;
};

struct ModelConfig {
  std::size_t points = 1024;
  std::size_t embed_dim = 32;
  std::size_t classes = 3;
  Backend backend = Backend::bspline;

  // B-spline layers
  std::size_t grid_size = 5;
  std::size_t spline_order = 3;
  // rational layers
  std::size_t rational_degree_num = 5;
  std::size_t rational_degree_den = 4;
  std::size_t rational_groups = 4;
  // stack shape: depth layers, hidden = width * num / den
  std::size_t kan_depth = 3;
  std::size_t kan_hidden_num = 1;
  std::size_t kan_hidden_den = 2;

  std::size_t dwconv_kernel = 3;
  std::size_t resp_blocks = 2;

  // ablation toggles
  bool gam_affine = true;
  bool s_pool = true;
  bool lfp = true;
  bool gfp = true;
  bool dwconv = true;

  // Four stages is the architecture default; miniatures for gradient
  // checking may use fewer.
  std::size_t num_stages = 4;
  std::array<std::size_t, 4> stage_centers{512, 256, 128, 64};
  std::array<std::size_t, 4> stage_neighbors{24, 24, 24, 24};

  void validate() const;
  std::vector<StageConfig> stage_configs() const;
  std::size_t final_width() const { return embed_dim << num_stages; }
};

struct StageCache {
  Grouping grouping;
  std::size_t in_rows = 0;
  Tensor3 neighbors;
  Matrix center_feats;
  GroupNormCache gn;
  Tensor3 gn_out;
  LfpCache lfp;
  MaxPoolCache maxpool;
  SPoolCache spool;
  std::vector<ResPCache> resp;
};

struct ModelCache {
  LinCache embed;
  std::vector<StageCache> stages;
  Matrix final_feats;
  std::vector<std::size_t> head_argmax;
  std::size_t head_rows = 0;
  LinCache head1, head2;
  ReluCache head_relu;
  bool filled = false;
};

/// The four-stage point-cloud classifier: shared linear embedding, per
/// stage FPS -> KNN -> Group-Norm/affine -> parallel LFP and S-Pool
/// branches -> ResP blocks, then a concat(max, mean) pooled two-layer head.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  /// Raw class scores (no softmax). The input cloud is centroid-normalized
  /// internally. `training` selects batch statistics in the ResP batch
  /// norms; `update_stats` folds them into the running statistics.
  std::vector<double> forward(const PointCloud& cloud, bool training, bool update_stats,
                              ModelCache& cache);

  /// Accumulates parameter gradients for the forward pass held in `cache`.
  void backward(std::span<const double> d_scores, const ModelCache& cache);

  /// One training-mode pass to seed the batch-norm running statistics.
  void warm_stats(const PointCloud& cloud);

  /// Folds the batch-norm batch statistics recorded in `cache` into this
  /// model's running statistics (the deterministic reduction step of the
  /// batch-parallel trainer).
  void fold_bn_stats(const ModelCache& cache);

  ParamList params();
  void zero_grad();
  std::size_t trainable_param_count();
  const ModelConfig& config() const { return cfg_; }

  /// Per-point sensitivity: for every occurrence of a point in a stage-1
  /// group, the L2 norm of that slot's LFP output features, summed over
  /// occurrences. Points in no group score zero.
  std::vector<double> sensitivity_scores(const PointCloud& cloud);

 private:
  struct StageModules {
    StageConfig cfg;
    GroupNormAffine gn;
    Lfp lfp;
    bool use_lfp = true;
    bool use_spool = true;
    std::vector<ResPBlock> resp;
  };

  ModelConfig cfg_;
  std::vector<StageConfig> stage_cfgs_;
  Linear embed_;
  std::vector<StageModules> stages_;
  Linear head1_, head2_;
};

/// Marks the ceil((100 - percentile)/100 * N) highest-scoring points,
/// breaking score ties by index.
std::vector<int> sensitivity_flags(const std::vector<double>& scores, double percentile);

}  // namespace pointkan
