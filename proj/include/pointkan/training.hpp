#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pointkan/model.hpp"

namespace pointkan {

struct Dataset {
  std::vector<PointCloud> samples;  // labels carried on the clouds
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  std::size_t num_classes() const;
};

struct CrossEntropyResult {
  double loss = 0.0;
  std::vector<double> grad;  // softmax(scores) - onehot(label)
};

/// Stable -log softmax(scores)[label] with max subtraction.
CrossEntropyResult cross_entropy(std::span<const double> scores, std::size_t label);

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double lr0 = 0.01;
  double lr_min = 1e-4;
  std::size_t total_epochs = 30;  // cosine decay horizon
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// SGD with momentum or Adam, both under a cosine learning-rate schedule
/// lr(t) = lr_min + (lr0 - lr_min)/2 * (1 + cos(pi t / T)).
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  double lr_at(std::size_t epoch) const;
  void step(const ParamList& params, std::size_t epoch);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m1_, m2_;
  std::size_t adam_t_ = 0;
};

// ---- gradient checking ----

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double tolerance = 1e-5;
  bool pass = true;
  double max_rel_err = 0.0;
};

/// Central-difference check of the full model backward pass against the
/// cross-entropy loss, batch norm frozen in evaluation mode. Samples at
/// least `coords_per_block` coordinates per parameter block with step
/// h = 1e-5 * max(1, |p|). Failures are reported, never thrown.
GradCheckReport grad_check(Model& model, const PointCloud& input, std::size_t label,
                           double tolerance, std::uint64_t seed,
                           std::size_t coords_per_block = 20);

/// The full battery: seeded configurations of every differentiable block
/// (B-spline KAN, rational, Group-Norm affine, S-Pool, DwConv, LFP, ResP)
/// plus 2-stage miniature models, all checked against central differences.
GradCheckReport gradcheck_battery(double tolerance, std::uint64_t seed);

// ---- training / evaluation ----

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::uint64_t seed = 0;
  OptimizerConfig optimizer;
  double stop_at_test_acc = -1.0;  // stop once reached; negative disables
  std::ostream* log = nullptr;     // epoch lines: "epoch <i> loss <f> train_acc <f> test_acc <f>"
};

/// Deterministic under a fixed seed: fixed shuffle order and a fixed
/// per-sample gradient reduction order, independent of the thread count.
std::vector<EpochRecord> train(Model& model, const Dataset& train_set, const Dataset* test_set,
                               const TrainOptions& opts);

struct EvalResult {
  double overall_acc = 0.0;
  double mean_class_acc = 0.0;
};

/// Overall accuracy and unweighted mean per-class accuracy; classes absent
/// from the label set are excluded from the mean.
EvalResult accuracy_stats(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t classes);

/// Runs the model in evaluation mode over the dataset.
EvalResult evaluate(Model& model, const Dataset& data);

// ---- few-shot protocol ----

struct FewShotEpisode {
  std::vector<std::size_t> classes;        // the n sampled class ids
  std::vector<std::size_t> train_indices;  // n * m sample indices
  std::vector<std::size_t> test_indices;   // n * 20 sample indices, disjoint
};

/// Episodes for the n-way m-shot protocol: per trial, n classes, m train
/// and 20 disjoint test instances per class.
std::vector<FewShotEpisode> few_shot_episodes(const Dataset& data, std::size_t way,
                                              std::size_t shot, std::size_t trials,
                                              std::uint64_t seed);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation
};

MeanStd aggregate_accuracy(std::span<const double> accuracies);

struct FewShotRunResult {
  std::vector<FewShotEpisode> episodes;
  std::vector<double> accuracies;
  MeanStd summary;
};

/// Trains one fresh model per episode on its n*m samples and evaluates on
/// the held-out instances.
FewShotRunResult run_few_shot(const Dataset& data, const ModelConfig& base_cfg, std::size_t way,
                              std::size_t shot, std::size_t trials, std::uint64_t seed,
                              const TrainOptions& opts);

}  // namespace pointkan
