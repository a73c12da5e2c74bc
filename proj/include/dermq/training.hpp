#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dermq/fusion.hpp"
#include "dermq/metrics.hpp"
#include "dermq/network.hpp"

namespace dermq {

inline constexpr double kLogClamp = 1e-7;

struct LossWeights {
  double lambda_quality = 1.0;
  double lambda_explanations = 5.0;
};

/// Class-weighted categorical cross-entropy normalized by N*D (D = 4).
/// y and y_hat are N x 4, w has N entries. Probabilities are clamped to
/// [1e-7, 1 - 1e-7] before the logarithm.
template <class S>
S loss_quality(const Matrix<S>& y, const Matrix<S>& y_hat, const Vector<S>& w) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols() || y.cols() != kNumQualityClasses || w.size() != y.rows())
    throw ArgumentError("loss_quality: expected N x 4 targets/predictions and N weights");
  const auto clamped = y_hat.array().max(static_cast<S>(kLogClamp)).min(static_cast<S>(1.0 - kLogClamp));
  const auto per_sample = (y.array() * clamped.log()).rowwise().sum();
  return -(per_sample * w.array()).sum() / static_cast<S>(y.rows() * y.cols());
}

/// Binary cross-entropy averaged over N*C (C = 5), same clamping.
template <class S>
S loss_explanations(const Matrix<S>& z, const Matrix<S>& z_hat) {
  if (z.rows() != z_hat.rows() || z.cols() != z_hat.cols() || z.cols() != kNumExplanations)
    throw ArgumentError("loss_explanations: expected N x 5 targets and predictions");
  const auto c = z_hat.array().max(static_cast<S>(kLogClamp)).min(static_cast<S>(1.0 - kLogClamp));
  const auto terms = z.array() * c.log() + (S(1) - z.array()) * (S(1) - c).log();
  return -terms.sum() / static_cast<S>(z.rows() * z.cols());
}

template <class S>
S total_loss(S l_quality, S l_explanations, const LossWeights& lw) {
  return static_cast<S>(lw.lambda_quality) * l_quality + static_cast<S>(lw.lambda_explanations) * l_explanations;
}

/// Batch targets: one-hot quality rows, binary explanation rows, per-sample class weight.
template <class S>
struct TrainingTargets {
  Matrix<S> quality;       // N x 4
  Matrix<S> explanations;  // N x 5
  Vector<S> weights;       // N
};

template <class S>
TrainingTargets<S> make_targets(std::span<const FusedRecord> targets, const ClassWeights& weights);

template <class S>
struct LossEvaluation {
  S quality = 0, explanations = 0, total = 0;
  Matrix<S> d_quality_logits;      // 4 x N
  Matrix<S> d_explanation_logits;  // 5 x N
};

/// Losses of a forward trace and their gradients w.r.t. the logits. The
/// gradients are those of the unclamped losses (identical wherever the clamp
/// is inactive), so saturated outputs still receive a learning signal.
template <class S>
LossEvaluation<S> evaluate_losses(const ForwardTrace<S>& trace, const TrainingTargets<S>& targets,
                                  const LossWeights& lw);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

template <class S>
struct AdamWState {
  std::int64_t step = 0;
  std::vector<Vector<S>> m, v;  // one entry per parameter group, created lazily
};

template <class S>
struct ParamGroup {
  std::string name;
  Eigen::Map<Vector<S>> value;
  Eigen::Map<const Vector<S>> grad;
};

/// One decoupled-weight-decay Adam update over every group. Throws
/// TrainingError naming the first group holding a non-finite gradient; nothing
/// is modified in that case.
template <class S>
void adamw_step(AdamWState<S>& state, std::span<ParamGroup<S>> groups, double lr, const AdamWConfig& config);

/// Convenience overload over every learnable tensor of a model.
template <class S>
void adamw_step(AdamWState<S>& state, ModelParams<S>& params, const ModelParams<S>& grads, double lr,
                const AdamWConfig& config);

struct ScheduleConfig {
  double eta_max = 1e-3;
  double eta_min = 1e-6;
  int t0 = 10;  // epochs in the first cycle
  int t_mult = 2;

  void validate() const;
};

/// Cosine annealing within one cycle: t_cur in [0, t_i].
double lr_in_cycle(double t_cur, double t_i, const ScheduleConfig& sched);
/// Learning rate at fractional epoch `progress` with warm restarts; a cycle
/// boundary belongs to the new cycle.
double lr_at(double progress, const ScheduleConfig& sched);

struct TrainConfig {
  int epochs = 39;
  int batch_size = 32;
  int runs = 5;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;
  LossWeights loss_weights;
  AdamWConfig optimizer;
  /// Computed from the training split when absent.
  std::optional<ClassWeights> class_weights;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0, loss_total = 0, loss_quality = 0, loss_explanations = 0;
};

struct RunReport {
  int run = 0;
  std::uint64_t seed = 0;
  ClassWeights class_weights;
  std::vector<EpochLog> epochs;
  std::int64_t train_size = 0, holdout_size = 0;
  MetricReport holdout;  // evaluate_model on the held-out split (training split if none)
};

struct TrainSummary {
  MeanStd macro_f1;
  MeanStd macro_f1_explanations;
  std::vector<std::pair<std::string, MeanStd>> per_class_f1, per_explanation_f1;
};

TrainSummary summarize_runs(std::span<const RunReport> runs);

/// In-memory 8-bit dataset with fused targets.
struct Dataset {
  std::vector<ImageBytes> images;
  std::vector<FusedRecord> targets;
  std::vector<std::string> names;
};

Dataset load_dataset(std::span<const CorpusRecord> records, const std::string& manifest_dir, TargetSource source,
                     unsigned threads = 1);

/// Stratified deterministic split: (train indices, holdout indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const FusedRecord> targets,
                                                                            double holdout_fraction,
                                                                            std::uint64_t seed);

/// Eval-mode loss over a subset of the dataset.
LossEvaluation<double> dataset_loss(const ModelParams<float>& params, const Dataset& data,
                                    std::span<const std::size_t> indices, const ClassWeights& weights,
                                    const LossWeights& lw, unsigned threads = 1);

struct TrainOptions {
  unsigned threads = 1;
  std::function<void(const std::string&)> log;
  /// Called after every epoch of every run.
  std::function<void(int run, const EpochLog&, const ModelParams<float>&)> on_epoch;
};

struct TrainedRun {
  ModelParams<float> params;
  RunReport report;
};

/// Trains `config.runs` independent models (seed + run index).
std::vector<TrainedRun> train(const Dataset& data, const TrainConfig& config, const BackboneConfig& backbone,
                              const ScheduleConfig& schedule, const Thresholds& thresholds = kDefaultThresholds,
                              const TrainOptions& options = {});

/// Trains a single run; exposed for tests.
TrainedRun train_run(const Dataset& data, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> holdout_idx, int run, const TrainConfig& config,
                     const BackboneConfig& backbone, const ScheduleConfig& schedule, const Thresholds& thresholds,
                     const TrainOptions& options);

}  // namespace dermq
