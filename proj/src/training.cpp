#include "dermq/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

#include "dermq/error.hpp"
#include "dermq/parallel.hpp"
#include "dermq/rng.hpp"

namespace dermq {

template <class S>
TrainingTargets<S> make_targets(std::span<const FusedRecord> targets, const ClassWeights& weights) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  TrainingTargets<S> t{Matrix<S>::Zero(n, kNumQualityClasses), Matrix<S>::Zero(n, kNumExplanations), Vector<S>(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = targets[static_cast<std::size_t>(i)];
    t.quality(i, index_of(r.quality)) = S(1);
    for (int k = 0; k < kNumExplanations; ++k) t.explanations(i, k) = r.explanations.test(k) ? S(1) : S(0);
    t.weights[i] = static_cast<S>(weights[r.quality]);
  }
  return t;
}

template <class S>
LossEvaluation<S> evaluate_losses(const ForwardTrace<S>& trace, const TrainingTargets<S>& targets,
                                  const LossWeights& lw) {
  const Matrix<S> y_hat = softmax(trace.quality_logits).transpose();  // N x 4
  const Matrix<S>& z_hat = trace.explanation_probs;                   // 5 x N
  const auto n = y_hat.rows();
  if (targets.quality.rows() != n) throw ArgumentError("evaluate_losses: batch size mismatch");

  LossEvaluation<S> out;
  out.quality = loss_quality<S>(targets.quality, y_hat, targets.weights);
  out.explanations = loss_explanations<S>(targets.explanations, z_hat.transpose());
  out.total = total_loss(out.quality, out.explanations, lw);

  const S scale_q = static_cast<S>(lw.lambda_quality) / static_cast<S>(n * kNumQualityClasses);
  const Vector<S> row_mass = targets.quality.rowwise().sum();
  Matrix<S> dq = (y_hat.array().colwise() * row_mass.array() - targets.quality.array()).matrix();
  dq = (dq.array().colwise() * (targets.weights.array() * scale_q)).matrix();
  out.d_quality_logits = dq.transpose();

  const S scale_c = static_cast<S>(lw.lambda_explanations) / static_cast<S>(n * kNumExplanations);
  out.d_explanation_logits = (z_hat - targets.explanations.transpose()) * scale_c;
  return out;
}

template <class S>
void adamw_step(AdamWState<S>& state, std::span<ParamGroup<S>> groups, double lr, const AdamWConfig& config) {
  for (const auto& g : groups) {
    if (g.value.size() != g.grad.size()) throw ArgumentError("adamw_step: gradient shape mismatch in " + g.name);
    if (!g.grad.allFinite()) throw TrainingError("non-finite gradient in parameter group " + g.name);
  }
  if (state.m.empty()) {
    for (const auto& g : groups) {
      state.m.push_back(Vector<S>::Zero(g.value.size()));
      state.v.push_back(Vector<S>::Zero(g.value.size()));
    }
  }
  if (state.m.size() != groups.size()) throw ArgumentError("adamw_step: parameter groups changed between steps");

  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const S bc1 = static_cast<S>(1.0 - std::pow(b1, static_cast<double>(state.step)));
  const S bc2 = static_cast<S>(1.0 - std::pow(b2, static_cast<double>(state.step)));
  const S eta = static_cast<S>(lr), wd = static_cast<S>(config.weight_decay), eps = static_cast<S>(config.eps);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& g = groups[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = static_cast<S>(b1) * m + static_cast<S>(1.0 - b1) * g.grad;
    v = static_cast<S>(b2) * v + static_cast<S>(1.0 - b2) * g.grad.cwiseProduct(g.grad);
    const auto m_hat = m.array() / bc1;
    const auto v_hat = v.array() / bc2;
    g.value.array() -= eta * (m_hat / (v_hat.sqrt() + eps) + wd * g.value.array());
  }
}

template <class S>
void adamw_step(AdamWState<S>& state, ModelParams<S>& params, const ModelParams<S>& grads, double lr,
                const AdamWConfig& config) {
  std::vector<ParamGroup<S>> groups;
  visit_tensor_pairs(params, grads, [&](const std::string& name, auto& value, const auto& grad, bool learnable) {
    if (!learnable) return;
    groups.push_back({name, Eigen::Map<Vector<S>>(value.data(), value.size()),
                      Eigen::Map<const Vector<S>>(grad.data(), grad.size())});
  });
  adamw_step<S>(state, groups, lr, config);
}

void ScheduleConfig::validate() const {
  if (!(eta_min > 0.0 && eta_max > 0.0)) throw ConfigError("schedule.eta_min and schedule.eta_max must be > 0");
  if (!(eta_min < eta_max)) throw ConfigError("schedule.eta_min must be < schedule.eta_max");
  if (t0 < 1) throw ConfigError("schedule.t0 must be >= 1");
  if (t_mult < 1) throw ConfigError("schedule.t_mult must be >= 1");
}

double lr_in_cycle(double t_cur, double t_i, const ScheduleConfig& s) {
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_i));
}

double lr_at(double progress, const ScheduleConfig& s) {
  double t_i = s.t0;
  double t_cur = std::max(0.0, progress);
  if (s.t_mult == 1) {
    t_cur = std::fmod(t_cur, t_i);
  } else {
    while (t_cur >= t_i) {
      t_cur -= t_i;
      t_i *= s.t_mult;
    }
  }
  return lr_in_cycle(t_cur, t_i, s);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (runs < 1) throw ConfigError("training.runs must be >= 1");
  if (batch_size < 2) throw ConfigError("training.batch_size must be >= 2");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0))
    throw ConfigError("training.holdout_fraction must be in [0, 1)");
  if (!(loss_weights.lambda_quality > 0.0 && std::isfinite(loss_weights.lambda_quality)))
    throw ConfigError("training.lambda_quality must be finite and > 0");
  if (!(loss_weights.lambda_explanations > 0.0 && std::isfinite(loss_weights.lambda_explanations)))
    throw ConfigError("training.lambda_explanations must be finite and > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0))
    throw ConfigError("training.beta1/beta2 must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) throw ConfigError("training.eps must be > 0");
  if (!(optimizer.weight_decay >= 0.0)) throw ConfigError("training.weight_decay must be >= 0");
  if (class_weights)
    for (double w : class_weights->weights)
      if (!(w > 0.0 && std::isfinite(w))) throw ConfigError("training.class_weights entries must be finite and > 0");
}

TrainSummary summarize_runs(std::span<const RunReport> runs) {
  TrainSummary s;
  std::vector<double> macro, macro_e;
  for (const auto& r : runs) {
    if (r.holdout.macro_f1_quality) macro.push_back(*r.holdout.macro_f1_quality);
    if (r.holdout.macro_f1_explanations) macro_e.push_back(*r.holdout.macro_f1_explanations);
  }
  s.macro_f1 = mean_std(macro);
  s.macro_f1_explanations = mean_std(macro_e);
  auto rows = [&](auto member, std::size_t count, auto& out) {
    for (std::size_t c = 0; c < count; ++c) {
      std::vector<double> v;
      std::string name;
      for (const auto& r : runs) {
        const auto& row = (r.holdout.*member)[c];
        name = row.name;
        if (row.f1) v.push_back(*row.f1);
      }
      out.emplace_back(name, mean_std(v));
    }
  };
  if (!runs.empty()) {
    rows(&MetricReport::quality, runs.front().holdout.quality.size(), s.per_class_f1);
    rows(&MetricReport::explanations, runs.front().holdout.explanations.size(), s.per_explanation_f1);
  }
  return s;
}

Dataset load_dataset(std::span<const CorpusRecord> records, const std::string& manifest_dir, TargetSource source,
                     unsigned threads) {
  Dataset d;
  d.targets = build_targets(records, source);
  d.images.resize(records.size());
  d.names.resize(records.size());
  parallel_for(records.size(), threads, [&](std::size_t i) {
    d.names[i] = records[i].image_path;
    d.images[i] = read_png_bytes((std::filesystem::path(manifest_dir) / records[i].image_path).string());
  });
  return d;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const FusedRecord> targets,
                                                                            double holdout_fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> train_idx, holdout_idx;
  for (int q = 0; q < kNumQualityClasses; ++q) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < targets.size(); ++i)
      if (index_of(targets[i].quality) == q) members.push_back(i);
    Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(q));
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[uniform_index(rng, i)]);
    const auto n_hold = static_cast<std::size_t>(std::round(holdout_fraction * static_cast<double>(members.size())));
    holdout_idx.insert(holdout_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_hold));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_hold), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(holdout_idx.begin(), holdout_idx.end());
  return {std::move(train_idx), std::move(holdout_idx)};
}

namespace {

std::vector<Matrix<float>> batch_inputs(const Dataset& data, std::span<const std::size_t> idx, unsigned threads) {
  std::vector<Matrix<float>> out(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) { out[i] = to_input<float>(dequantize(data.images[idx[i]])); });
  return out;
}

std::vector<FusedRecord> gather(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<FusedRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data.targets[i]);
  return out;
}

}  // namespace

LossEvaluation<double> dataset_loss(const ModelParams<float>& params, const Dataset& data,
                                    std::span<const std::size_t> indices, const ClassWeights& weights,
                                    const LossWeights& lw, unsigned threads) {
  const auto params64 = cast_params<double>(params);
  const auto targets = make_targets<double>(gather(data, indices), weights);
  const auto n = static_cast<Eigen::Index>(indices.size());
  ForwardTrace<double> all;
  all.quality_logits.resize(kNumQualityClasses, n);
  all.explanation_probs.resize(kNumExplanations, n);
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    const std::vector<Matrix<double>> one{to_input<double>(dequantize(data.images[indices[i]]))};
    const auto t = forward<double>(params64, one, Mode::eval);
    all.quality_logits.col(static_cast<Eigen::Index>(i)) = t.quality_logits.col(0);
    all.explanation_probs.col(static_cast<Eigen::Index>(i)) = t.explanation_probs.col(0);
  });
  return evaluate_losses(all, targets, lw);
}

TrainedRun train_run(const Dataset& data, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> holdout_idx, int run, const TrainConfig& config,
                     const BackboneConfig& backbone, const ScheduleConfig& schedule, const Thresholds& thresholds,
                     const TrainOptions& options) {
  const std::uint64_t run_seed = config.seed + static_cast<std::uint64_t>(run);
  TrainedRun out{init_params<float>(derive_seed(run_seed, "init"), backbone), {}};
  RunReport& report = out.report;
  report.run = run;
  report.seed = run_seed;
  report.train_size = static_cast<std::int64_t>(train_idx.size());
  report.holdout_size = static_cast<std::int64_t>(holdout_idx.size());

  const auto train_targets = gather(data, train_idx);
  report.class_weights = config.class_weights ? *config.class_weights
                                              : compute_class_weights(class_counts(train_targets));

  const std::size_t n = train_idx.size();
  const std::size_t n_batches = std::max<std::size_t>(1, (n + config.batch_size - 1) / config.batch_size);
  AdamWState<float> opt;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = make_rng(run_seed, "shuffle", static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle, i)]);

    EpochLog log{epoch + 1, lr_at(epoch, schedule), 0, 0, 0};
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t lo = b * n / n_batches, hi = (b + 1) * n / n_batches;
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const double lr = lr_at(epoch + static_cast<double>(b) / static_cast<double>(n_batches), schedule);
      const auto inputs = batch_inputs(data, idx, options.threads);
      const auto targets = make_targets<float>(gather(data, idx), report.class_weights);
      const std::uint64_t step = static_cast<std::uint64_t>(epoch) * n_batches + b;
      const auto trace = forward<float>(out.params, inputs, Mode::train, derive_seed(run_seed, "dropout", step),
                                        options.threads);
      const auto loss = evaluate_losses(trace, targets, config.loss_weights);
      if (!std::isfinite(loss.total))
        throw TrainingError("non-finite loss in run " + std::to_string(run) + ", epoch " + std::to_string(epoch + 1) +
                            ", batch " + std::to_string(b));
      const auto grads = backward(out.params, trace, loss.d_quality_logits, loss.d_explanation_logits, -1,
                                  options.threads);
      try {
        adamw_step(opt, out.params, grads.params, lr, config.optimizer);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " (run " + std::to_string(run) + ", epoch " +
                            std::to_string(epoch + 1) + ", batch " + std::to_string(b) + ")");
      }
      update_running_stats(out.params, trace);
      log.loss_total += loss.total;
      log.loss_quality += loss.quality;
      log.loss_explanations += loss.explanations;
    }
    log.loss_total /= static_cast<double>(n_batches);
    log.loss_quality /= static_cast<double>(n_batches);
    log.loss_explanations /= static_cast<double>(n_batches);
    report.epochs.push_back(log);
    if (options.log) {
      std::ostringstream msg;
      msg << "run " << run << " epoch " << log.epoch << " lr " << log.lr << " loss " << log.loss_total << " (quality "
          << log.loss_quality << ", explanations " << log.loss_explanations << ")";
      options.log(msg.str());
    }
    if (options.on_epoch) options.on_epoch(run, log, out.params);
  }

  const auto& eval_idx = holdout_idx.empty() ? train_idx : holdout_idx;
  std::vector<ImageTensor> images;
  images.reserve(eval_idx.size());
  for (auto i : eval_idx) images.push_back(dequantize(data.images[i]));
  const auto [qp, ep] = predict_probs(out.params, std::span<const ImageTensor>(images), options.threads);
  report.holdout = evaluate_model(gather(data, eval_idx), qp, ep, thresholds);
  return out;
}

std::vector<TrainedRun> train(const Dataset& data, const TrainConfig& config, const BackboneConfig& backbone,
                              const ScheduleConfig& schedule, const Thresholds& thresholds,
                              const TrainOptions& options) {
  config.validate();
  backbone.validate();
  schedule.validate();
  if (data.targets.empty()) throw DataError("training manifest is empty");
  const auto counts = class_counts(data.targets);
  for (int q = 0; q < kNumQualityClasses; ++q)
    if (counts[q] == 0)
      throw DataError("class '" + std::string(to_string(quality_from_index(q))) + "' is missing from the manifest");

  const auto [train_idx, holdout_idx] = split_indices(data.targets, config.holdout_fraction, config.seed);
  const auto train_counts = class_counts(std::vector<FusedRecord>(gather(data, train_idx)));
  for (int q = 0; q < kNumQualityClasses; ++q)
    if (train_counts[q] == 0)
      throw DataError("class '" + std::string(to_string(quality_from_index(q))) + "' is missing from the training split");
  if (train_idx.size() < 2) throw DataError("training split needs at least two images");

  std::vector<TrainedRun> runs;
  for (int r = 0; r < config.runs; ++r)
    runs.push_back(train_run(data, train_idx, holdout_idx, r, config, backbone, schedule, thresholds, options));
  return runs;
}

template TrainingTargets<float> make_targets<float>(std::span<const FusedRecord>, const ClassWeights&);
template TrainingTargets<double> make_targets<double>(std::span<const FusedRecord>, const ClassWeights&);
template LossEvaluation<float> evaluate_losses(const ForwardTrace<float>&, const TrainingTargets<float>&,
                                               const LossWeights&);
template LossEvaluation<double> evaluate_losses(const ForwardTrace<double>&, const TrainingTargets<double>&,
                                                const LossWeights&);
template void adamw_step(AdamWState<float>&, std::span<ParamGroup<float>>, double, const AdamWConfig&);
template void adamw_step(AdamWState<double>&, std::span<ParamGroup<double>>, double, const AdamWConfig&);
template void adamw_step(AdamWState<float>&, ModelParams<float>&, const ModelParams<float>&, double,
                         const AdamWConfig&);
template void adamw_step(AdamWState<double>&, ModelParams<double>&, const ModelParams<double>&, double,
                         const AdamWConfig&);

}  // namespace dermq
