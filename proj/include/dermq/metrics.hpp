#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dermq/error.hpp"
#include "dermq/records.hpp"

namespace dermq {

/// One-vs-rest counts for a single class.
struct ConfusionTally {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionTally&) const = default;
};

template <class Label>
ConfusionTally tally(std::span<const Label> reference, std::span<const Label> predicted, Label c) {
  if (reference.size() != predicted.size()) throw ArgumentError("tally: reference and prediction lengths differ");
  ConfusionTally t;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const bool r = reference[i] == c, p = predicted[i] == c;
    t.tp += r && p;
    t.fp += !r && p;
    t.fn += r && !p;
    t.tn += !r && !p;
  }
  return t;
}

/// Tally for presence flags (non-zero == positive).
ConfusionTally tally_binary(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> predicted);

// Undefined (zero denominator) is reported as nullopt, never as 0.
std::optional<double> sensitivity(const ConfusionTally& t);
std::optional<double> specificity(const ConfusionTally& t);
std::optional<double> f1(const ConfusionTally& t);

/// Mean of the defined entries; nullopt when none are defined.
std::optional<double> mean_defined(std::span<const std::optional<double>> values);

/// Mean and population standard deviation.
struct MeanStd {
  std::optional<double> mean;
  std::optional<double> std;
  std::int64_t n = 0;
};
MeanStd mean_std(std::span<const double> values);

struct MetricRow {
  std::string name;
  ConfusionTally counts;
  std::optional<double> recall, specificity, f1;
  std::int64_t support = 0;  // reference positives
};

struct MetricReport {
  std::vector<MetricRow> quality;       // canonical QualityClass order
  std::vector<MetricRow> explanations;  // canonical ExplanationKind order
  std::optional<double> macro_f1_quality;
  std::optional<double> macro_f1_explanations;
};

MetricRow make_row(std::string name, const ConfusionTally& t);

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& v);

using Thresholds = std::array<double, kNumExplanations>;
inline constexpr Thresholds kDefaultThresholds{0.5, 0.5, 0.5, 0.5, 0.5};

/// Scores predictions against targets. quality_probs is N x 4 (rows sum to 1),
/// explanation_probs is N x 5; explanation c is predicted iff prob >= thresholds[c].
MetricReport evaluate_model(std::span<const FusedRecord> targets, const Eigen::MatrixXd& quality_probs,
                            const Eigen::MatrixXd& explanation_probs, const Thresholds& thresholds = kDefaultThresholds);

/// Same report from hard labels.
MetricReport evaluate_labels(std::span<const FusedRecord> targets, std::span<const FusedRecord> predictions);

enum class AgreementScope { quality, explanations };

struct AgreementRow {
  std::string name;
  std::int64_t image_count = 0;  // images carrying this label after fusion
  MeanStd pairwise_f1;
};

struct AgreementReport {
  AgreementScope scope = AgreementScope::quality;
  std::vector<AgreementRow> rows;
  /// Across-row summary: mean and population std of the row means.
  MeanStd mean_row;
  std::int64_t rater_pairs = 0;  // pairs with at least one co-labelled image
};

/// Pairwise inter-rater F1 over unordered rater pairs, restricted to the
/// images both raters labelled. Undefined per-class F1 values are excluded.
AgreementReport pairwise_interrater(std::span<const std::vector<RaterAnnotation>> annotations, AgreementScope scope);

struct ThresholdRow {
  double threshold = 0.0;
  ConfusionTally counts;
  std::optional<double> sensitivity, specificity, f1;
};

struct ThresholdTable {
  std::vector<ThresholdRow> rows;
  std::optional<std::size_t> recommended;  // row with the highest F1 (first on ties)
};

/// Predicted positive iff score >= threshold.
ThresholdTable calibrate_threshold(std::span<const double> scores, std::span<const std::uint8_t> targets,
                                   std::span<const double> grid);

/// start, start+step, ... up to and including stop (with 1e-9 slack).
std::vector<double> threshold_grid(double start, double stop, double step);

}  // namespace dermq
