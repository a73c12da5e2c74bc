#include "dermq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dermq/fusion.hpp"

namespace dermq {

namespace {
std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

ConfusionTally tally_binary(std::span<const std::uint8_t> reference, std::span<const std::uint8_t> predicted) {
  if (reference.size() != predicted.size()) throw ArgumentError("tally: reference and prediction lengths differ");
  ConfusionTally t;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const bool r = reference[i] != 0, p = predicted[i] != 0;
    t.tp += r && p;
    t.fp += !r && p;
    t.fn += r && !p;
    t.tn += !r && !p;
  }
  return t;
}

std::optional<double> sensitivity(const ConfusionTally& t) { return ratio(t.tp, t.tp + t.fn); }
std::optional<double> specificity(const ConfusionTally& t) { return ratio(t.tn, t.tn + t.fp); }
std::optional<double> f1(const ConfusionTally& t) { return ratio(2 * t.tp, 2 * t.tp + t.fp + t.fn); }

std::optional<double> mean_defined(std::span<const std::optional<double>> values) {
  double sum = 0;
  int n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.n = static_cast<std::int64_t>(values.size());
  if (values.empty()) return out;
  double sum = 0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  out.mean = mean;
  out.std = std::sqrt(ss / static_cast<double>(values.size()));
  return out;
}

MetricRow make_row(std::string name, const ConfusionTally& t) {
  return {std::move(name), t, sensitivity(t), specificity(t), f1(t), t.tp + t.fn};
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

MetricReport evaluate_labels(std::span<const FusedRecord> targets, std::span<const FusedRecord> predictions) {
  if (targets.size() != predictions.size()) throw ArgumentError("evaluate: target and prediction counts differ");
  std::vector<QualityClass> ref_q, pred_q;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ref_q.push_back(targets[i].quality);
    pred_q.push_back(predictions[i].quality);
  }
  MetricReport report;
  std::vector<std::optional<double>> f1s;
  for (auto q : kQualityClasses) {
    report.quality.push_back(make_row(std::string(to_string(q)), tally<QualityClass>(ref_q, pred_q, q)));
    f1s.push_back(report.quality.back().f1);
  }
  report.macro_f1_quality = mean_defined(f1s);

  f1s.clear();
  for (auto k : kExplanationKinds) {
    std::vector<std::uint8_t> ref_e, pred_e;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      ref_e.push_back(contains(targets[i].explanations, k));
      pred_e.push_back(contains(predictions[i].explanations, k));
    }
    report.explanations.push_back(make_row(std::string(to_string(k)), tally_binary(ref_e, pred_e)));
    f1s.push_back(report.explanations.back().f1);
  }
  report.macro_f1_explanations = mean_defined(f1s);
  return report;
}

MetricReport evaluate_model(std::span<const FusedRecord> targets, const Eigen::MatrixXd& quality_probs,
                            const Eigen::MatrixXd& explanation_probs, const Thresholds& thresholds) {
  const auto n = static_cast<Eigen::Index>(targets.size());
  if (quality_probs.rows() != n || quality_probs.cols() != kNumQualityClasses)
    throw ArgumentError("quality probabilities must be N x 4");
  if (explanation_probs.rows() != n || explanation_probs.cols() != kNumExplanations)
    throw ArgumentError("explanation probabilities must be N x 5");
  if (!quality_probs.allFinite() || (quality_probs.array() < 0.0).any() || (quality_probs.array() > 1.0).any())
    throw ArgumentError("quality probabilities must lie in [0, 1]");
  if (!explanation_probs.allFinite() || (explanation_probs.array() < 0.0).any() ||
      (explanation_probs.array() > 1.0).any())
    throw ArgumentError("explanation probabilities must lie in [0, 1]");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(quality_probs.row(i).sum() - 1.0) > 1e-5)
      throw ArgumentError("quality probabilities of row " + std::to_string(i) + " do not sum to 1");

  std::vector<FusedRecord> predictions(targets.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& p = predictions[static_cast<std::size_t>(i)];
    p.quality = quality_from_index(argmax_lowest(quality_probs.row(i).transpose()));
    for (int k = 0; k < kNumExplanations; ++k) p.explanations.set(k, explanation_probs(i, k) >= thresholds[k]);
  }
  return evaluate_labels(targets, predictions);
}

AgreementReport pairwise_interrater(std::span<const std::vector<RaterAnnotation>> annotations, AgreementScope scope) {
  std::set<std::string> rater_set;
  std::vector<std::map<std::string, const RaterAnnotation*>> by_image(annotations.size());
  for (std::size_t i = 0; i < annotations.size(); ++i)
    for (const auto& a : annotations[i]) {
      if (!by_image[i].emplace(a.rater_id, &a).second)
        throw ArgumentError("rater '" + a.rater_id + "' annotated image " + std::to_string(i) + " twice");
      rater_set.insert(a.rater_id);
    }
  if (rater_set.size() < 2) throw ArgumentError("pairwise agreement needs at least two raters");
  const std::vector<std::string> raters(rater_set.begin(), rater_set.end());

  const int n_rows = scope == AgreementScope::quality ? kNumQualityClasses : kNumExplanations;
  std::vector<std::vector<double>> per_row(static_cast<std::size_t>(n_rows));

  AgreementReport report;
  report.scope = scope;
  for (std::size_t a = 0; a < raters.size(); ++a)
    for (std::size_t b = a + 1; b < raters.size(); ++b) {
      std::vector<const RaterAnnotation*> ref, pred;
      for (const auto& img : by_image) {
        auto ia = img.find(raters[a]), ib = img.find(raters[b]);
        if (ia != img.end() && ib != img.end()) {
          ref.push_back(ia->second);
          pred.push_back(ib->second);
        }
      }
      if (ref.empty()) continue;
      ++report.rater_pairs;
      for (int c = 0; c < n_rows; ++c) {
        std::vector<std::uint8_t> r(ref.size()), p(ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
          if (scope == AgreementScope::quality) {
            r[i] = index_of(ref[i]->quality) == c;
            p[i] = index_of(pred[i]->quality) == c;
          } else {
            r[i] = ref[i]->explanations.test(static_cast<std::size_t>(c));
            p[i] = pred[i]->explanations.test(static_cast<std::size_t>(c));
          }
        }
        if (auto v = f1(tally_binary(r, p))) per_row[static_cast<std::size_t>(c)].push_back(*v);
      }
    }

  std::vector<double> row_means;
  for (int c = 0; c < n_rows; ++c) {
    AgreementRow row;
    row.name = scope == AgreementScope::quality ? std::string(to_string(quality_from_index(c)))
                                                : std::string(to_string(explanation_from_index(c)));
    for (const auto& img : annotations) {
      if (img.empty()) continue;
      if (scope == AgreementScope::quality)
        row.image_count += index_of(fuse_quality(img)) == c;
      else
        row.image_count += fuse_explanations(img).test(static_cast<std::size_t>(c));
    }
    row.pairwise_f1 = mean_std(per_row[static_cast<std::size_t>(c)]);
    if (row.pairwise_f1.mean) row_means.push_back(*row.pairwise_f1.mean);
    report.rows.push_back(std::move(row));
  }
  report.mean_row = mean_std(row_means);
  return report;
}

ThresholdTable calibrate_threshold(std::span<const double> scores, std::span<const std::uint8_t> targets,
                                   std::span<const double> grid) {
  if (grid.empty()) throw ArgumentError("threshold grid is empty");
  if (!std::is_sorted(grid.begin(), grid.end())) throw ArgumentError("threshold grid must be sorted ascending");
  if (scores.size() != targets.size()) throw ArgumentError("scores and targets differ in length");
  for (double s : scores)
    if (!(s >= 0.0 && s <= 1.0)) throw ArgumentError("scores must lie in [0, 1]");

  ThresholdTable table;
  std::vector<std::uint8_t> predicted(scores.size());
  for (double th : grid) {
    for (std::size_t i = 0; i < scores.size(); ++i) predicted[i] = scores[i] >= th;
    const auto t = tally_binary(targets, predicted);
    table.rows.push_back({th, t, sensitivity(t), specificity(t), f1(t)});
  }
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& f = table.rows[i].f1;
    if (f && (!table.recommended || *f > *table.rows[*table.recommended].f1)) table.recommended = i;
  }
  return table;
}

std::vector<double> threshold_grid(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start)) throw ArgumentError("grid needs step > 0 and stop >= start");
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = start + static_cast<double>(i) * step;
  return out;
}

}  // namespace dermq
