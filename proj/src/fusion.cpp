#include "dermq/fusion.hpp"

#include <algorithm>

#include "dermq/error.hpp"

namespace dermq {

namespace {
// Higher wins ties.
constexpr std::array<int, kNumQualityClasses> kTiePriority = {0, 2, 1, 3};
}  // namespace

QualityClass fuse_quality(std::span<const RaterAnnotation> annotations) {
  if (annotations.empty()) throw ArgumentError("fuse_quality needs at least one annotation");
  std::array<int, kNumQualityClasses> votes{};
  for (const auto& a : annotations) ++votes[static_cast<std::size_t>(index_of(a.quality))];
  int best = 0;
  for (int c = 1; c < kNumQualityClasses; ++c)
    if (votes[c] > votes[best] || (votes[c] == votes[best] && kTiePriority[c] > kTiePriority[best])) best = c;
  return quality_from_index(best);
}

ExplanationSet fuse_explanations(std::span<const RaterAnnotation> annotations) {
  ExplanationSet out;
  for (const auto& a : annotations) out |= a.explanations;
  return out;
}

ClassWeights compute_class_weights(const std::array<std::int64_t, kNumQualityClasses>& counts) {
  for (int c = 0; c < kNumQualityClasses; ++c)
    if (counts[c] < 1)
      throw ArgumentError("class '" + std::string(to_string(quality_from_index(c))) + "' has no training samples");
  const double n_max = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  ClassWeights w;
  for (int c = 0; c < kNumQualityClasses; ++c)
    w.weights[c] = std::min(n_max / static_cast<double>(counts[c]), kMaxClassWeight);
  return w;
}

std::array<std::int64_t, kNumQualityClasses> class_counts(std::span<const FusedRecord> targets) {
  std::array<std::int64_t, kNumQualityClasses> n{};
  for (const auto& t : targets) ++n[static_cast<std::size_t>(index_of(t.quality))];
  return n;
}

std::string_view to_string(TargetSource s) { return s == TargetSource::truth ? "truth" : "fused"; }

TargetSource parse_target_source(std::string_view s) {
  if (s == "truth") return TargetSource::truth;
  if (s == "fused") return TargetSource::fused;
  throw ConfigError("fusion.source must be 'truth' or 'fused', got '" + std::string(s) + "'");
}

std::vector<FusedRecord> build_targets(std::span<const CorpusRecord> records, TargetSource source) {
  std::vector<FusedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (source == TargetSource::truth) {
      out.push_back(r.truth());
      continue;
    }
    if (r.annotations.empty()) throw DataError("record " + r.image_path + " has no annotations to fuse");
    out.push_back({fuse_quality(r.annotations), fuse_explanations(r.annotations)});
  }
  return out;
}

}  // namespace dermq
