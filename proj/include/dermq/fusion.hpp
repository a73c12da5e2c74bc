#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "dermq/records.hpp"

namespace dermq {

/// Plurality vote. Ties go to the more conservative class:
/// poor_quality > no_skin > healthy_skin > lesion.
QualityClass fuse_quality(std::span<const RaterAnnotation> annotations);

/// Union of every rater's explanations.
ExplanationSet fuse_explanations(std::span<const RaterAnnotation> annotations);

inline constexpr double kMaxClassWeight = 10.0;

struct ClassWeights {
  std::array<double, kNumQualityClasses> weights{1.0, 1.0, 1.0, 1.0};
  double operator[](QualityClass q) const { return weights[static_cast<std::size_t>(index_of(q))]; }
};

/// w_c = min(n_max / n_c, 10).
ClassWeights compute_class_weights(const std::array<std::int64_t, kNumQualityClasses>& counts);

std::array<std::int64_t, kNumQualityClasses> class_counts(std::span<const FusedRecord> targets);

enum class TargetSource { truth, fused };

std::string_view to_string(TargetSource s);
TargetSource parse_target_source(std::string_view s);

std::vector<FusedRecord> build_targets(std::span<const CorpusRecord> records, TargetSource source);

}  // namespace dermq
