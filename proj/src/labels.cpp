#include "dermq/labels.hpp"

#include "dermq/error.hpp"

namespace dermq {

namespace {
constexpr std::array<std::string_view, kNumQualityClasses> kQualityNames = {"lesion", "no_skin", "healthy_skin",
                                                                             "poor_quality"};
constexpr std::array<std::string_view, kNumExplanations> kExplanationNames = {
    "bad_framing", "bad_light", "blurry", "low_resolution", "too_far_away"};
}  // namespace

std::string_view to_string(QualityClass q) { return kQualityNames[static_cast<std::size_t>(index_of(q))]; }
std::string_view to_string(ExplanationKind e) { return kExplanationNames[static_cast<std::size_t>(index_of(e))]; }

std::optional<QualityClass> parse_quality(std::string_view name) {
  for (std::size_t i = 0; i < kQualityNames.size(); ++i)
    if (kQualityNames[i] == name) return kQualityClasses[i];
  return std::nullopt;
}

std::optional<ExplanationKind> parse_explanation(std::string_view name) {
  for (std::size_t i = 0; i < kExplanationNames.size(); ++i)
    if (kExplanationNames[i] == name) return kExplanationKinds[i];
  return std::nullopt;
}

QualityClass quality_from_index(int i) {
  if (i < 0 || i >= kNumQualityClasses) throw ArgumentError("quality class index out of range: " + std::to_string(i));
  return kQualityClasses[static_cast<std::size_t>(i)];
}

ExplanationKind explanation_from_index(int i) {
  if (i < 0 || i >= kNumExplanations) throw ArgumentError("explanation index out of range: " + std::to_string(i));
  return kExplanationKinds[static_cast<std::size_t>(i)];
}

std::vector<ExplanationKind> kinds_in(const ExplanationSet& set) {
  std::vector<ExplanationKind> out;
  for (auto k : kExplanationKinds)
    if (contains(set, k)) out.push_back(k);
  return out;
}

}  // namespace dermq
