#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dermq {

/// Per-image verdict. "lesion" covers every diagnosable image.
enum class QualityClass : std::uint8_t { lesion = 0, no_skin = 1, healthy_skin = 2, poor_quality = 3 };

/// Reasons an image cannot be diagnosed, in canonical vector order.
enum class ExplanationKind : std::uint8_t {
  bad_framing = 0,
  bad_light = 1,
  blurry = 2,
  low_resolution = 3,
  too_far_away = 4,
};

inline constexpr int kNumQualityClasses = 4;
inline constexpr int kNumExplanations = 5;

inline constexpr std::array<QualityClass, kNumQualityClasses> kQualityClasses = {
    QualityClass::lesion, QualityClass::no_skin, QualityClass::healthy_skin, QualityClass::poor_quality};

inline constexpr std::array<ExplanationKind, kNumExplanations> kExplanationKinds = {
    ExplanationKind::bad_framing, ExplanationKind::bad_light, ExplanationKind::blurry,
    ExplanationKind::low_resolution, ExplanationKind::too_far_away};

/// Bit c set iff explanation c (canonical order) is present.
using ExplanationSet = std::bitset<kNumExplanations>;

constexpr int index_of(QualityClass q) { return static_cast<int>(q); }
constexpr int index_of(ExplanationKind e) { return static_cast<int>(e); }

std::string_view to_string(QualityClass q);
std::string_view to_string(ExplanationKind e);

std::optional<QualityClass> parse_quality(std::string_view name);
std::optional<ExplanationKind> parse_explanation(std::string_view name);

QualityClass quality_from_index(int i);
ExplanationKind explanation_from_index(int i);

/// Canonical-order list of the kinds present in `set`.
std::vector<ExplanationKind> kinds_in(const ExplanationSet& set);

inline ExplanationSet make_set(std::initializer_list<ExplanationKind> kinds) {
  ExplanationSet s;
  for (auto k : kinds) s.set(static_cast<std::size_t>(index_of(k)));
  return s;
}

inline bool contains(const ExplanationSet& s, ExplanationKind k) {
  return s.test(static_cast<std::size_t>(index_of(k)));
}

}  // namespace dermq
