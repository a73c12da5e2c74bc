#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dermq/labels.hpp"

namespace dermq {

/// One rater's verdict on one image. Explanations are only ever non-empty for
/// poor_quality verdicts.
struct RaterAnnotation {
  std::string rater_id;
  QualityClass quality = QualityClass::lesion;
  ExplanationSet explanations;

  bool operator==(const RaterAnnotation&) const = default;
};

/// Training target for one image.
struct FusedRecord {
  QualityClass quality = QualityClass::lesion;
  ExplanationSet explanations;

  bool operator==(const FusedRecord&) const = default;
};

/// Geometry and tones of a synthetic skin scene, in pixel units.
struct SceneMeta {
  std::array<double, 2> lesion_center{};  // (row, col)
  double lesion_radius = 0.0;
  std::array<double, 3> background_tone{};
  std::array<double, 3> lesion_tone{};

  bool operator==(const SceneMeta&) const = default;
};

struct CorpusRecord {
  std::string image_path;  // relative to the manifest directory
  QualityClass truth_quality = QualityClass::lesion;
  ExplanationSet truth_explanations;
  std::vector<RaterAnnotation> annotations;
  std::optional<SceneMeta> scene;

  FusedRecord truth() const { return {truth_quality, truth_explanations}; }
  bool operator==(const CorpusRecord&) const = default;
};

}  // namespace dermq
