#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dermq/image.hpp"
#include "dermq/records.hpp"

namespace dermq {

struct DegradationSpec {
  ExplanationKind kind = ExplanationKind::blurry;
  double magnitude = 1.0;  // (0, 1]; larger is more severe
};

/// Simulated annotator: per-class confusion rows (truth -> reported) and
/// explanation noise rates.
struct RaterProfile {
  std::string id;
  Eigen::Matrix4d confusion = Eigen::Matrix4d::Identity();
  double miss_rate = 0.0;         // probability of dropping a true explanation
  double false_alarm_rate = 0.0;  // probability of adding an absent one
};

struct RaterPanelConfig {
  std::vector<RaterProfile> profiles;
  int min_per_image = 3;
  int max_per_image = 5;
};

inline constexpr int kMaxRatersPerImage = 12;

struct CorpusConfig {
  int resolution = 128;
  /// Images per QualityClass, canonical order.
  std::array<int, kNumQualityClasses> counts{40, 10, 20, 30};
  double min_contrast = 0.15;
  double blur_sigma_max = 6.0;
  double downsample_factor_max = 7.0;
  double magnitude_min = 0.5;
  double magnitude_max = 1.0;
  /// Relative frequency of each explanation kind in degraded images.
  std::array<double, kNumExplanations> kind_weights{1.0, 1.0, 1.0, 1.0, 1.0};
  /// Relative frequency of applying 1, 2 or 3 kinds to one image.
  std::array<double, 3> kinds_per_image_weights{0.6, 0.3, 0.1};
  RaterPanelConfig raters = default_rater_panel();

  static RaterPanelConfig default_rater_panel();
  /// Throws ConfigError naming the offending key.
  void validate() const;
  int total() const;
};

struct Manifest {
  std::string path;  // manifest.jsonl
  std::vector<CorpusRecord> records;
};

/// Clean skin scene with one elliptical lesion near the frame centre.
std::pair<ImageTensor, SceneMeta> generate_scene(std::uint64_t seed, const CorpusConfig& config);
/// Skin texture with no lesion.
ImageTensor generate_healthy_skin(std::uint64_t seed, const CorpusConfig& config);
/// Procedural non-skin texture: checkerboard, gradient or noise patches.
ImageTensor generate_non_skin(std::uint64_t seed, const CorpusConfig& config);

std::pair<ImageTensor, SceneMeta> apply_degradation(const ImageTensor& image, const SceneMeta& scene,
                                                    const DegradationSpec& spec, std::uint64_t seed,
                                                    const CorpusConfig& config = {});

/// Applies several degradations in canonical physical order (geometry, optics,
/// sampling, exposure).
std::pair<ImageTensor, SceneMeta> apply_degradations(ImageTensor image, SceneMeta scene,
                                                     std::vector<DegradationSpec> specs, std::uint64_t seed,
                                                     const CorpusConfig& config = {});

/// Separable Gaussian blur with replicated borders; kernel radius floor(3 sigma).
ImageTensor gaussian_blur(const ImageTensor& image, double sigma);

std::vector<RaterAnnotation> simulate_raters(const FusedRecord& truth, std::span<const RaterProfile> profiles,
                                             std::uint64_t seed);

/// Writes images under out_dir/images and out_dir/manifest.jsonl.
Manifest generate_corpus(const CorpusConfig& config, std::uint64_t seed, const std::string& out_dir,
                         unsigned threads = 1);

void write_manifest(const std::vector<CorpusRecord>& records, const std::string& path);
/// Validates every record; `expected_resolution` <= 0 means "whatever the first image has".
std::vector<CorpusRecord> load_manifest(const std::string& path, int expected_resolution = 0);

}  // namespace dermq
