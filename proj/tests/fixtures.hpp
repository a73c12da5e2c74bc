#pragma once
// Seeded random inputs shared by the unit and acceptance tests.

#include <Eigen/Core>
#include <random>
#include <string>
#include <vector>

#include "dermq/records.hpp"

namespace fixture {

using dermq::ExplanationSet;
using dermq::FusedRecord;
using dermq::QualityClass;
using dermq::RaterAnnotation;

inline QualityClass random_quality(std::mt19937_64& g) {
  return static_cast<QualityClass>(std::uniform_int_distribution<int>(0, 3)(g));
}

inline ExplanationSet random_set(std::mt19937_64& g) {
  return ExplanationSet(std::uniform_int_distribution<unsigned>(0, 31)(g));
}

inline std::vector<FusedRecord> random_targets(std::mt19937_64& g, std::size_t n) {
  std::vector<FusedRecord> out(n);
  for (auto& t : out) {
    t.quality = random_quality(g);
    if (t.quality == QualityClass::poor_quality) t.explanations = random_set(g);
  }
  return out;
}

// Rows are probability vectors; a few rows get exact ties and exact threshold hits.
inline Eigen::MatrixXd random_simplex(std::mt19937_64& g, std::size_t n, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::uniform_int_distribution<int>(0, 9)(g) == 0) {
      p.row(i).setConstant(1.0 / k);
      continue;
    }
    for (int c = 0; c < k; ++c) p(i, c) = -std::log(1.0 - u(g));
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline Eigen::MatrixXd random_unit(std::mt19937_64& g, std::size_t n, int k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double grid[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  Eigen::MatrixXd p(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c)
      p(i, c) = std::uniform_int_distribution<int>(0, 4)(g) == 0 ? grid[std::uniform_int_distribution<int>(0, 4)(g)]
                                                                  : u(g);
  return p;
}

// Per-image annotation lists from a panel of `raters`, each image labelled by
// a random subset of 1..raters of them.
inline std::vector<std::vector<RaterAnnotation>> random_annotations(std::mt19937_64& g, std::size_t images,
                                                                    int raters) {
  std::vector<std::vector<RaterAnnotation>> out(images);
  for (auto& img : out) {
    std::vector<int> ids(raters);
    for (int r = 0; r < raters; ++r) ids[r] = r;
    std::shuffle(ids.begin(), ids.end(), g);
    int k = std::uniform_int_distribution<int>(1, raters)(g);
    for (int j = 0; j < k; ++j) {
      RaterAnnotation a;
      a.rater_id = "r" + std::to_string(ids[j]);
      a.quality = random_quality(g);
      if (a.quality == QualityClass::poor_quality) a.explanations = random_set(g);
      img.push_back(a);
    }
  }
  return out;
}

}  // namespace fixture
