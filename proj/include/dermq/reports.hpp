#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "dermq/metrics.hpp"

namespace dermq {

// Undefined metrics serialize as JSON null and as an empty CSV field.

nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const AgreementReport& report);
nlohmann::json to_json(const ThresholdTable& table);
nlohmann::json to_json(const MeanStd& value);

/// name,recall,specificity,f1,support; quality rows first, then explanation rows.
std::string metric_csv(const MetricReport& report);
/// name,image_count,pairwise_f1_mean,pairwise_f1_std,pairs; last row is "mean".
std::string agreement_csv(const AgreementReport& report);
/// threshold,sensitivity,specificity,f1,recommended
std::string threshold_csv(const ThresholdTable& table);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace dermq
