#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "dermq/corpus.hpp"
#include "dermq/fusion.hpp"
#include "dermq/metrics.hpp"
#include "dermq/network.hpp"
#include "dermq/training.hpp"

namespace dermq {

/// Everything one pipeline invocation needs. Serialized as a single JSON
/// document with sections corpus, fusion, training, schedule, backbone and
/// thresholds. Missing keys take defaults; unknown keys are rejected.
struct RunConfig {
  CorpusConfig corpus;
  TargetSource target_source = TargetSource::truth;
  TrainConfig training;
  ScheduleConfig schedule;
  BackboneConfig backbone;
  Thresholds thresholds = kDefaultThresholds;

  void validate() const;
};

nlohmann::json to_json(const BackboneConfig& c);
nlohmann::json to_json(const CorpusConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const ScheduleConfig& c);
nlohmann::json thresholds_json(const Thresholds& t);
nlohmann::json to_json(const RunConfig& c);

// Parsers throw ConfigError naming the offending key path.
BackboneConfig backbone_from_json(const nlohmann::json& j, const std::string& path = "backbone");
CorpusConfig corpus_from_json(const nlohmann::json& j, const std::string& path = "corpus");
TrainConfig training_from_json(const nlohmann::json& j, const std::string& path = "training");
ScheduleConfig schedule_from_json(const nlohmann::json& j, const std::string& path = "schedule");
Thresholds thresholds_from_json(const nlohmann::json& j, const std::string& path = "thresholds");
RunConfig run_config_from_json(const nlohmann::json& j);

/// Training report: config echo, per-run epoch logs and final metrics, and
/// the across-run mean and standard deviation.
nlohmann::json to_json(const RunReport& report);
nlohmann::json to_json(const TrainSummary& summary);
nlohmann::json training_report(const RunConfig& config, std::span<const RunReport> runs);

/// Reads and parses a config file; an empty path yields the defaults.
RunConfig load_run_config(const std::string& path);

}  // namespace dermq
