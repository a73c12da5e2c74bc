#include "dermq/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dermq/error.hpp"
#include "dermq/reports.hpp"

namespace dermq {

using nlohmann::json;

namespace {

// Strict view of one JSON object: typed getters plus a final unknown-key check.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  std::string key(const std::string& k) const { return path_ + "." + k; }
  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k) && !j_[k].is_null();
  }
  const json& at(const std::string& k) const { return j_[k]; }

  void number(const std::string& k, double& out) {
    if (!has(k)) return;
    if (!j_[k].is_number()) throw ConfigError(key(k) + " must be a number");
    out = j_[k].get<double>();
  }
  void integer(const std::string& k, int& out) {
    if (!has(k)) return;
    if (!j_[k].is_number_integer()) throw ConfigError(key(k) + " must be an integer");
    out = j_[k].get<int>();
  }
  void unsigned64(const std::string& k, std::uint64_t& out) {
    if (!has(k)) return;
    if (!j_[k].is_number_unsigned()) throw ConfigError(key(k) + " must be a non-negative integer");
    out = j_[k].get<std::uint64_t>();
  }
  void string(const std::string& k, std::string& out) {
    if (!has(k)) return;
    if (!j_[k].is_string()) throw ConfigError(key(k) + " must be a string");
    out = j_[k].get<std::string>();
  }
  template <std::size_t N>
  void numbers(const std::string& k, std::array<double, N>& out) {
    if (!has(k)) return;
    if (!j_[k].is_array() || j_[k].size() != N) throw ConfigError(key(k) + " must be an array of " + std::to_string(N));
    for (std::size_t i = 0; i < N; ++i) {
      if (!j_[k][i].is_number()) throw ConfigError(key(k) + " entries must be numbers");
      out[i] = j_[k][i].get<double>();
    }
  }
  void integers(const std::string& k, std::vector<int>& out) {
    if (!has(k)) return;
    if (!j_[k].is_array()) throw ConfigError(key(k) + " must be an array");
    out.clear();
    for (const auto& v : j_[k]) {
      if (!v.is_number_integer()) throw ConfigError(key(k) + " entries must be integers");
      out.push_back(v.get<int>());
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + key(k));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json quality_keyed(const std::array<double, kNumQualityClasses>& v) {
  json j = json::object();
  for (int q = 0; q < kNumQualityClasses; ++q) j[std::string(to_string(quality_from_index(q)))] = v[q];
  return j;
}

}  // namespace

json to_json(const BackboneConfig& c) {
  return {{"input_resolution", c.input_resolution},
          {"stage_widths", c.stage_widths},
          {"stage_strides", c.stage_strides},
          {"hidden_units", c.hidden_units},
          {"dropout", c.dropout}};
}

BackboneConfig backbone_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  BackboneConfig c;
  std::string preset;
  s.string("preset", preset);
  if (!preset.empty()) c = BackboneConfig::preset(preset);
  s.integer("input_resolution", c.input_resolution);
  s.integers("stage_widths", c.stage_widths);
  s.integers("stage_strides", c.stage_strides);
  s.integer("hidden_units", c.hidden_units);
  s.number("dropout", c.dropout);
  s.finish();
  return c;
}

json to_json(const CorpusConfig& c) {
  json counts = json::object();
  for (int q = 0; q < kNumQualityClasses; ++q) counts[std::string(to_string(quality_from_index(q)))] = c.counts[q];
  json kinds = json::object();
  for (int k = 0; k < kNumExplanations; ++k)
    kinds[std::string(to_string(explanation_from_index(k)))] = c.kind_weights[k];
  json profiles = json::array();
  for (const auto& p : c.raters.profiles) {
    json rows = json::array();
    for (int r = 0; r < 4; ++r) rows.push_back({p.confusion(r, 0), p.confusion(r, 1), p.confusion(r, 2), p.confusion(r, 3)});
    profiles.push_back(
        {{"id", p.id}, {"confusion", rows}, {"miss_rate", p.miss_rate}, {"false_alarm_rate", p.false_alarm_rate}});
  }
  return {{"resolution", c.resolution},
          {"counts", counts},
          {"min_contrast", c.min_contrast},
          {"blur_sigma_max", c.blur_sigma_max},
          {"downsample_factor_max", c.downsample_factor_max},
          {"magnitude_min", c.magnitude_min},
          {"magnitude_max", c.magnitude_max},
          {"kind_weights", kinds},
          {"kinds_per_image_weights", c.kinds_per_image_weights},
          {"raters",
           {{"profiles", profiles}, {"min_per_image", c.raters.min_per_image}, {"max_per_image", c.raters.max_per_image}}}};
}

CorpusConfig corpus_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  CorpusConfig c;
  s.integer("resolution", c.resolution);
  if (s.has("counts")) {
    Section counts(s.at("counts"), s.key("counts"));
    for (int q = 0; q < kNumQualityClasses; ++q) {
      const std::string name(to_string(quality_from_index(q)));
      counts.integer(name, c.counts[q]);
      if (c.counts[q] < 0) throw ConfigError(counts.key(name) + " must be >= 0");
    }
    counts.finish();
  }
  s.number("min_contrast", c.min_contrast);
  s.number("blur_sigma_max", c.blur_sigma_max);
  s.number("downsample_factor_max", c.downsample_factor_max);
  s.number("magnitude_min", c.magnitude_min);
  s.number("magnitude_max", c.magnitude_max);
  if (s.has("kind_weights")) {
    Section kinds(s.at("kind_weights"), s.key("kind_weights"));
    for (int k = 0; k < kNumExplanations; ++k) kinds.number(std::string(to_string(explanation_from_index(k))), c.kind_weights[k]);
    kinds.finish();
  }
  s.numbers("kinds_per_image_weights", c.kinds_per_image_weights);
  if (s.has("raters")) {
    Section r(s.at("raters"), s.key("raters"));
    r.integer("min_per_image", c.raters.min_per_image);
    r.integer("max_per_image", c.raters.max_per_image);
    if (r.has("profiles")) {
      if (!r.at("profiles").is_array()) throw ConfigError(r.key("profiles") + " must be an array");
      c.raters.profiles.clear();
      std::size_t i = 0;
      for (const auto& pj : r.at("profiles")) {
        Section p(pj, r.key("profiles[" + std::to_string(i++) + "]"));
        RaterProfile prof;
        p.string("id", prof.id);
        if (prof.id.empty()) throw ConfigError(p.key("id") + " is required");
        if (p.has("confusion")) {
          const auto& rows = p.at("confusion");
          if (!rows.is_array() || rows.size() != 4) throw ConfigError(p.key("confusion") + " must be 4 rows of 4");
          for (int a = 0; a < 4; ++a) {
            if (!rows[a].is_array() || rows[a].size() != 4) throw ConfigError(p.key("confusion") + " must be 4 rows of 4");
            for (int b = 0; b < 4; ++b) {
              if (!rows[a][b].is_number()) throw ConfigError(p.key("confusion") + " entries must be numbers");
              prof.confusion(a, b) = rows[a][b].get<double>();
            }
          }
        }
        p.number("miss_rate", prof.miss_rate);
        p.number("false_alarm_rate", prof.false_alarm_rate);
        p.finish();
        c.raters.profiles.push_back(std::move(prof));
      }
    }
    r.finish();
  }
  s.finish();
  return c;
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"runs", c.runs},
          {"seed", c.seed},
          {"holdout_fraction", c.holdout_fraction},
          {"lambda_quality", c.loss_weights.lambda_quality},
          {"lambda_explanations", c.loss_weights.lambda_explanations},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps},
          {"weight_decay", c.optimizer.weight_decay},
          {"class_weights", c.class_weights ? quality_keyed(c.class_weights->weights) : json(nullptr)}};
}

TrainConfig training_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  TrainConfig c;
  s.integer("epochs", c.epochs);
  s.integer("batch_size", c.batch_size);
  s.integer("runs", c.runs);
  s.unsigned64("seed", c.seed);
  s.number("holdout_fraction", c.holdout_fraction);
  s.number("lambda_quality", c.loss_weights.lambda_quality);
  s.number("lambda_explanations", c.loss_weights.lambda_explanations);
  s.number("beta1", c.optimizer.beta1);
  s.number("beta2", c.optimizer.beta2);
  s.number("eps", c.optimizer.eps);
  s.number("weight_decay", c.optimizer.weight_decay);
  if (s.has("class_weights")) {
    Section w(s.at("class_weights"), s.key("class_weights"));
    ClassWeights cw;
    for (int q = 0; q < kNumQualityClasses; ++q) {
      const std::string name(to_string(quality_from_index(q)));
      if (!w.has(name)) throw ConfigError(w.key(name) + " is required when class weights are given");
      w.number(name, cw.weights[q]);
    }
    w.finish();
    c.class_weights = cw;
  }
  s.finish();
  return c;
}

json to_json(const ScheduleConfig& c) {
  return {{"eta_max", c.eta_max}, {"eta_min", c.eta_min}, {"t0", c.t0}, {"t_mult", c.t_mult}};
}

ScheduleConfig schedule_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  ScheduleConfig c;
  s.number("eta_max", c.eta_max);
  s.number("eta_min", c.eta_min);
  s.integer("t0", c.t0);
  s.integer("t_mult", c.t_mult);
  s.finish();
  return c;
}

json thresholds_json(const Thresholds& t) {
  json j = json::object();
  for (int k = 0; k < kNumExplanations; ++k) j[std::string(to_string(explanation_from_index(k)))] = t[k];
  return j;
}

Thresholds thresholds_from_json(const json& j, const std::string& path) {
  Section s(j, path);
  Thresholds t = kDefaultThresholds;
  for (int k = 0; k < kNumExplanations; ++k) {
    const std::string name(to_string(explanation_from_index(k)));
    s.number(name, t[k]);
    if (!(t[k] >= 0.0 && t[k] <= 1.0)) throw ConfigError(s.key(name) + " must be in [0, 1]");
  }
  s.finish();
  return t;
}

json to_json(const RunConfig& c) {
  return {{"corpus", to_json(c.corpus)},
          {"fusion", {{"source", std::string(to_string(c.target_source))}}},
          {"training", to_json(c.training)},
          {"schedule", to_json(c.schedule)},
          {"backbone", to_json(c.backbone)},
          {"thresholds", thresholds_json(c.thresholds)}};
}

void RunConfig::validate() const {
  corpus.validate();
  training.validate();
  schedule.validate();
  backbone.validate();
  if (backbone.input_resolution != corpus.resolution)
    throw ConfigError("backbone.input_resolution must equal corpus.resolution");
}

RunConfig run_config_from_json(const json& j) {
  Section s(j, "config");
  RunConfig c;
  if (s.has("corpus")) c.corpus = corpus_from_json(s.at("corpus"));
  if (s.has("fusion")) {
    Section f(s.at("fusion"), "fusion");
    std::string source = "truth";
    f.string("source", source);
    c.target_source = parse_target_source(source);
    f.finish();
  }
  if (s.has("training")) c.training = training_from_json(s.at("training"));
  if (s.has("schedule")) c.schedule = schedule_from_json(s.at("schedule"));
  if (s.has("backbone")) c.backbone = backbone_from_json(s.at("backbone"));
  if (s.has("thresholds")) c.thresholds = thresholds_from_json(s.at("thresholds"));
  s.finish();
  return c;
}

json to_json(const RunReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"loss_total", e.loss_total},
                      {"loss_quality", e.loss_quality},
                      {"loss_explanations", e.loss_explanations}});
  return {{"run", r.run},
          {"seed", r.seed},
          {"class_weights", quality_keyed(r.class_weights.weights)},
          {"train_size", r.train_size},
          {"holdout_size", r.holdout_size},
          {"epochs", epochs},
          {"final", to_json(r.holdout)}};
}

json to_json(const TrainSummary& s) {
  json per_class = json::object(), per_explanation = json::object();
  for (const auto& [name, v] : s.per_class_f1) per_class[name] = to_json(v);
  for (const auto& [name, v] : s.per_explanation_f1) per_explanation[name] = to_json(v);
  return {{"macro_f1", to_json(s.macro_f1)},
          {"macro_f1_explanations", to_json(s.macro_f1_explanations)},
          {"per_class_f1", per_class},
          {"per_explanation_f1", per_explanation}};
}

json training_report(const RunConfig& config, std::span<const RunReport> runs) {
  json jr = json::array();
  for (const auto& r : runs) jr.push_back(to_json(r));
  return {{"config", to_json(config)}, {"runs", jr}, {"aggregate", to_json(summarize_runs(runs))}};
}

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config", path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace dermq
