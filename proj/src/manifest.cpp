#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "dermq/corpus.hpp"
#include "dermq/error.hpp"

namespace dermq {

using nlohmann::json;

namespace {

json explanations_json(const ExplanationSet& set) {
  json arr = json::array();
  for (auto k : kinds_in(set)) arr.push_back(std::string(to_string(k)));
  return arr;
}

json record_json(const CorpusRecord& r) {
  json j;
  j["image_path"] = r.image_path;
  j["truth_quality"] = std::string(to_string(r.truth_quality));
  j["truth_explanations"] = explanations_json(r.truth_explanations);
  json anns = json::array();
  for (const auto& a : r.annotations)
    anns.push_back({{"rater_id", a.rater_id},
                    {"quality", std::string(to_string(a.quality))},
                    {"explanations", explanations_json(a.explanations)}});
  j["annotations"] = std::move(anns);
  if (r.scene) {
    const auto& s = *r.scene;
    j["scene"] = {{"lesion_center", s.lesion_center},
                  {"lesion_radius", s.lesion_radius},
                  {"background_tone", s.background_tone},
                  {"lesion_tone", s.lesion_tone}};
  } else {
    j["scene"] = nullptr;
  }
  return j;
}

QualityClass quality_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_string()) throw LoadError(line, std::string("missing string field '") + key + "'");
  const auto q = parse_quality(j[key].get<std::string>());
  if (!q) throw LoadError(line, "unknown quality class '" + j[key].get<std::string>() + "'");
  return *q;
}

ExplanationSet explanation_field(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array()) throw LoadError(line, std::string("missing array field '") + key + "'");
  ExplanationSet set;
  for (const auto& e : j[key]) {
    if (!e.is_string()) throw LoadError(line, std::string("non-string entry in '") + key + "'");
    const auto k = parse_explanation(e.get<std::string>());
    if (!k) throw LoadError(line, "unknown explanation '" + e.get<std::string>() + "'");
    set.set(static_cast<std::size_t>(index_of(*k)));
  }
  return set;
}

template <std::size_t N>
std::array<double, N> number_array(const json& j, const char* key, std::size_t line) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != N)
    throw LoadError(line, std::string("scene field '") + key + "' must be an array of " + std::to_string(N));
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[key][i].is_number()) throw LoadError(line, std::string("scene field '") + key + "' must be numeric");
    out[i] = j[key][i].get<double>();
  }
  return out;
}

CorpusRecord parse_record(const json& j, std::size_t line) {
  if (!j.is_object()) throw LoadError(line, "record must be a JSON object");
  static const std::set<std::string> kKeys = {"image_path", "truth_quality", "truth_explanations", "annotations",
                                              "scene"};
  for (const auto& [key, _] : j.items())
    if (!kKeys.count(key)) throw LoadError(line, "unknown key '" + key + "'");

  CorpusRecord r;
  if (!j.contains("image_path") || !j["image_path"].is_string()) throw LoadError(line, "missing string field 'image_path'");
  r.image_path = j["image_path"].get<std::string>();
  r.truth_quality = quality_field(j, "truth_quality", line);
  r.truth_explanations = explanation_field(j, "truth_explanations", line);
  if ((r.truth_quality == QualityClass::poor_quality) != r.truth_explanations.any())
    throw LoadError(line, "truth_explanations must be non-empty exactly when truth_quality is poor_quality");

  if (!j.contains("annotations") || !j["annotations"].is_array()) throw LoadError(line, "missing array field 'annotations'");
  std::set<std::string> raters;
  for (const auto& a : j["annotations"]) {
    if (!a.is_object() || !a.contains("rater_id") || !a["rater_id"].is_string())
      throw LoadError(line, "annotation needs a string 'rater_id'");
    RaterAnnotation ann{a["rater_id"].get<std::string>(), quality_field(a, "quality", line),
                        explanation_field(a, "explanations", line)};
    if (ann.explanations.any() && ann.quality != QualityClass::poor_quality)
      throw LoadError(line, "rater " + ann.rater_id + " gave explanations for a non-poor_quality verdict");
    if (!raters.insert(ann.rater_id).second) throw LoadError(line, "duplicate rater_id '" + ann.rater_id + "'");
    r.annotations.push_back(std::move(ann));
  }

  if (j.contains("scene") && !j["scene"].is_null()) {
    const auto& s = j["scene"];
    if (!s.is_object()) throw LoadError(line, "scene must be an object or null");
    SceneMeta meta;
    meta.lesion_center = number_array<2>(s, "lesion_center", line);
    if (!s.contains("lesion_radius") || !s["lesion_radius"].is_number())
      throw LoadError(line, "scene field 'lesion_radius' must be numeric");
    meta.lesion_radius = s["lesion_radius"].get<double>();
    meta.background_tone = number_array<3>(s, "background_tone", line);
    meta.lesion_tone = number_array<3>(s, "lesion_tone", line);
    r.scene = meta;
  }
  return r;
}

}  // namespace

void write_manifest(const std::vector<CorpusRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest", path);
  for (const auto& r : records) out << record_json(r).dump() << '\n';
  if (!out) throw IoError("cannot write manifest", path);
}

std::vector<CorpusRecord> load_manifest(const std::string& path, int expected_resolution) {
  namespace fs = std::filesystem;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(0, "cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();

  std::vector<CorpusRecord> records;
  std::string text;
  std::size_t line = 0;
  int resolution = expected_resolution;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw LoadError(line, std::string("malformed JSON: ") + e.what());
    }
    CorpusRecord r = parse_record(j, line);

    const std::string image = (base / r.image_path).string();
    std::pair<int, int> dims;
    try {
      dims = png_dimensions(image);
    } catch (const IoError& e) {
      throw LoadError(line, e.what());
    }
    if (resolution <= 0) resolution = dims.first;
    if (dims.first != resolution || dims.second != resolution)
      throw LoadError(line, "image " + r.image_path + " is " + std::to_string(dims.first) + "x" +
                                std::to_string(dims.second) + ", expected " + std::to_string(resolution) + "x" +
                                std::to_string(resolution));
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace dermq
