#include "dermq/reports.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace dermq {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

json row_json(const MetricRow& r) {
  return {{"recall", opt(r.recall)},
          {"specificity", opt(r.specificity)},
          {"f1", opt(r.f1)},
          {"support", r.support},
          {"tp", r.counts.tp},
          {"fp", r.counts.fp},
          {"fn", r.counts.fn},
          {"tn", r.counts.tn}};
}

}  // namespace

json to_json(const MeanStd& value) { return {{"mean", opt(value.mean)}, {"std", opt(value.std)}, {"n", value.n}}; }

json to_json(const MetricReport& report) {
  json q = json::object(), e = json::object();
  for (const auto& r : report.quality) q[r.name] = row_json(r);
  for (const auto& r : report.explanations) e[r.name] = row_json(r);
  return {{"per_class", q},
          {"per_explanation", e},
          {"macro_f1", opt(report.macro_f1_quality)},
          {"macro_f1_explanations", opt(report.macro_f1_explanations)}};
}

json to_json(const AgreementReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"name", r.name}, {"image_count", r.image_count}, {"pairwise_f1", to_json(r.pairwise_f1)}});
  return {{"scope", report.scope == AgreementScope::quality ? "quality" : "explanations"},
          {"rows", rows},
          {"mean", to_json(report.mean_row)},
          {"rater_pairs", report.rater_pairs}};
}

json to_json(const ThresholdTable& table) {
  json rows = json::array();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    rows.push_back({{"threshold", r.threshold},
                    {"sensitivity", opt(r.sensitivity)},
                    {"specificity", opt(r.specificity)},
                    {"f1", opt(r.f1)},
                    {"recommended", table.recommended == i}});
  }
  return {{"rows", rows}, {"recommended", table.recommended ? json(*table.recommended) : json(nullptr)}};
}

std::string metric_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "name,recall,specificity,f1,support\n";
  for (const auto* rows : {&report.quality, &report.explanations})
    for (const auto& r : *rows)
      out << r.name << ',' << fmt(r.recall) << ',' << fmt(r.specificity) << ',' << fmt(r.f1) << ',' << r.support
          << '\n';
  return out.str();
}

std::string agreement_csv(const AgreementReport& report) {
  std::ostringstream out;
  out << "name,image_count,pairwise_f1_mean,pairwise_f1_std,pairs\n";
  std::int64_t total = 0;
  for (const auto& r : report.rows) {
    out << r.name << ',' << r.image_count << ',' << fmt(r.pairwise_f1.mean) << ',' << fmt(r.pairwise_f1.std) << ','
        << r.pairwise_f1.n << '\n';
    total += r.image_count;
  }
  out << "mean," << total << ',' << fmt(report.mean_row.mean) << ',' << fmt(report.mean_row.std) << ','
      << report.rater_pairs << '\n';
  return out.str();
}

std::string threshold_csv(const ThresholdTable& table) {
  std::ostringstream out;
  out << "threshold,sensitivity,specificity,f1,recommended\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    out << fmt(r.threshold) << ',' << fmt(r.sensitivity) << ',' << fmt(r.specificity) << ',' << fmt(r.f1) << ','
        << (table.recommended == i ? 1 : 0) << '\n';
  }
  return out.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write file", path);
  out << text;
  if (!out) throw IoError("cannot write file", path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dermq
