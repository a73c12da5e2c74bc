// dermq: command-line front end for corpus generation, label fusion,
// agreement statistics, training, evaluation, Grad-CAM, threshold
// calibration and model export.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>

#include "dermq/config.hpp"
#include "dermq/corpus.hpp"
#include "dermq/error.hpp"
#include "dermq/explain.hpp"
#include "dermq/fusion.hpp"
#include "dermq/image.hpp"
#include "dermq/metrics.hpp"
#include "dermq/model_io.hpp"
#include "dermq/parallel.hpp"
#include "dermq/reports.hpp"
#include "dermq/rng.hpp"
#include "dermq/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dermq;

namespace {

struct Common {
  std::string config_path;
  std::string out = ".";
  std::string manifest;
  std::string model;
  std::optional<std::uint64_t> seed;
  unsigned threads = default_threads();
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory", dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string manifest_dir(const std::string& manifest) {
  auto parent = fs::path(manifest).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

std::vector<ImageTensor> to_tensors(const Dataset& data) {
  std::vector<ImageTensor> out;
  out.reserve(data.images.size());
  for (const auto& b : data.images) out.push_back(dequantize(b));
  return out;
}

Dataset load_for_model(const std::string& manifest, const BackboneConfig& backbone, TargetSource source,
                       unsigned threads) {
  auto records = load_manifest(manifest, backbone.input_resolution);
  if (records.empty()) throw DataError("manifest has no records: " + manifest);
  return load_dataset(records, manifest_dir(manifest), source, threads);
}

// A bare number applies to every explanation; anything else names a JSON file
// holding a thresholds object.
Thresholds parse_thresholds_flag(const std::string& value, Thresholds fallback) {
  if (value.empty()) return fallback;
  try {
    std::size_t used = 0;
    double t = std::stod(value, &used);
    if (used == value.size()) {
      if (!(t >= 0.0 && t <= 1.0)) throw ArgumentError("--thresholds must be in [0, 1]");
      Thresholds all;
      all.fill(t);
      return all;
    }
  } catch (const std::invalid_argument&) {
  }
  json j;
  try {
    j = json::parse(read_text_file(value));
  } catch (const json::parse_error& e) {
    throw ConfigError("thresholds file " + value + " is not valid JSON: " + e.what());
  }
  return thresholds_from_json(j);
}

std::vector<double> parse_grid(const std::string& spec) {
  double a = 0, b = 0, step = 0;
  char tail = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &a, &b, &step, &tail) != 3)
    throw ArgumentError("--grid must look like start:stop:step, got '" + spec + "'");
  if (a < 0.0 || b > 1.0) throw ArgumentError("--grid must lie within [0, 1]");
  return threshold_grid(a, b, step);
}

RunConfig load_config(const Common& c) {
  RunConfig cfg = load_run_config(c.config_path);
  if (c.seed) cfg.training.seed = *c.seed;
  return cfg;
}

// ---------------------------------------------------------------------------

int cmd_generate(const Common& c) {
  RunConfig cfg = load_config(c);
  cfg.corpus.validate();
  ensure_dir(c.out);
  const std::uint64_t seed = c.seed.value_or(0);
  auto manifest = generate_corpus(cfg.corpus, seed, c.out, c.threads);
  json echo = to_json(cfg);
  echo["seed"] = seed;
  write_json(join(c.out, "config.json"), echo);
  std::cerr << "generated " << manifest.records.size() << " images into " << c.out << "\n";
  return 0;
}

int cmd_fuse(const Common& c) {
  auto records = load_manifest(c.manifest);
  ensure_dir(c.out);
  auto fused = build_targets(records, TargetSource::fused);
  std::string lines;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    json ex = json::array();
    for (auto k : kinds_in(fused[i].explanations)) ex.push_back(std::string(to_string(k)));
    json row = {{"image_path", records[i].image_path},
                {"quality", std::string(to_string(fused[i].quality))},
                {"explanations", ex},
                {"raters", records[i].annotations.size()}};
    lines += row.dump() + "\n";
    agree += fused[i] == records[i].truth();
  }
  write_text_file(join(c.out, "fused.jsonl"), lines);
  auto counts = class_counts(fused);
  json summary = {{"images", records.size()}, {"matches_truth", agree}};
  json jc = json::object();
  for (int q = 0; q < kNumQualityClasses; ++q) jc[std::string(to_string(quality_from_index(q)))] = counts[q];
  summary["class_counts"] = jc;
  bool all_present = true;
  for (auto n : counts) all_present = all_present && n > 0;
  if (all_present) {
    auto w = compute_class_weights(counts);
    json jw = json::object();
    for (int q = 0; q < kNumQualityClasses; ++q) jw[std::string(to_string(quality_from_index(q)))] = w.weights[q];
    summary["class_weights"] = jw;
  } else {
    summary["class_weights"] = nullptr;
  }
  write_json(join(c.out, "fusion.json"), summary);
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_stats(const Common& c) {
  auto records = load_manifest(c.manifest);
  std::vector<std::vector<RaterAnnotation>> ann;
  std::set<std::string> raters;
  for (const auto& r : records) {
    ann.push_back(r.annotations);
    for (const auto& a : r.annotations) raters.insert(a.rater_id);
  }
  if (raters.size() < 2)
    throw DataError("agreement statistics need at least two raters, manifest has " + std::to_string(raters.size()));
  ensure_dir(c.out);
  for (auto scope : {AgreementScope::quality, AgreementScope::explanations}) {
    auto report = pairwise_interrater(ann, scope);
    const std::string stem = scope == AgreementScope::quality ? "agreement_quality" : "agreement_explanations";
    write_text_file(join(c.out, stem + ".csv"), agreement_csv(report));
    write_json(join(c.out, stem + ".json"), to_json(report));
    std::cout << agreement_csv(report);
  }
  return 0;
}

int cmd_train(const Common& c) {
  RunConfig cfg = load_config(c);
  cfg.validate();
  auto records = load_manifest(c.manifest, cfg.backbone.input_resolution);
  if (records.empty()) throw DataError("manifest has no records: " + c.manifest);
  Dataset data = load_dataset(records, manifest_dir(c.manifest), cfg.target_source, c.threads);
  auto counts = class_counts(data.targets);
  for (int q = 0; q < kNumQualityClasses; ++q)
    if (counts[q] == 0)
      throw ConfigError("class '" + std::string(to_string(quality_from_index(q))) +
                        "' is missing from the manifest; every quality class needs examples");
  ensure_dir(c.out);

  TrainOptions opt;
  opt.threads = c.threads;
  opt.log = [](const std::string& line) { std::cerr << line << "\n"; };
  auto runs = train(data, cfg.training, cfg.backbone, cfg.schedule, cfg.thresholds, opt);

  std::vector<RunReport> reports;
  for (const auto& r : runs) {
    save_model(r.params, join(c.out, "model-run" + std::to_string(r.report.run) + ".qxm"));
    reports.push_back(r.report);
  }
  json report = training_report(cfg, reports);
  write_json(join(c.out, "report.json"), report);
  std::cout << report["aggregate"].dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const Common& c, const std::string& thresholds_flag) {
  RunConfig cfg = load_config(c);
  auto params = load_model(c.model);
  Thresholds th = parse_thresholds_flag(thresholds_flag, cfg.thresholds);
  Dataset data = load_for_model(c.manifest, params.config, cfg.target_source, c.threads);
  auto images = to_tensors(data);
  auto [pq, pe] = predict_probs(params, std::span<const ImageTensor>(images), c.threads);
  auto report = evaluate_model(data.targets, pq, pe, th);
  ensure_dir(c.out);
  write_text_file(join(c.out, "metrics.csv"), metric_csv(report));
  json j = to_json(report);
  j["thresholds"] = thresholds_json(th);
  j["images"] = data.targets.size();
  write_json(join(c.out, "metrics.json"), j);
  std::cout << metric_csv(report);
  return 0;
}

int cmd_explain(const Common& c, const std::string& image_path, const std::string& target_name,
                const std::string& layer_name) {
  CamTarget target = parse_cam_target(target_name);
  auto params = load_model(c.model);
  int layer = parse_cam_layer(params.config, layer_name);
  ImageTensor image = read_png(image_path);
  if (image.height != params.config.input_resolution || image.width != params.config.input_resolution)
    throw DataError("image " + image_path + " is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                    ", model expects " + std::to_string(params.config.input_resolution));
  ensure_dir(c.out);
  auto map = grad_cam(params, image, target, layer);
  auto files = export_map(map, image, c.out, fs::path(image_path).stem().string());
  auto pred = predict(params, image);
  json ex = json::object();
  for (int k = 0; k < kNumExplanations; ++k)
    ex[std::string(to_string(explanation_from_index(k)))] = pred.explanation_probs(k);
  json out = {{"target", target.name()},
              {"layer", layer},
              {"quality", std::string(to_string(pred.quality))},
              {"explanation_probs", ex},
              {"cam", files.cam_path},
              {"overlay", files.overlay_path}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_calibrate(const Common& c, const std::string& grid_spec, const std::string& target_name) {
  RunConfig cfg = load_config(c);
  CamTarget target = parse_cam_target(target_name);
  auto grid = parse_grid(grid_spec);
  auto params = load_model(c.model);
  Dataset data = load_for_model(c.manifest, params.config, cfg.target_source, c.threads);
  auto images = to_tensors(data);
  auto [pq, pe] = predict_probs(params, std::span<const ImageTensor>(images), c.threads);
  const bool quality = target.head == CamTarget::Head::quality;
  std::vector<double> scores(data.targets.size());
  std::vector<std::uint8_t> truth(data.targets.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& t = data.targets[i];
    scores[i] = quality ? pq(i, target.index) : pe(i, target.index);
    truth[i] = quality ? index_of(t.quality) == target.index
                       : t.explanations.test(static_cast<std::size_t>(target.index));
  }
  auto table = calibrate_threshold(scores, truth, grid);
  ensure_dir(c.out);
  write_text_file(join(c.out, "thresholds.csv"), threshold_csv(table));
  json j = to_json(table);
  j["target"] = target.name();
  write_json(join(c.out, "thresholds.json"), j);
  std::cout << threshold_csv(table);
  return 0;
}

int cmd_export(const Common& c, const std::string& preset) {
  ModelParams<float> params;
  json source;
  if (!c.model.empty()) {
    params = load_model(c.model);
    source = {{"model", c.model}};
  } else {
    if (preset.empty()) throw ArgumentError("export needs --model or --preset");
    const std::uint64_t seed = c.seed.value_or(0);
    params = init_params<float>(derive_seed(seed, "init", 0), BackboneConfig::preset(preset));
    source = {{"preset", preset}, {"seed", seed}};
  }
  ensure_dir(c.out);
  const std::string path = join(c.out, "model.qxm");
  const std::int64_t written = save_model(params, path);
  std::error_code ec;
  const auto on_disk = static_cast<std::int64_t>(fs::file_size(path, ec));
  if (ec) throw IoError("cannot stat exported model", path);

  // Round-trip check on a few seeded random images.
  auto reloaded = load_model(path);
  const int res = params.config.input_resolution;
  std::vector<ImageTensor> probe;
  for (int i = 0; i < 4; ++i) {
    Rng rng = make_rng(c.seed.value_or(0), "export.probe", static_cast<std::uint64_t>(i));
    ImageTensor img(res, res);
    for (Eigen::Index k = 0; k < img.values.size(); ++k) img.values.data()[k] = static_cast<float>(uniform01(rng));
    probe.push_back(std::move(img));
  }
  auto a = predict_probs(params, std::span<const ImageTensor>(probe), c.threads);
  auto b = predict_probs(reloaded, std::span<const ImageTensor>(probe), c.threads);
  const bool identical = a.first == b.first && a.second == b.second;

  SizeReport size = size_report(params);
  json j = {{"source", source},
            {"path", path},
            {"file_bytes", size.file_bytes},
            {"bytes_written", written},
            {"bytes_on_disk", on_disk},
            {"parameter_count", size.parameter_count},
            {"learnable_count", size.learnable_count},
            {"bytes_per_parameter", size.bytes_per_parameter},
            {"framing_bytes", size.framing_bytes},
            {"megabytes", size.megabytes()},
            {"round_trip_identical", identical},
            {"config", to_json(params.config)}};
  write_json(join(c.out, "export.json"), j);
  std::cout << j.dump(2) << "\n";
  if (!identical) throw ModelFileError("exported model does not reproduce the original outputs");
  if (on_disk != size.file_bytes) throw ModelFileError("size report disagrees with the file on disk");
  return 0;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const LoadError*>(&e) || dynamic_cast<const DataError*>(&e)) return 4;
  if (dynamic_cast<const TrainingError*>(&e)) return 5;
  if (dynamic_cast<const ModelFileError*>(&e)) return 6;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dermq: image quality assessment with explanations"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common c;
  std::string thresholds_flag, image_path, target = "poor_quality", layer = "last", grid = "0.0:1.0:0.05", preset;

  auto add_threads = [&](CLI::App* s) {
    s->add_option("--threads", c.threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };
  auto add_seed = [&](CLI::App* s, const char* help) { s->add_option("--seed", c.seed, help); };
  auto add_out = [&](CLI::App* s) { s->add_option("--out", c.out, "Output directory")->capture_default_str(); };

  auto* gen = app.add_subcommand("generate", "Render a synthetic corpus with a manifest.jsonl");
  gen->add_option("--config", c.config_path, "Run config JSON");
  add_seed(gen, "Master seed (default 0)");
  add_out(gen);
  add_threads(gen);

  auto* fuse = app.add_subcommand("fuse", "Fuse rater annotations into one label per image");
  fuse->add_option("--manifest", c.manifest, "Manifest JSONL")->required();
  add_out(fuse);

  auto* stats = app.add_subcommand("stats", "Per-class counts and pairwise inter-rater F1");
  stats->add_option("--manifest", c.manifest, "Manifest JSONL")->required();
  add_out(stats);

  auto* tr = app.add_subcommand("train", "Train models and write model-run<k>.qxm and report.json");
  tr->add_option("--config", c.config_path, "Run config JSON");
  tr->add_option("--manifest", c.manifest, "Manifest JSONL")->required();
  add_seed(tr, "Overrides training.seed");
  add_out(tr);
  add_threads(tr);

  auto* ev = app.add_subcommand("evaluate", "Per-class and per-explanation metrics of a model");
  ev->add_option("--config", c.config_path, "Run config JSON");
  ev->add_option("--model", c.model, "Model file")->required();
  ev->add_option("--manifest", c.manifest, "Manifest JSONL")->required();
  ev->add_option("--thresholds", thresholds_flag, "A single threshold or a JSON file of per-explanation thresholds");
  add_out(ev);
  add_threads(ev);

  auto* ex = app.add_subcommand("explain", "Grad-CAM heatmap and overlay for one image");
  ex->add_option("--model", c.model, "Model file")->required();
  ex->add_option("--image", image_path, "PNG image")->required();
  ex->add_option("--target", target, "Quality class or explanation name")->capture_default_str();
  ex->add_option("--layer", layer, "Feature layer: last or stage<k>")->capture_default_str();
  add_out(ex);

  auto* cal = app.add_subcommand("calibrate", "Sensitivity/specificity/F1 over a threshold grid");
  cal->add_option("--config", c.config_path, "Run config JSON");
  cal->add_option("--model", c.model, "Model file")->required();
  cal->add_option("--manifest", c.manifest, "Manifest JSONL")->required();
  cal->add_option("--grid", grid, "start:stop:step")->capture_default_str();
  cal->add_option("--target", target, "Quality class or explanation name")->capture_default_str();
  add_out(cal);
  add_threads(cal);

  auto* exp = app.add_subcommand("export", "Write a model file and report its size");
  exp->add_option("--model", c.model, "Model file to re-export");
  exp->add_option("--preset", preset, "Backbone preset to export with fresh weights (tiny, desk, b0-equivalent)");
  add_seed(exp, "Seed for preset initialization and the round-trip probe");
  add_out(exp);
  add_threads(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(c);
    if (*fuse) return cmd_fuse(c);
    if (*stats) return cmd_stats(c);
    if (*tr) return cmd_train(c);
    if (*ev) return cmd_evaluate(c, thresholds_flag);
    if (*ex) return cmd_explain(c, image_path, target, layer);
    if (*cal) return cmd_calibrate(c, grid, target);
    if (*exp) return cmd_export(c, preset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 1;
}
