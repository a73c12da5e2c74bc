#include <doctest.h>

#include <fstream>

#include "dermq/config.hpp"
#include "dermq/error.hpp"
#include "test_util.hpp"

using namespace dermq;
using nlohmann::json;

namespace {

std::string config_error(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults are materialized in the echoed config") {
  const json j = to_json(RunConfig{});
  CHECK(j["training"]["epochs"] == 39);
  CHECK(j["training"]["runs"] == 5);
  CHECK(j["training"]["batch_size"] == 32);
  CHECK(j["training"]["lambda_quality"] == 1.0);
  CHECK(j["training"]["lambda_explanations"] == 5.0);
  CHECK(j["training"]["weight_decay"] == 1e-4);
  CHECK(j["training"]["class_weights"].is_null());
  CHECK(j["schedule"]["eta_max"] == 1e-3);
  CHECK(j["schedule"]["eta_min"] == 1e-6);
  CHECK(j["schedule"]["t0"] == 10);
  CHECK(j["schedule"]["t_mult"] == 2);
  CHECK(j["backbone"]["hidden_units"] == 64);
  CHECK(j["backbone"]["dropout"] == 0.2);
  CHECK(j["corpus"]["resolution"] == 128);
  CHECK(j["fusion"]["source"] == "truth");
  CHECK(j["thresholds"]["blurry"] == 0.5);
  CHECK(j["corpus"]["raters"]["profiles"].size() == 12);
}

TEST_CASE("echoed config parses back to the same document") {
  RunConfig c;
  c.corpus.counts = {5, 6, 7, 8};
  c.corpus.kind_weights = {1, 2, 3, 4, 5};
  c.training.epochs = 3;
  c.training.seed = 1234567890123ull;
  c.training.class_weights = ClassWeights{{1.0, 10.0, 4.49, 3.7}};
  c.schedule.t0 = 4;
  c.backbone = BackboneConfig::preset("tiny");
  c.corpus.resolution = 16;
  c.target_source = TargetSource::fused;
  c.thresholds[2] = 0.3;
  const json j = to_json(c);
  const RunConfig back = run_config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(back.training.seed == 1234567890123ull);
  CHECK(back.target_source == TargetSource::fused);
  CHECK(back.backbone == c.backbone);
  CHECK(back.thresholds == c.thresholds);
  REQUIRE(back.training.class_weights.has_value());
  CHECK(back.training.class_weights->weights == c.training.class_weights->weights);
  CHECK(json::parse(j.dump()) == j);
}

TEST_CASE("partial documents keep defaults for missing keys") {
  const RunConfig c = run_config_from_json(json::parse(R"({"training": {"epochs": 2}, "backbone": {"preset": "tiny"}})"));
  CHECK(c.training.epochs == 2);
  CHECK(c.training.runs == 5);
  CHECK(c.backbone == BackboneConfig::preset("tiny"));
  CHECK(c.schedule.eta_max == 1e-3);
}

TEST_CASE("unknown keys and bad types name the offending path") {
  CHECK(config_error(json::parse(R"({"trainig": {}})")) == "unknown key config.trainig");
  CHECK(config_error(json::parse(R"({"training": {"epoch": 3}})")) == "unknown key training.epoch");
  CHECK(config_error(json::parse(R"({"corpus": {"counts": {"lesions": 3}}})")) == "unknown key corpus.counts.lesions");
  CHECK(config_error(json::parse(R"({"corpus": {"counts": {"lesion": -1}}})")) == "corpus.counts.lesion must be >= 0");
  CHECK(config_error(json::parse(R"({"training": {"epochs": "many"}})")) == "training.epochs must be an integer");
  CHECK(config_error(json::parse(R"({"schedule": {"eta_max": "x"}})")) == "schedule.eta_max must be a number");
  CHECK(config_error(json::parse(R"({"thresholds": {"blurry": 1.5}})")) == "thresholds.blurry must be in [0, 1]");
  CHECK(config_error(json::parse(R"({"fusion": {"source": "vote"}})")) != "");
  CHECK(config_error(json::parse(R"({"backbone": {"preset": "huge"}})")) != "");
  CHECK(config_error(json::parse(R"([1, 2])")) == "config must be a JSON object");
  CHECK(config_error(json::parse(R"({"training": {"class_weights": {"lesion": 1}}})"))
            .find("training.class_weights.no_skin") != std::string::npos);
}

TEST_CASE("validate checks cross-section consistency") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.backbone = BackboneConfig::preset("tiny");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("load_run_config reads files and reports failures by kind") {
  TempDir dir;
  CHECK(to_json(load_run_config("")) == to_json(RunConfig{}));
  CHECK_THROWS_AS(load_run_config(dir.path("absent.json")), IoError);
  {
    std::ofstream(dir.path("bad.json")) << "{ not json";
  }
  CHECK_THROWS_AS(load_run_config(dir.path("bad.json")), ConfigError);
  {
    std::ofstream(dir.path("ok.json")) << R"({"training": {"runs": 2}})";
  }
  CHECK(load_run_config(dir.path("ok.json")).training.runs == 2);
}
