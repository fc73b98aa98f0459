#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "ddetect/config.hpp"
#include "ddetect/csv.hpp"

using namespace ddetect;
using namespace ddetect::config;
using nlohmann::json;

namespace {

bool mentions(const std::vector<Diagnostic>& d, const std::string& field, const std::string& text) {
  return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) {
    return x.field == field && x.message.find(text) != std::string::npos;
  });
}

}  // namespace

TEST_CASE("defaults validate and round trip through JSON") {
  const auto c = ExperimentConfig::defaults();
  CHECK(validate(c).empty());
  const json j = c;
  CHECK(validate(j).empty());
  const auto back = from_text(j.dump(2));
  CHECK(json(back).dump() == j.dump());
  CHECK(back.digest() == c.digest());
  CHECK(c.window_samples() == 300);
  CHECK(c.prep.train_fraction == 0.75);
  CHECK(c.augmentation.factor == 1.0);
  CHECK(c.detection.deviation_threshold == 0.05);
  CHECK(c.baseline.k_stable == 10);
}

TEST_CASE("empty object means defaults") {
  const auto c = from_text("{}");
  CHECK(c.digest() == ExperimentConfig::defaults().digest());
}

TEST_CASE("train fraction outside (0,1) names the field and bound") {
  for (double f : {1.2, 0.0, 1.0, -0.5}) {
    auto c = ExperimentConfig::defaults();
    c.prep.train_fraction = f;
    const auto d = validate(c);
    CHECK(mentions(d, "prep.train_fraction", "(0, 1)"));
    CHECK(mentions(d, "prep.train_fraction", format_double(f)));
  }
  try {
    from_text(R"({"prep": {"train_fraction": 1.2}})", "cfg.json");
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("cfg.json") != std::string::npos);
    CHECK(msg.find("prep.train_fraction") != std::string::npos);
    CHECK(msg.find("1.2") != std::string::npos);
  }
}

TEST_CASE("a window that is not a whole number of steps is reported") {
  auto c = ExperimentConfig::defaults();
  c.simulation.training_profile.step_s = 7.0;
  c.simulation.detection_profile.step_s = 7.0;
  const auto d = validate(c);
  CHECK(mentions(d, "prep.window_seconds", "42.857"));

  c = ExperimentConfig::defaults();
  c.simulation.detection_profile.step_s = 2.0;
  CHECK(mentions(validate(c), "simulation.detection_profile.step_s", "training profile"));
}

TEST_CASE("syntax errors carry line and context") {
  const std::string text = "{\n  \"seed\": 4,\n  \"prep\": {\"top_k\": 3,,}\n}\n";
  try {
    parse_text(text, "broken.json");
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("broken.json:3:") != std::string::npos);
    CHECK(msg.find("\"top_k\": 3,,") != std::string::npos);
  }
}

TEST_CASE("unknown keys are rejected") {
  CHECK_THROWS_AS(from_text(R"({"sead": 4})"), InvalidArgument);
  CHECK_THROWS_AS(from_text(R"({"prep": {"window": 300}})"), InvalidArgument);
  const auto d = validate(json::parse(R"({"detection": {"margn": 2}})"));
  REQUIRE_FALSE(d.empty());
  CHECK(d[0].message.find("margn") != std::string::npos);
}

TEST_CASE("stage seeds follow the top-level seed") {
  const auto c = from_text(R"({"seed": 7})");
  CHECK(c.seed == 7);
  CHECK(c.models.forest.seed == stage_seed(7, "models.forest"));
  CHECK(c.augmentation.vae.seed == stage_seed(7, "augment.vae"));
  CHECK(c.baseline.seed == stage_seed(7, "baseline.ocsvm"));
  CHECK(stage_seed(7, "models.forest") == derive_seed(7, "models.forest"));
  CHECK(stage_seed(7, "models.forest") != stage_seed(7, "models.tree"));
  CHECK(c.digest() != ExperimentConfig::defaults().digest());

  auto bad = c;
  bad.models.forest.seed += 1;
  CHECK(mentions(validate(bad), "models.forest.seed", std::to_string(c.models.forest.seed)));
  CHECK_THROWS_AS(from_text(R"({"seed": 7, "models": {"forest": {"seed": 1}}})"), InvalidArgument);
}

TEST_CASE("invariant violations are collected together") {
  auto c = ExperimentConfig::defaults();
  c.baseline.nu = 0.0;
  c.detection.margin = -1.0;
  c.augmentation.factor = 0.0;
  c.prep.selection_scenario = "nope";
  c.scenarios[0].faults[0].targets.push_back("no_such_sensor");
  const auto d = validate(c);
  CHECK(mentions(d, "baseline.nu", "(0, 1]"));
  CHECK(mentions(d, "detection.margin", "> 0"));
  CHECK(mentions(d, "augmentation.factor", "> 0"));
  CHECK(mentions(d, "prep.selection_scenario", "nope"));
  CHECK(mentions(d, "scenarios[0].faults[0].targets", "no_such_sensor"));
}

TEST_CASE("scenario lookup and loading from disk") {
  const auto c = ExperimentConfig::defaults();
  CHECK(c.scenario("step").name == "step");
  CHECK(c.scenario("ramp").onset() == 5000.0);
  CHECK_THROWS_AS(c.scenario("missing"), InvalidArgument);

  const auto path = std::filesystem::temp_directory_path() / "ddetect_test_config.json";
  csv::write_text(path, R"({"seed": 11, "models": {"forest": {"n_trees": 5}}})");
  const auto loaded = load(path);
  CHECK(loaded.models.forest.n_trees == 5);
  CHECK(loaded.seed == 11);
  std::filesystem::remove(path);
  CHECK_THROWS(load(path));
}

TEST_CASE("the shipped default config matches the built-in defaults") {
  const auto shipped = load(std::filesystem::path(DDETECT_SOURCE_DIR) / "configs" / "default.json");
  CHECK(json(shipped).dump() == json(ExperimentConfig::defaults()).dump());
}
