#pragma once

// Experiment configuration: one JSON document drives every stage. Unknown
// keys are rejected. Stage seeds derive from the top-level seed.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/augment.hpp"
#include "ddetect/baseline.hpp"
#include "ddetect/regressor.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::config {

struct Scenario {
  std::string name;
  std::vector<sim::FaultSpec> faults;
  /// Earliest fault onset.
  double onset() const;
};

struct SimulationConfig {
  sim::LoadProfile training_profile;
  sim::LoadProfile detection_profile;
  std::vector<sim::SensorModel> sensors;
};

struct PrepConfig {
  double window_seconds = 300.0;
  double train_fraction = 0.75;
  std::size_t top_k = 8;
  double min_deviation_pct = 2.0;
  std::string selection_scenario = "step";
  /// Moving-average the training run before cleaning and splitting.
  bool smooth_training = true;
};

struct AugmentConfig {
  bool enabled = true;
  /// Synthetic rows per real training row.
  double factor = 1.0;
  /// Augment the whole cleaned set and split afterwards; otherwise only
  /// the training partition is augmented.
  bool before_split = true;
  augment::VaeConfig vae;
};

struct DetectionConfig {
  double margin = 1.5;
  double deviation_threshold = 0.05;
  double floor_v = 1e-6;
  double floor_a = 1e-6;
  std::size_t confirm_k = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 20240917;
  SimulationConfig simulation;
  std::vector<Scenario> scenarios;
  PrepConfig prep;
  AugmentConfig augmentation;
  models::RegressorConfig models;
  DetectionConfig detection;
  baseline::OcsvmConfig baseline;

  static ExperimentConfig defaults();
  /// Copy with every stage seed set to derive_seed(seed, stage).
  ExperimentConfig resolved() const;
  /// FNV-1a of the canonical JSON of the resolved config.
  std::string digest() const;
  std::size_t window_samples() const;
  const Scenario& scenario(const std::string& name) const;
};

/// Seed of a named stage ("sim.training", "prep.split", "augment.vae", ...).
std::uint64_t stage_seed(std::uint64_t base, const std::string& stage);

/// Default fault scenarios: "step" (sudden bearing collapse) and "ramp"
/// (the same faults rising over 400 s, so 20% magnitudes pass 5% after 100 s).
std::vector<Scenario> default_scenarios(double t_f = 5000.0);

struct Diagnostic {
  std::string field;
  std::string message;
};

/// Schema and invariant checks; empty when valid.
std::vector<Diagnostic> validate(const nlohmann::json& j);
std::vector<Diagnostic> validate(const ExperimentConfig& c);

/// Parses JSON text; syntax errors name the line and show its text.
nlohmann::json parse_text(const std::string& text, const std::string& source);
ExperimentConfig load(const std::filesystem::path& path);
ExperimentConfig from_text(const std::string& text, const std::string& source = "<config>");

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

}  // namespace ddetect::config
