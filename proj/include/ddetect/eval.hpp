#pragma once

// End-to-end experiment: simulate -> prep -> augment -> train x3 -> select
// -> calibrate -> detect -> baseline -> compare.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/baseline.hpp"
#include "ddetect/config.hpp"
#include "ddetect/detect.hpp"
#include "ddetect/kernels.hpp"
#include "ddetect/prep.hpp"
#include "ddetect/regressor.hpp"

namespace ddetect::eval {

struct ModelScores {
  models::ModelKind kind = models::ModelKind::forest;
  models::MseReport train;
  models::MseReport test;
};

struct MseTable {
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::vector<ModelScores> rows;  // all_kinds() order

  bool empty() const { return rows.empty(); }
  const ModelScores& at(models::ModelKind kind) const;
};

struct ScenarioResult {
  std::string name;
  double onset_s = 0.0;
  std::size_t onset_index = 0;
  detect::DetectionRun run;
  std::vector<baseline::Classification> ocsvm;
  baseline::Comparison comparison;
};

struct Timing {
  std::string stage;
  double seconds = 0.0;
};

struct ResultBundle {
  std::string config_digest;
  config::ExperimentConfig config;
  std::vector<prep::ChannelDeviation> ranking;
  std::vector<std::string> selected;
  std::size_t removed_rows = 0;
  std::size_t real_rows = 0;
  std::size_t synthetic_rows = 0;
  std::vector<double> vae_loss;
  MseTable augmented;  // empty when augmentation is disabled
  MseTable plain;      // without augmentation (empty if skipped)
  models::ModelKind chosen = models::ModelKind::forest;
  bool chosen_by_tie = false;
  /// The selected regressor, as used for calibration and detection.
  models::Regressor model;
  detect::ThresholdSet thresholds;
  std::size_t ocsvm_support_vectors = 0;
  double ocsvm_rho = 0.0;
  double ocsvm_gamma = 0.0;
  double ocsvm_kkt_residual = 0.0;
  std::vector<ScenarioResult> scenarios;
  std::vector<Timing> timings;

  /// The table that drove model selection.
  const MseTable& primary() const { return augmented.empty() ? plain : augmented; }
  const ScenarioResult& scenario(const std::string& name) const;
};

struct RunOptions {
  kernels::Exec exec = kernels::Exec::parallel;
  /// Also train on the real rows alone when augmentation is enabled.
  bool ablation = true;
};

/// Stage failures are rethrown as Error with the stage name prefixed.
ResultBundle run_experiment(const config::ExperimentConfig& config, const RunOptions& options = {});

struct LeadTimeRow {
  std::string run;
  std::string scenario;
  std::optional<std::size_t> derivative;
  std::optional<std::size_t> deviation;
  std::optional<std::size_t> ocsvm;
  std::optional<long long> deviation_minus_derivative;
  std::optional<long long> ocsvm_minus_derivative;
  std::optional<long long> ocsvm_minus_deviation;

  friend bool operator==(const LeadTimeRow&, const LeadTimeRow&) = default;
};

std::vector<LeadTimeRow> lead_time_table(std::span<const ResultBundle> bundles);
/// Same rows rebuilt from a results.json document written by emit_report.
std::vector<LeadTimeRow> lead_time_table(const nlohmann::json& results);
/// CSV text, one line per row; the run column is included when with_run.
std::string lead_time_csv(std::span<const LeadTimeRow> rows, bool with_run);

/// Writes results.json, timings.json, thresholds.json, report.md,
/// lead_times.csv and per-scenario traces under root/run-<digest>.
/// Returns the run directory.
std::filesystem::path emit_report(const ResultBundle& bundle, const std::filesystem::path& root);

void to_json(nlohmann::json& j, const MseTable& t);
void to_json(nlohmann::json& j, const ResultBundle& b);
void to_json(nlohmann::json& j, const LeadTimeRow& r);

}  // namespace ddetect::eval
