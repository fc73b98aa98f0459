#pragma once

// One-class SVM (nu formulation, RBF kernel) used as the comparison detector.
// The dual  min ½ αᵀKα  s.t.  Σα = 1, 0 <= α_i <= 1/(ν m)  is solved by SMO
// with second-order working-set selection.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/detect.hpp"
#include "ddetect/kernels.hpp"
#include "ddetect/prep.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::baseline {

struct OcsvmConfig {
  double nu = 0.05;
  double gamma = 0.0;  // 0 = 1 / (d · variance of the standardized features)
  std::size_t max_train = 2000;
  std::size_t max_iter = 1000000;
  double tolerance = 1e-10;
  std::size_t k_stable = 10;
  std::uint64_t seed = 0;

  friend bool operator==(const OcsvmConfig&, const OcsvmConfig&) = default;
};

struct OcsvmModel {
  std::vector<std::string> features;
  prep::ScalerParams scaler;  // applied before the kernel
  Matrix support;             // standardized support vectors
  std::vector<double> alpha;
  double rho = 0.0;
  double gamma = 0.0;
  double nu = 0.0;
  std::size_t train_size = 0;
  std::size_t iterations = 0;
  double kkt_residual = 0.0;

  bool trained() const { return !alpha.empty(); }
  friend bool operator==(const OcsvmModel&, const OcsvmModel&) = default;
};

/// Full solver output, including every α (not only support vectors).
struct DualSolution {
  std::vector<double> alpha;
  std::vector<double> gradient;  // Kα
  double rho = 0.0;
  std::size_t iterations = 0;
};

DualSolution solve_dual(const Matrix& gram, double nu, double tolerance, std::size_t max_iter);

/// Largest violation of the KKT conditions of the dual for the given ρ,
/// including the equality and box constraints.
double kkt_residual(const std::vector<double>& alpha, const std::vector<double>& gradient, double rho,
                    double C);

/// Trains on rows that are already standardized; `features` names the columns.
OcsvmModel train_ocsvm(const Matrix& standardized, const OcsvmConfig& config,
                       kernels::Exec exec = kernels::Exec::parallel);

/// Builds [rpm, power, channels...] features from a healthy dataset, fits
/// the scaler, subsamples to max_train rows and trains.
OcsvmModel train_ocsvm(const prep::Dataset& healthy, const std::vector<std::string>& channels,
                       const OcsvmConfig& config, kernels::Exec exec = kernels::Exec::parallel);

struct Classification {
  int label = 1;  // +1 healthy, -1 faulty
  double value = 0.0;
};

/// x holds raw feature values in model.features order.
Classification classify(const OcsvmModel& model, std::span<const double> x);
std::vector<Classification> classify_frames(const OcsvmModel& model, const sim::Telemetry& frames,
                                            kernels::Exec exec = kernels::Exec::parallel);

/// First index of a run of k consecutive -1 labels.
std::optional<std::size_t> stable_detection(std::span<const Classification> outputs, std::size_t k);
std::optional<std::size_t> stable_detection(std::span<const int> labels, std::size_t k);

struct Comparison {
  std::optional<std::size_t> ocsvm_detection;
  std::optional<std::size_t> derivative_detection;
  /// ocsvm - derivative, when both detect.
  std::optional<long long> difference;
  std::size_t k_stable = 10;
  /// Label sign changes strictly before the stable run (whole sequence when none).
  std::size_t oscillations_before = 0;
};

Comparison compare_detection(std::span<const Classification> ocsvm, const detect::DetectionReport& derivative,
                             std::size_t k_stable);

/// CSV with columns t,decision_value,label.
void write_outputs(const std::filesystem::path& path, const std::vector<double>& t,
                   std::span<const Classification> outputs);

void to_json(nlohmann::json& j, const OcsvmConfig& c);
void from_json(const nlohmann::json& j, OcsvmConfig& c);
void to_json(nlohmann::json& j, const OcsvmModel& m);
void from_json(const nlohmann::json& j, OcsvmModel& m);
void to_json(nlohmann::json& j, const Comparison& c);

}  // namespace ddetect::baseline
