#pragma once

// Synthetic engine telemetry: load profiles, sensor response maps, additive
// Gaussian measurement noise and parametric fault injection.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"

namespace ddetect::sim {

struct Waypoint {
  double t = 0.0;      // seconds
  double rpm = 0.0;    // rev/min
  double power = 0.0;  // kW
};

/// Piecewise-linear (rpm, power) trajectory sampled every `step_s` seconds.
struct LoadProfile {
  double duration_s = 0.0;
  double step_s = 1.0;
  std::vector<Waypoint> waypoints;
  std::string shape = "custom";
  /// Standard deviation of the operating-point fluctuation around the
  /// trajectory (governor jitter). Zero gives an exact piecewise-linear path.
  double rpm_jitter = 0.0;
  double power_jitter = 0.0;

  /// Throws InvalidArgument when the profile violates its invariants.
  void validate() const;
  std::size_t frame_count() const;
  double rpm_at(double t) const;
  double power_at(double t) const;
};

/// Polynomial response `sum c * (rpm/rpm_ref)^i * (power/power_ref)^j`.
struct ResponseMap {
  struct Term {
    double coefficient = 0.0;
    int rpm_exp = 0;
    int power_exp = 0;
  };
  double rpm_ref = 1.0;
  double power_ref = 1.0;
  std::vector<Term> terms;

  double operator()(double rpm, double power) const;
};

struct SensorModel {
  std::string id;
  std::string units;
  ResponseMap base_map;
  double noise_sigma = 0.0;
};

struct Frame {
  double t = 0.0;
  double rpm = 0.0;
  double power = 0.0;
  std::vector<double> values;  // one per channel, in Telemetry::channels order

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// A timestamped frame sequence with a shared channel list.
struct Telemetry {
  std::vector<std::string> channels;
  std::vector<Frame> frames;
  double step_s = 1.0;

  std::size_t channel_index(const std::string& name) const;  // throws if unknown
  std::vector<double> channel_values(std::size_t channel) const;
  /// Copy restricted to the named channels, in the given order.
  Telemetry project(const std::vector<std::string>& names) const;
  std::string digest() const;

  friend bool operator==(const Telemetry&, const Telemetry&) = default;
};

enum class FaultKind { additive_ageing, multiplicative_ageing, catastrophic_step };

/// How a catastrophic k(t) acts on the healthy value.
enum class FaultApply { offset, relative };

/// Parametric failure model.
///
/// additive_ageing:       y = y_h + k(t), k ramps 0 -> magnitude over [t_f, t_end]
/// multiplicative_ageing: y = y_h * k(t), k ramps 1 -> magnitude over [t_f, t_end]
/// catastrophic_step:     k(t) = 0 for t < t_f, magnitude afterwards (or a linear
///                        rise over ramp_s seconds); applied as y_h + k (offset)
///                        or y_h * (1 + k) (relative).
struct FaultSpec {
  FaultKind kind = FaultKind::catastrophic_step;
  std::vector<std::string> targets;
  double t_f = 0.0;
  double magnitude = 0.0;
  FaultApply apply = FaultApply::offset;
  double ramp_s = 0.0;                 // catastrophic only
  std::optional<double> t_end;         // ageing only; defaults to the last frame

  double coefficient(double t, double t_last) const;
};

std::vector<Frame> sample_trajectory(const LoadProfile& profile, std::uint64_t seed);

/// Generates ⌊duration/step⌋+1 frames; channel values are base_map + N(0, σ_n).
Telemetry generate_profile(const LoadProfile& profile, const std::vector<SensorModel>& sensors,
                           std::uint64_t seed);

Telemetry inject_fault(const Telemetry& frames, const FaultSpec& fault);
Telemetry inject_faults(const Telemetry& frames, const std::vector<FaultSpec>& faults);

/// Six monitored quantities (oil mist as three sensors) plus two temperature
/// channels that a bearing collapse does not move.
std::vector<SensorModel> default_sensors();

/// Run-to-failure style profile: idle, ramp to full load, hold, ramp back.
LoadProfile default_detection_profile();
/// Longer multi-sweep healthy profile used to train the regressors.
LoadProfile default_training_profile();

void to_json(nlohmann::json& j, const Waypoint& w);
void from_json(const nlohmann::json& j, Waypoint& w);
void to_json(nlohmann::json& j, const LoadProfile& p);
void from_json(const nlohmann::json& j, LoadProfile& p);
void to_json(nlohmann::json& j, const ResponseMap& m);
void from_json(const nlohmann::json& j, ResponseMap& m);
void to_json(nlohmann::json& j, const SensorModel& s);
void from_json(const nlohmann::json& j, SensorModel& s);
void to_json(nlohmann::json& j, const FaultSpec& f);
void from_json(const nlohmann::json& j, FaultSpec& f);

std::string to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& s);

}  // namespace ddetect::sim
