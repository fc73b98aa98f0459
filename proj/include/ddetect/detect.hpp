#pragma once

// Deviation / derivative detector. Per channel and sample:
//   e  = (y - ŷ) / ŷ, smoothed by a trailing moving average of W samples,
//   v  = forward difference of the smoothed e, a = forward difference of v.
// Alarm rules compare |v|, |a| against thresholds calibrated on a healthy
// profile, and |e| against the conventional deviation level.
//
// Sample alignment: v[j] = (es[j+1] - es[j]) / dt is known at sample j+1 and
// a[j] at sample j+2. Values are valid once every smoothed deviation they use
// comes from a full window (j >= W - 1). Crossing indices are the samples at
// which an alarm is raised.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/prep.hpp"
#include "ddetect/regressor.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::detect {

inline constexpr double kDefaultGuard = 1e-9;
inline constexpr const char* kAlarmAction = "switch off the engine";

/// (y - ŷ) / ŷ, or NaN when |ŷ| < guard (indeterminate sample).
double deviation(double y, double y_hat, double guard = kDefaultGuard);

/// out[t] = (in[t+1] - in[t]) / dt. Throws unless in.size() >= 2 and dt > 0.
std::vector<double> derivative(std::span<const double> stream, double dt);

struct ThresholdSet {
  std::vector<std::string> channels;
  std::vector<double> v_threshold;
  std::vector<double> a_threshold;
  std::vector<double> deviation_threshold;
  /// True where margin · max fell below the floor and the floor was used.
  std::vector<bool> degenerate;
  double margin = 1.0;
  double floor_v = 1e-6;
  double floor_a = 1e-6;
  std::size_t window_samples = 300;
  double step_s = 1.0;
  std::string profile_digest;
  std::string created;

  std::size_t index(const std::string& channel) const;
  /// Throws InvalidArgument unless every threshold is > 0 and provenance is set.
  void validate() const;

  friend bool operator==(const ThresholdSet&, const ThresholdSet&) = default;
};

/// Per-sample record of a run. Rows of y/y_hat/e/e_smooth are samples; v has
/// one row fewer and a two rows fewer than e.
struct DeviationState {
  std::vector<std::string> channels;
  double step_s = 1.0;
  std::size_t window_samples = 1;
  std::vector<double> t;
  Matrix y, y_hat, e, e_smooth, v, a;

  std::size_t size() const { return t.size(); }
  /// Whether v(j, c) / a(j, c) is defined (full windows, finite inputs).
  bool v_valid(std::size_t j, std::size_t c) const;
  bool a_valid(std::size_t j, std::size_t c) const;
  bool e_valid(std::size_t i, std::size_t c) const;
};

struct ChannelCrossings {
  std::string channel;
  std::optional<std::size_t> deviation;
  std::optional<std::size_t> first_derivative;
  std::optional<std::size_t> second_derivative;
  std::optional<std::size_t> combined;  // min of the two derivative rules

  friend bool operator==(const ChannelCrossings&, const ChannelCrossings&) = default;
};

struct DetectionReport {
  std::vector<ChannelCrossings> channels;
  std::optional<std::size_t> deviation;
  std::optional<std::size_t> first_derivative;
  std::optional<std::size_t> second_derivative;
  std::optional<std::size_t> combined;
  /// Channel whose crossing set the overall combined detection.
  std::optional<std::string> first_channel;
  /// detection(deviation) - detection(combined), when both exist.
  std::optional<long long> lead_time_samples;
  std::size_t frames = 0;
  std::size_t confirm_k = 1;
  std::string action = kAlarmAction;

  bool derivative_alarm() const { return combined.has_value(); }
  bool deviation_alarm() const { return deviation.has_value(); }

  friend bool operator==(const DetectionReport&, const DetectionReport&) = default;
};

/// Stateful single-stream detector fed with measured and predicted values.
class StreamDetector {
 public:
  StreamDetector(const ThresholdSet& thresholds, std::size_t confirm_k = 1,
                 double guard = kDefaultGuard);

  struct Sample {
    std::vector<double> e, e_smooth;
    /// Derivatives that became available at this sample (NaN when undefined).
    std::vector<double> v, a;
    bool derivative_alarm = false;  // some channel crossed a derivative rule now or earlier
    bool deviation_alarm = false;
  };

  /// Processes the next sample; y and y_hat follow the threshold channel order.
  const Sample& push(std::span<const double> y, std::span<const double> y_hat);

  const DetectionReport& report() const { return report_; }
  std::size_t samples() const { return index_; }

 private:
  struct Channel {
    prep::MovingAverage ma;
    double es_prev = 0.0;
    double v_prev = 0.0;
    bool es_prev_valid = false;
    bool v_prev_valid = false;
    std::size_t run_dev = 0, run_v = 0, run_a = 0;
  };

  ThresholdSet th_;
  std::size_t confirm_k_;
  double guard_;
  std::vector<Channel> ch_;
  std::size_t index_ = 0;
  Sample last_;
  DetectionReport report_;

  void finalize(std::size_t c);
};

struct DetectionRun {
  DeviationState state;
  DetectionReport report;
};

/// Runs the detector over precomputed measured / predicted matrices.
DetectionRun run_series(const std::vector<double>& t, const Matrix& y, const Matrix& y_hat,
                        const ThresholdSet& thresholds, std::size_t confirm_k = 1,
                        double guard = kDefaultGuard);

/// Model predictions for every frame, in model channel order; the frames
/// must carry every model channel.
Matrix predict_frames(const models::Regressor& model, const sim::Telemetry& frames,
                      kernels::Exec exec = kernels::Exec::parallel);

/// Deviation, smoothing and derivatives without any alarm logic.
DeviationState compute_state(const std::vector<std::string>& channels, const std::vector<double>& t,
                             const Matrix& y, const Matrix& y_hat, std::size_t window_samples,
                             double step_s, double guard = kDefaultGuard);

struct CalibrationOptions {
  std::size_t window_samples = 300;
  double margin = 1.0;
  double floor_v = 1e-6;
  double floor_a = 1e-6;
  double deviation_threshold = 0.05;
  std::string created;
};

/// Thresholds from a healthy profile: margin · max |v| and margin · max |a|
/// over the valid samples of each channel, floored.
ThresholdSet calibrate(const models::Regressor& model, const sim::Telemetry& healthy,
                       const CalibrationOptions& options);
ThresholdSet calibrate_state(const DeviationState& state, const CalibrationOptions& options,
                             const std::string& profile_digest);

DetectionRun run_detector(const models::Regressor& model, const sim::Telemetry& frames,
                          const ThresholdSet& thresholds, std::size_t confirm_k = 1);

/// Writes trace_<channel>.csv (t,y,y_hat,e,e_smooth,v,a with v/a aligned to
/// the sample where they become known) and detection_report.json into dir.
void export_traces(const DeviationState& state, const DetectionReport& report,
                   const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const ThresholdSet& t);
void from_json(const nlohmann::json& j, ThresholdSet& t);
void to_json(nlohmann::json& j, const DetectionReport& r);
void from_json(const nlohmann::json& j, DetectionReport& r);

}  // namespace ddetect::detect
