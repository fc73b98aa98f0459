#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::prep {

struct ColumnStats {
  double mean = 0.0;
  double stddev = 1.0;  // population standard deviation
  double min = 0.0;
  double max = 1.0;

  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

/// Per-column statistics of a matrix, in column order.
struct ScalerParams {
  std::vector<std::string> names;
  std::vector<ColumnStats> columns;

  static ScalerParams fit(const Matrix& m, std::vector<std::string> names);
  const ColumnStats& at(const std::string& name) const;

  friend bool operator==(const ScalerParams&, const ScalerParams&) = default;
};

enum class Origin : std::uint8_t { real, synthetic };

/// Operating inputs X = (rpm, power) and sensor targets Y, row-aligned.
struct Dataset {
  Matrix X;
  Matrix Y;
  std::vector<std::string> channels;
  /// Index of each row in the sequence it was built from.
  std::vector<std::size_t> row_ids;
  std::vector<Origin> origin;
  /// Statistics of the partition the dataset was fitted on (the training
  /// partition after `split`).
  ScalerParams x_stats;
  ScalerParams y_stats;

  std::size_t size() const { return X.rows(); }
  Dataset take_rows(std::span<const std::size_t> rows) const;
  Dataset select_channels(const std::vector<std::string>& names) const;
  /// Recomputes x_stats/y_stats from this dataset's own rows.
  void refit_stats();
  /// Real rows followed by other's rows; statistics refitted on the union.
  Dataset concat(const Dataset& other) const;

  static const std::vector<std::string>& input_names();
};

struct CleanResult {
  Dataset dataset;
  std::size_t removed = 0;
};

/// Drops every frame holding a negative, non-finite or missing value.
/// Throws Error when nothing survives.
CleanResult clean(const sim::Telemetry& frames);
/// Same rule applied to an existing dataset (used for synthetic rows).
CleanResult clean(const Dataset& data);

std::vector<double> standardize(std::span<const double> column, const ColumnStats& params);
std::vector<double> destandardize(std::span<const double> column, const ColumnStats& params);
std::vector<double> normalize(std::span<const double> column, const ColumnStats& params);
std::vector<double> denormalize(std::span<const double> column, const ColumnStats& params);

/// Standardizes every column of `m` with the matching entry of `params`.
Matrix standardize(const Matrix& m, const ScalerParams& params);
Matrix destandardize(const Matrix& m, const ScalerParams& params);

/// Causal trailing mean over the last `window` values. Non-finite inputs are
/// skipped; the output is NaN while the window holds no finite value.
class MovingAverage {
 public:
  explicit MovingAverage(std::size_t window);
  double push(double value);
  std::size_t window() const { return window_; }
  /// True once `window` values have been pushed.
  bool full() const { return pushed_ >= window_; }

 private:
  std::size_t window_;
  std::deque<double> buffer_;
  double sum_ = 0.0;
  double compensation_ = 0.0;
  std::size_t finite_ = 0;
  std::size_t pushed_ = 0;

  void add(double v);
};

std::vector<double> moving_average(std::span<const double> series, std::size_t window);

/// Converts a window given in seconds to samples; throws unless it is a
/// positive integer multiple of step_s.
std::size_t window_samples(double window_seconds, double step_s);

/// Trailing moving average over rpm, power and every channel of a run.
sim::Telemetry smooth(const sim::Telemetry& run, std::size_t window);

struct ChannelDeviation {
  std::string channel;
  double deviation_pct = 0.0;
  bool selectable = true;  // false when the healthy mean is zero
};

/// Channels ordered by descending |mean_faulty - mean_healthy| / |mean_healthy|.
std::vector<ChannelDeviation> rank_variables(const Dataset& healthy, const Dataset& faulty);

/// Keeps selectable channels with deviation >= min_pct, at most top_k of them.
std::vector<std::string> select_channels(const std::vector<ChannelDeviation>& ranking,
                                         std::size_t top_k, double min_pct);

enum class SplitMode { random, chronological };

/// Row-disjoint train/test partition with ⌈fraction·N⌉ training rows. Both
/// halves carry statistics fitted on the training rows.
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed,
                                  SplitMode mode = SplitMode::random);

void to_json(nlohmann::json& j, const ColumnStats& s);
void from_json(const nlohmann::json& j, ColumnStats& s);
void to_json(nlohmann::json& j, const ScalerParams& s);
void from_json(const nlohmann::json& j, ScalerParams& s);

}  // namespace ddetect::prep
