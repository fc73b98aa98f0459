#include "ddetect/prep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::prep {

ScalerParams ScalerParams::fit(const Matrix& m, std::vector<std::string> names) {
  if (m.empty()) throw InvalidArgument("ScalerParams::fit: empty matrix");
  if (names.size() != m.cols()) throw InvalidArgument("ScalerParams::fit: name count mismatch");
  ScalerParams out;
  out.names = std::move(names);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    const auto col = m.column(c);
    auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    out.columns.push_back(ColumnStats{mean(col), stddev(col), *lo, *hi});
  }
  return out;
}

const ColumnStats& ScalerParams::at(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidArgument("scaler has no column '" + name + "'");
  return columns[static_cast<std::size_t>(it - names.begin())];
}

const std::vector<std::string>& Dataset::input_names() {
  static const std::vector<std::string> names{"rpm", "power"};
  return names;
}

Dataset Dataset::take_rows(std::span<const std::size_t> rows) const {
  Dataset out;
  out.X = X.take_rows(rows);
  out.Y = Y.take_rows(rows);
  out.channels = channels;
  for (auto r : rows) {
    out.row_ids.push_back(row_ids[r]);
    out.origin.push_back(origin[r]);
  }
  out.x_stats = x_stats;
  out.y_stats = y_stats;
  return out;
}

Dataset Dataset::select_channels(const std::vector<std::string>& names) const {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto it = std::find(channels.begin(), channels.end(), n);
    if (it == channels.end()) throw InvalidArgument("dataset has no channel '" + n + "'");
    idx.push_back(static_cast<std::size_t>(it - channels.begin()));
  }
  Dataset out = *this;
  out.channels = names;
  out.Y = Matrix(Y.rows(), idx.size());
  for (std::size_t r = 0; r < Y.rows(); ++r) {
    for (std::size_t k = 0; k < idx.size(); ++k) out.Y(r, k) = Y(r, idx[k]);
  }
  if (!y_stats.columns.empty()) {
    out.y_stats.names = names;
    out.y_stats.columns.clear();
    for (auto i : idx) out.y_stats.columns.push_back(y_stats.columns[i]);
  }
  return out;
}

void Dataset::refit_stats() {
  x_stats = ScalerParams::fit(X, input_names());
  y_stats = ScalerParams::fit(Y, channels);
}

Dataset Dataset::concat(const Dataset& other) const {
  if (other.channels != channels) throw InvalidArgument("concat: channel mismatch");
  Dataset out = *this;
  for (std::size_t r = 0; r < other.size(); ++r) {
    out.X.push_row(other.X.row(r));
    out.Y.push_row(other.Y.row(r));
  }
  out.row_ids.insert(out.row_ids.end(), other.row_ids.begin(), other.row_ids.end());
  out.origin.insert(out.origin.end(), other.origin.begin(), other.origin.end());
  out.refit_stats();
  return out;
}

namespace {
bool valid_value(double v) { return std::isfinite(v) && v >= 0.0; }
}  // namespace

CleanResult clean(const sim::Telemetry& frames) {
  if (frames.frames.empty()) throw InvalidArgument("clean: empty input");
  CleanResult res;
  Dataset& d = res.dataset;
  d.channels = frames.channels;
  d.X = Matrix(0, 2);
  d.Y = Matrix(0, frames.channels.size());
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    const auto& f = frames.frames[i];
    bool ok = valid_value(f.rpm) && valid_value(f.power) && f.values.size() == frames.channels.size();
    for (double v : f.values) ok = ok && valid_value(v);
    if (!ok) {
      ++res.removed;
      continue;
    }
    const double x[2] = {f.rpm, f.power};
    d.X.push_row(x);
    d.Y.push_row(f.values);
    d.row_ids.push_back(i);
    d.origin.push_back(Origin::real);
  }
  if (d.size() == 0) throw Error("clean: every sample was removed; dataset is empty");
  d.refit_stats();
  return res;
}

CleanResult clean(const Dataset& data) {
  if (data.size() == 0) throw InvalidArgument("clean: empty input");
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < data.size(); ++r) {
    bool ok = true;
    for (double v : data.X.row(r)) ok = ok && valid_value(v);
    for (double v : data.Y.row(r)) ok = ok && valid_value(v);
    if (ok) keep.push_back(r);
  }
  if (keep.empty()) throw Error("clean: every sample was removed; dataset is empty");
  CleanResult res{data.take_rows(keep), data.size() - keep.size()};
  res.dataset.refit_stats();
  return res;
}

std::vector<double> standardize(std::span<const double> column, const ColumnStats& p) {
  if (!(p.stddev > 0.0)) throw InvalidArgument("standardize: sigma must be > 0");
  std::vector<double> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = (column[i] - p.mean) / p.stddev;
  return out;
}

std::vector<double> destandardize(std::span<const double> column, const ColumnStats& p) {
  if (!(p.stddev > 0.0)) throw InvalidArgument("destandardize: sigma must be > 0");
  std::vector<double> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = column[i] * p.stddev + p.mean;
  return out;
}

std::vector<double> normalize(std::span<const double> column, const ColumnStats& p) {
  if (!(p.max > p.min)) throw InvalidArgument("normalize: max must exceed min");
  const double range = p.max - p.min;
  std::vector<double> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = (column[i] - p.min) / range;
  return out;
}

std::vector<double> denormalize(std::span<const double> column, const ColumnStats& p) {
  if (!(p.max > p.min)) throw InvalidArgument("denormalize: max must exceed min");
  const double range = p.max - p.min;
  std::vector<double> out(column.size());
  for (std::size_t i = 0; i < column.size(); ++i) out[i] = column[i] * range + p.min;
  return out;
}

Matrix standardize(const Matrix& m, const ScalerParams& params) {
  if (params.columns.size() != m.cols()) throw InvalidArgument("standardize: width mismatch");
  Matrix out(m.rows(), m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    out.set_column(c, standardize(m.column(c), params.columns[c]));
  }
  return out;
}

Matrix destandardize(const Matrix& m, const ScalerParams& params) {
  if (params.columns.size() != m.cols()) throw InvalidArgument("destandardize: width mismatch");
  Matrix out(m.rows(), m.cols());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    out.set_column(c, destandardize(m.column(c), params.columns[c]));
  }
  return out;
}

MovingAverage::MovingAverage(std::size_t window) : window_(window) {
  if (window == 0) throw InvalidArgument("moving average window must be >= 1");
}

void MovingAverage::add(double v) {
  // Neumaier compensated summation keeps long streams drift-free.
  const double t = sum_ + v;
  if (std::abs(sum_) >= std::abs(v)) {
    compensation_ += (sum_ - t) + v;
  } else {
    compensation_ += (v - t) + sum_;
  }
  sum_ = t;
}

double MovingAverage::push(double value) {
  ++pushed_;
  buffer_.push_back(value);
  if (std::isfinite(value)) {
    add(value);
    ++finite_;
  }
  if (buffer_.size() > window_) {
    const double old = buffer_.front();
    buffer_.pop_front();
    if (std::isfinite(old)) {
      add(-old);
      --finite_;
    }
  }
  if (finite_ == 0) {
    sum_ = 0.0;
    compensation_ = 0.0;
    return std::nan("");
  }
  return (sum_ + compensation_) / static_cast<double>(finite_);
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  MovingAverage ma(window);
  std::vector<double> out;
  out.reserve(series.size());
  for (double v : series) out.push_back(ma.push(v));
  return out;
}

sim::Telemetry smooth(const sim::Telemetry& run, std::size_t window) {
  MovingAverage rpm(window), power(window);
  std::vector<MovingAverage> ch(run.channels.size(), MovingAverage(window));
  sim::Telemetry out = run;
  for (auto& f : out.frames) {
    if (f.values.size() != ch.size()) throw InvalidArgument("frame width does not match the channel list");
    f.rpm = rpm.push(f.rpm);
    f.power = power.push(f.power);
    for (std::size_t c = 0; c < ch.size(); ++c) f.values[c] = ch[c].push(f.values[c]);
  }
  return out;
}

std::size_t window_samples(double window_seconds, double step_s) {
  if (!(step_s > 0.0)) throw InvalidArgument("step_s must be > 0");
  if (!(window_seconds > 0.0)) throw InvalidArgument("window must be > 0 seconds");
  const double n = window_seconds / step_s;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-9 * std::max(1.0, n) || rounded < 1.0) {
    throw InvalidArgument("window of " + format_double(window_seconds) +
                          " s is not an integer multiple of step_s = " + format_double(step_s) +
                          " s (" + format_double(n) + " samples)");
  }
  return static_cast<std::size_t>(rounded);
}

std::vector<ChannelDeviation> rank_variables(const Dataset& healthy, const Dataset& faulty) {
  if (healthy.channels != faulty.channels) {
    throw InvalidArgument("rank_variables: datasets must share channel names");
  }
  if (healthy.size() == 0 || faulty.size() == 0) throw InvalidArgument("rank_variables: empty dataset");
  std::vector<ChannelDeviation> out;
  for (std::size_t c = 0; c < healthy.channels.size(); ++c) {
    const double mh = mean(healthy.Y.column(c));
    const double mf = mean(faulty.Y.column(c));
    ChannelDeviation d{healthy.channels[c], 0.0, mh != 0.0};
    if (d.selectable) d.deviation_pct = 100.0 * std::abs(mf - mh) / std::abs(mh);
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.selectable != b.selectable) return a.selectable;
    if (a.deviation_pct != b.deviation_pct) return a.deviation_pct > b.deviation_pct;
    return a.channel < b.channel;
  });
  return out;
}

std::vector<std::string> select_channels(const std::vector<ChannelDeviation>& ranking,
                                         std::size_t top_k, double min_pct) {
  std::vector<std::string> out;
  for (const auto& d : ranking) {
    if (out.size() >= top_k) break;
    if (d.selectable && d.deviation_pct >= min_pct) out.push_back(d.channel);
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed,
                                  SplitMode mode) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidArgument("split: train_fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  if (n_train == 0 || n_train >= n) {
    throw InvalidArgument("split: dataset of " + std::to_string(n) +
                          " rows is too small for a non-empty train and test partition");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == SplitMode::random) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  Dataset tr = data.take_rows(train);
  Dataset te = data.take_rows(test);
  tr.refit_stats();
  te.x_stats = tr.x_stats;
  te.y_stats = tr.y_stats;
  return {std::move(tr), std::move(te)};
}

void to_json(nlohmann::json& j, const ColumnStats& s) {
  j = {{"mean", s.mean}, {"stddev", s.stddev}, {"min", s.min}, {"max", s.max}};
}

void from_json(const nlohmann::json& j, ColumnStats& s) {
  json_util::allow_keys(j, {"mean", "stddev", "min", "max"}, "column");
  json_util::read_required(j, "mean", s.mean, "column");
  json_util::read_required(j, "stddev", s.stddev, "column");
  json_util::read_required(j, "min", s.min, "column");
  json_util::read_required(j, "max", s.max, "column");
}

void to_json(nlohmann::json& j, const ScalerParams& s) {
  j = nlohmann::json::object();
  auto cols = nlohmann::json::array();
  for (std::size_t i = 0; i < s.names.size(); ++i) {
    nlohmann::json c = s.columns[i];
    c["name"] = s.names[i];
    cols.push_back(c);
  }
  j["columns"] = cols;
}

void from_json(const nlohmann::json& j, ScalerParams& s) {
  json_util::allow_keys(j, {"columns"}, "scaler");
  s = ScalerParams{};
  for (const auto& c : j.at("columns")) {
    auto copy = c;
    s.names.push_back(copy.at("name").get<std::string>());
    copy.erase("name");
    s.columns.push_back(copy.get<ColumnStats>());
  }
}

}  // namespace ddetect::prep
