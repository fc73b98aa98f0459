#include "ddetect/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ddetect/csv.hpp"
#include "ddetect/json_util.hpp"

namespace ddetect::detect {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

double deviation(double y, double y_hat, double guard) {
  if (!(std::abs(y_hat) >= guard)) return kNaN;
  return (y - y_hat) / y_hat;
}

std::vector<double> derivative(std::span<const double> stream, double dt) {
  if (stream.size() < 2) throw InvalidArgument("derivative: stream needs at least 2 samples");
  if (!(dt > 0.0)) throw InvalidArgument("derivative: dt must be > 0");
  std::vector<double> out(stream.size() - 1);
  for (std::size_t i = 0; i + 1 < stream.size(); ++i) out[i] = (stream[i + 1] - stream[i]) / dt;
  return out;
}

std::size_t ThresholdSet::index(const std::string& channel) const {
  auto it = std::find(channels.begin(), channels.end(), channel);
  if (it == channels.end()) throw InvalidArgument("thresholds have no channel '" + channel + "'");
  return static_cast<std::size_t>(it - channels.begin());
}

void ThresholdSet::validate() const {
  const std::size_t n = channels.size();
  if (n == 0) throw InvalidArgument("thresholds: no channels");
  if (v_threshold.size() != n || a_threshold.size() != n || deviation_threshold.size() != n ||
      degenerate.size() != n) {
    throw InvalidArgument("thresholds: per-channel arrays have inconsistent lengths");
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (!(v_threshold[c] > 0.0) || !(a_threshold[c] > 0.0) || !(deviation_threshold[c] > 0.0)) {
      throw InvalidArgument("thresholds: channel '" + channels[c] + "' has a non-positive threshold");
    }
  }
  if (window_samples == 0) throw InvalidArgument("thresholds: window_samples must be > 0");
  if (!(step_s > 0.0)) throw InvalidArgument("thresholds: step_s must be > 0");
  if (profile_digest.empty() || created.empty()) throw InvalidArgument("thresholds: provenance missing");
}

bool DeviationState::e_valid(std::size_t i, std::size_t c) const { return std::isfinite(e_smooth(i, c)); }
bool DeviationState::v_valid(std::size_t j, std::size_t c) const { return std::isfinite(v(j, c)); }
bool DeviationState::a_valid(std::size_t j, std::size_t c) const { return std::isfinite(a(j, c)); }

StreamDetector::StreamDetector(const ThresholdSet& thresholds, std::size_t confirm_k, double guard)
    : th_(thresholds), confirm_k_(confirm_k), guard_(guard) {
  if (confirm_k_ == 0) throw InvalidArgument("confirm_k must be >= 1");
  if (th_.channels.empty()) throw InvalidArgument("detector needs at least one channel");
  if (!(th_.step_s > 0.0)) throw InvalidArgument("detector step_s must be > 0");
  for (std::size_t c = 0; c < th_.channels.size(); ++c) {
    ch_.push_back(Channel{prep::MovingAverage(th_.window_samples)});
    ChannelCrossings cc;
    cc.channel = th_.channels[c];
    report_.channels.push_back(cc);
  }
  report_.confirm_k = confirm_k_;
  const std::size_t n = th_.channels.size();
  last_.e.resize(n);
  last_.e_smooth.resize(n);
  last_.v.resize(n);
  last_.a.resize(n);
}

namespace {

// Advances a run counter and reports whether the rule crosses at this sample.
bool step_run(std::size_t& run, bool exceeded, std::size_t k) {
  run = exceeded ? run + 1 : 0;
  return run == k;
}

void set_min(std::optional<std::size_t>& slot, std::size_t value) {
  if (!slot || value < *slot) slot = value;
}

}  // namespace

const StreamDetector::Sample& StreamDetector::push(std::span<const double> y, std::span<const double> y_hat) {
  const std::size_t n = ch_.size();
  if (y.size() != n || y_hat.size() != n) throw InvalidArgument("detector: channel count mismatch");
  const std::size_t i = index_;
  const double dt = th_.step_s;
  const bool window_full = i + 1 >= th_.window_samples;
  for (std::size_t c = 0; c < n; ++c) {
    Channel& s = ch_[c];
    const double e = deviation(y[c], y_hat[c], guard_);
    const double es_raw = s.ma.push(e);
    const bool es_valid = window_full && std::isfinite(es_raw);
    const double es = es_valid ? es_raw : kNaN;
    const bool v_valid = es_valid && s.es_prev_valid;
    const double v = v_valid ? (es - s.es_prev) / dt : kNaN;
    const bool a_valid = v_valid && s.v_prev_valid;
    const double a = a_valid ? (v - s.v_prev) / dt : kNaN;

    last_.e[c] = e;
    last_.e_smooth[c] = es;
    last_.v[c] = v;
    last_.a[c] = a;

    auto& cr = report_.channels[c];
    if (step_run(s.run_dev, es_valid && std::abs(es) > th_.deviation_threshold[c], confirm_k_) &&
        !cr.deviation) {
      cr.deviation = i;
      set_min(report_.deviation, i);
    }
    if (step_run(s.run_v, v_valid && std::abs(v) > th_.v_threshold[c], confirm_k_) && !cr.first_derivative) {
      cr.first_derivative = i;
      set_min(report_.first_derivative, i);
    }
    if (step_run(s.run_a, a_valid && std::abs(a) > th_.a_threshold[c], confirm_k_) && !cr.second_derivative) {
      cr.second_derivative = i;
      set_min(report_.second_derivative, i);
    }
    if (!cr.combined && (cr.first_derivative || cr.second_derivative)) {
      cr.combined = i;
      if (!report_.combined) {
        report_.combined = i;
        report_.first_channel = cr.channel;
      }
    }

    s.es_prev = es;
    s.es_prev_valid = es_valid;
    s.v_prev = v;
    s.v_prev_valid = v_valid;
  }
  ++index_;
  report_.frames = index_;
  if (report_.deviation && report_.combined) {
    report_.lead_time_samples =
        static_cast<long long>(*report_.deviation) - static_cast<long long>(*report_.combined);
  }
  last_.derivative_alarm = report_.combined.has_value();
  last_.deviation_alarm = report_.deviation.has_value();
  return last_;
}

DetectionRun run_series(const std::vector<double>& t, const Matrix& y, const Matrix& y_hat,
                        const ThresholdSet& thresholds, std::size_t confirm_k, double guard) {
  const std::size_t n = t.size();
  const std::size_t k = thresholds.channels.size();
  if (y.rows() != n || y_hat.rows() != n || y.cols() != k || y_hat.cols() != k) {
    throw InvalidArgument("run_series: y, y_hat and t must have matching shapes");
  }
  StreamDetector det(thresholds, confirm_k, guard);
  DetectionRun run;
  auto& s = run.state;
  s.channels = thresholds.channels;
  s.step_s = thresholds.step_s;
  s.window_samples = thresholds.window_samples;
  s.t = t;
  s.y = y;
  s.y_hat = y_hat;
  s.e = Matrix(n, k);
  s.e_smooth = Matrix(n, k);
  s.v = Matrix(n > 0 ? n - 1 : 0, k);
  s.a = Matrix(n > 1 ? n - 2 : 0, k);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& out = det.push(y.row(i), y_hat.row(i));
    for (std::size_t c = 0; c < k; ++c) {
      s.e(i, c) = out.e[c];
      s.e_smooth(i, c) = out.e_smooth[c];
      if (i >= 1) s.v(i - 1, c) = out.v[c];
      if (i >= 2) s.a(i - 2, c) = out.a[c];
    }
  }
  run.report = det.report();
  return run;
}

DeviationState compute_state(const std::vector<std::string>& channels, const std::vector<double>& t,
                             const Matrix& y, const Matrix& y_hat, std::size_t window_samples,
                             double step_s, double guard) {
  ThresholdSet open;
  open.channels = channels;
  const double inf = std::numeric_limits<double>::infinity();
  open.v_threshold.assign(channels.size(), inf);
  open.a_threshold.assign(channels.size(), inf);
  open.deviation_threshold.assign(channels.size(), inf);
  open.degenerate.assign(channels.size(), false);
  open.window_samples = window_samples;
  open.step_s = step_s;
  return run_series(t, y, y_hat, open, 1, guard).state;
}

Matrix predict_frames(const models::Regressor& model, const sim::Telemetry& frames, kernels::Exec exec) {
  Matrix x(frames.frames.size(), 2);
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    x(i, 0) = frames.frames[i].rpm;
    x(i, 1) = frames.frames[i].power;
  }
  return model.predict_rows(x, exec);
}

namespace {

void measured(const sim::Telemetry& frames, const std::vector<std::string>& channels, std::vector<double>& t,
              Matrix& y) {
  std::vector<std::size_t> idx;
  for (const auto& c : channels) {
    auto it = std::find(frames.channels.begin(), frames.channels.end(), c);
    if (it == frames.channels.end()) {
      throw InvalidArgument("channel mismatch: frames have no channel '" + c + "'");
    }
    idx.push_back(static_cast<std::size_t>(it - frames.channels.begin()));
  }
  t.clear();
  y = Matrix(frames.frames.size(), channels.size());
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    t.push_back(frames.frames[i].t);
    for (std::size_t c = 0; c < idx.size(); ++c) y(i, c) = frames.frames[i].values.at(idx[c]);
  }
}

}  // namespace

ThresholdSet calibrate_state(const DeviationState& state, const CalibrationOptions& options,
                             const std::string& profile_digest) {
  if (!(options.margin > 0.0)) throw InvalidArgument("calibrate: margin must be > 0");
  if (!(options.floor_v > 0.0) || !(options.floor_a > 0.0)) {
    throw InvalidArgument("calibrate: floors must be > 0");
  }
  if (!(options.deviation_threshold > 0.0)) throw InvalidArgument("calibrate: deviation_threshold must be > 0");
  ThresholdSet th;
  th.channels = state.channels;
  th.margin = options.margin;
  th.floor_v = options.floor_v;
  th.floor_a = options.floor_a;
  th.window_samples = state.window_samples;
  th.step_s = state.step_s;
  th.profile_digest = profile_digest;
  th.created = options.created.empty() ? "unspecified" : options.created;
  for (std::size_t c = 0; c < state.channels.size(); ++c) {
    double vmax = 0.0, amax = 0.0;
    bool any_v = false, any_a = false;
    for (std::size_t j = 0; j < state.v.rows(); ++j) {
      if (!state.v_valid(j, c)) continue;
      any_v = true;
      vmax = std::max(vmax, std::abs(state.v(j, c)));
    }
    for (std::size_t j = 0; j < state.a.rows(); ++j) {
      if (!state.a_valid(j, c)) continue;
      any_a = true;
      amax = std::max(amax, std::abs(state.a(j, c)));
    }
    if (!any_v || !any_a) {
      throw Error("calibrate: channel '" + state.channels[c] +
                  "' has no determinate derivative samples (profile too short or predictions near zero)");
    }
    const double v = options.margin * vmax;
    const double a = options.margin * amax;
    th.degenerate.push_back(v < options.floor_v || a < options.floor_a);
    th.v_threshold.push_back(std::max(v, options.floor_v));
    th.a_threshold.push_back(std::max(a, options.floor_a));
    th.deviation_threshold.push_back(options.deviation_threshold);
  }
  return th;
}

ThresholdSet calibrate(const models::Regressor& model, const sim::Telemetry& healthy,
                       const CalibrationOptions& options) {
  if (healthy.frames.empty()) throw InvalidArgument("calibrate: empty profile");
  std::vector<double> t;
  Matrix y;
  measured(healthy, model.channels, t, y);
  const Matrix y_hat = predict_frames(model, healthy);
  const auto state = compute_state(model.channels, t, y, y_hat, options.window_samples, healthy.step_s);
  return calibrate_state(state, options, healthy.digest());
}

DetectionRun run_detector(const models::Regressor& model, const sim::Telemetry& frames,
                          const ThresholdSet& thresholds, std::size_t confirm_k) {
  thresholds.validate();
  if (thresholds.channels != model.channels) {
    throw InvalidArgument("channel mismatch between model and thresholds");
  }
  if (frames.frames.size() >= 2 && std::abs(frames.step_s - thresholds.step_s) > 1e-9) {
    throw InvalidArgument("frame step " + format_double(frames.step_s) + " s differs from calibration step " +
                          format_double(thresholds.step_s) + " s");
  }
  std::vector<double> t;
  Matrix y;
  measured(frames, model.channels, t, y);
  const Matrix y_hat = predict_frames(model, frames);
  return run_series(t, y, y_hat, thresholds, confirm_k);
}

void export_traces(const DeviationState& state, const DetectionReport& report,
                   const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  const std::size_t n = state.size();
  for (std::size_t c = 0; c < state.channels.size(); ++c) {
    std::vector<double> y(n), yh(n), e(n), es(n), v(n, kNaN), a(n, kNaN);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = state.y(i, c);
      yh[i] = state.y_hat(i, c);
      e[i] = state.e(i, c);
      es[i] = state.e_smooth(i, c);
      if (i >= 1) v[i] = state.v(i - 1, c);
      if (i >= 2) a[i] = state.a(i - 2, c);
    }
    csv::write_table(dir / ("trace_" + state.channels[c] + ".csv"), {"t", "y", "y_hat", "e", "e_smooth", "v", "a"},
                     {state.t, y, yh, e, es, v, a});
  }
  nlohmann::json j = report;
  csv::write_text(dir / "detection_report.json", j.dump(2) + "\n");
}

namespace {

nlohmann::json opt(const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<std::size_t> read_opt(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::size_t>();
}

}  // namespace

void to_json(nlohmann::json& j, const ThresholdSet& t) {
  auto chans = nlohmann::json::array();
  for (std::size_t c = 0; c < t.channels.size(); ++c) {
    chans.push_back({{"name", t.channels[c]},
                     {"v_threshold", t.v_threshold[c]},
                     {"a_threshold", t.a_threshold[c]},
                     {"deviation_threshold", t.deviation_threshold[c]},
                     {"degenerate", static_cast<bool>(t.degenerate[c])}});
  }
  j = {{"channels", chans},
       {"margin", t.margin},
       {"floor_v", t.floor_v},
       {"floor_a", t.floor_a},
       {"window_samples", t.window_samples},
       {"step_s", t.step_s},
       {"provenance", {{"profile_digest", t.profile_digest}, {"created", t.created}}}};
}

void from_json(const nlohmann::json& j, ThresholdSet& t) {
  json_util::allow_keys(j, {"channels", "margin", "floor_v", "floor_a", "window_samples", "step_s", "provenance"},
                        "thresholds");
  t = ThresholdSet{};
  for (const auto& c : j.at("channels")) {
    json_util::allow_keys(c, {"name", "v_threshold", "a_threshold", "deviation_threshold", "degenerate"},
                          "thresholds.channels");
    t.channels.push_back(c.at("name").get<std::string>());
    t.v_threshold.push_back(c.at("v_threshold").get<double>());
    t.a_threshold.push_back(c.at("a_threshold").get<double>());
    t.deviation_threshold.push_back(c.value("deviation_threshold", 0.05));
    t.degenerate.push_back(c.value("degenerate", false));
  }
  json_util::read_required(j, "margin", t.margin, "thresholds");
  json_util::read_optional(j, "floor_v", t.floor_v, "thresholds");
  json_util::read_optional(j, "floor_a", t.floor_a, "thresholds");
  json_util::read_required(j, "window_samples", t.window_samples, "thresholds");
  json_util::read_required(j, "step_s", t.step_s, "thresholds");
  const auto& p = j.at("provenance");
  json_util::allow_keys(p, {"profile_digest", "created"}, "thresholds.provenance");
  t.profile_digest = p.at("profile_digest").get<std::string>();
  t.created = p.at("created").get<std::string>();
  t.validate();
}

void to_json(nlohmann::json& j, const DetectionReport& r) {
  auto chans = nlohmann::json::array();
  for (const auto& c : r.channels) {
    chans.push_back({{"channel", c.channel},
                     {"deviation_5pct", opt(c.deviation)},
                     {"first_derivative", opt(c.first_derivative)},
                     {"second_derivative", opt(c.second_derivative)},
                     {"combined", opt(c.combined)}});
  }
  j = {{"channels", chans},
       {"detection",
        {{"deviation_5pct", opt(r.deviation)},
         {"first_derivative", opt(r.first_derivative)},
         {"second_derivative", opt(r.second_derivative)},
         {"combined", opt(r.combined)}}},
       {"first_channel", r.first_channel ? nlohmann::json(*r.first_channel) : nlohmann::json()},
       {"lead_time_samples", r.lead_time_samples ? nlohmann::json(*r.lead_time_samples) : nlohmann::json()},
       {"frames", r.frames},
       {"confirm_k", r.confirm_k},
       {"action", r.derivative_alarm() ? nlohmann::json(r.action) : nlohmann::json()}};
}

void from_json(const nlohmann::json& j, DetectionReport& r) {
  r = DetectionReport{};
  for (const auto& c : j.at("channels")) {
    ChannelCrossings cc;
    cc.channel = c.at("channel").get<std::string>();
    cc.deviation = read_opt(c, "deviation_5pct");
    cc.first_derivative = read_opt(c, "first_derivative");
    cc.second_derivative = read_opt(c, "second_derivative");
    cc.combined = read_opt(c, "combined");
    r.channels.push_back(cc);
  }
  const auto& d = j.at("detection");
  r.deviation = read_opt(d, "deviation_5pct");
  r.first_derivative = read_opt(d, "first_derivative");
  r.second_derivative = read_opt(d, "second_derivative");
  r.combined = read_opt(d, "combined");
  if (!j.at("first_channel").is_null()) r.first_channel = j.at("first_channel").get<std::string>();
  if (!j.at("lead_time_samples").is_null()) r.lead_time_samples = j.at("lead_time_samples").get<long long>();
  r.frames = j.at("frames").get<std::size_t>();
  r.confirm_k = j.at("confirm_k").get<std::size_t>();
}

}  // namespace ddetect::detect
