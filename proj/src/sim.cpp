#include "ddetect/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::sim {

namespace {

double interpolate(const std::vector<Waypoint>& wps, double t, double Waypoint::*field) {
  if (t <= wps.front().t) return wps.front().*field;
  if (t >= wps.back().t) return wps.back().*field;
  auto hi = std::upper_bound(wps.begin(), wps.end(), t,
                             [](double value, const Waypoint& w) { return value < w.t; });
  auto lo = hi - 1;
  const double span = hi->t - lo->t;
  if (span <= 0.0) return (*hi).*field;
  const double w = (t - lo->t) / span;
  return (*lo).*field + w * ((*hi).*field - (*lo).*field);
}

}  // namespace

void LoadProfile::validate() const {
  if (!(step_s > 0.0) || !std::isfinite(step_s)) throw InvalidArgument("profile: step_s must be > 0");
  if (!(duration_s >= 0.0) || !std::isfinite(duration_s)) {
    throw InvalidArgument("profile: duration_s must be >= 0");
  }
  const double steps = duration_s / step_s;
  if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
    throw InvalidArgument("profile: duration_s must be an integer multiple of step_s");
  }
  if (waypoints.empty()) throw InvalidArgument("profile: at least one waypoint required");
  for (std::size_t i = 0; i < waypoints.size(); ++i) {
    const auto& w = waypoints[i];
    if (w.rpm < 0.0 || w.power < 0.0 || !std::isfinite(w.rpm) || !std::isfinite(w.power)) {
      throw InvalidArgument("profile: waypoint " + std::to_string(i) + " has negative rpm/power");
    }
    if (i > 0 && w.t < waypoints[i - 1].t) {
      throw InvalidArgument("profile: waypoints must be sorted by time");
    }
  }
  if (rpm_jitter < 0.0 || power_jitter < 0.0) throw InvalidArgument("profile: jitter must be >= 0");
}

std::size_t LoadProfile::frame_count() const {
  return static_cast<std::size_t>(std::floor(duration_s / step_s + 1e-9)) + 1;
}

double LoadProfile::rpm_at(double t) const { return interpolate(waypoints, t, &Waypoint::rpm); }
double LoadProfile::power_at(double t) const { return interpolate(waypoints, t, &Waypoint::power); }

double ResponseMap::operator()(double rpm, double power) const {
  const double r = rpm / rpm_ref;
  const double p = power / power_ref;
  double y = 0.0;
  for (const auto& term : terms) {
    y += term.coefficient * std::pow(r, term.rpm_exp) * std::pow(p, term.power_exp);
  }
  return y;
}

std::size_t Telemetry::channel_index(const std::string& name) const {
  auto it = std::find(channels.begin(), channels.end(), name);
  if (it == channels.end()) throw InvalidArgument("unknown channel '" + name + "'");
  return static_cast<std::size_t>(it - channels.begin());
}

std::vector<double> Telemetry::channel_values(std::size_t channel) const {
  std::vector<double> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.values.at(channel));
  return out;
}

Telemetry Telemetry::project(const std::vector<std::string>& names) const {
  std::vector<std::size_t> idx;
  for (const auto& n : names) idx.push_back(channel_index(n));
  Telemetry out;
  out.channels = names;
  out.step_s = step_s;
  out.frames.reserve(frames.size());
  for (const auto& f : frames) {
    Frame g{f.t, f.rpm, f.power, {}};
    g.values.reserve(idx.size());
    for (auto i : idx) g.values.push_back(f.values[i]);
    out.frames.push_back(std::move(g));
  }
  return out;
}

std::string Telemetry::digest() const {
  Fnv1a h;
  for (const auto& c : channels) h.update(c);
  h.update(step_s);
  for (const auto& f : frames) {
    h.update(f.t);
    h.update(f.rpm);
    h.update(f.power);
    for (double v : f.values) h.update(v);
  }
  return h.hex();
}

double FaultSpec::coefficient(double t, double t_last) const {
  switch (kind) {
    case FaultKind::catastrophic_step: {
      if (t < t_f) return 0.0;
      if (ramp_s <= 0.0) return magnitude;
      return magnitude * std::min(1.0, (t - t_f) / ramp_s);
    }
    case FaultKind::additive_ageing:
    case FaultKind::multiplicative_ageing: {
      const double start = kind == FaultKind::additive_ageing ? 0.0 : 1.0;
      const double end_t = t_end.value_or(t_last);
      double w = 0.0;
      if (t >= end_t) {
        w = 1.0;
      } else if (t > t_f && end_t > t_f) {
        w = (t - t_f) / (end_t - t_f);
      }
      return start + w * (magnitude - start);
    }
  }
  return 0.0;
}

std::vector<Frame> sample_trajectory(const LoadProfile& profile, std::uint64_t seed) {
  profile.validate();
  const std::size_t n = profile.frame_count();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Frame> frames(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * profile.step_s;
    double rpm = profile.rpm_at(t);
    double power = profile.power_at(t);
    if (profile.rpm_jitter > 0.0) rpm = std::max(0.0, rpm + profile.rpm_jitter * gauss(rng));
    if (profile.power_jitter > 0.0) power = std::max(0.0, power + profile.power_jitter * gauss(rng));
    frames[i] = Frame{t, rpm, power, {}};
  }
  return frames;
}

Telemetry generate_profile(const LoadProfile& profile, const std::vector<SensorModel>& sensors,
                           std::uint64_t seed) {
  if (sensors.empty()) throw InvalidArgument("generate_profile: at least one sensor required");
  for (const auto& s : sensors) {
    if (!(s.noise_sigma >= 0.0)) throw InvalidArgument("sensor '" + s.id + "': noise_sigma < 0");
  }
  Telemetry out;
  out.step_s = profile.step_s;
  for (const auto& s : sensors) out.channels.push_back(s.id);
  // Trajectory and noise use separate streams so that changing a noise
  // amplitude never perturbs the operating points.
  out.frames = sample_trajectory(profile, derive_seed(seed, "trajectory"));
  std::mt19937_64 rng(derive_seed(seed, "noise"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& f : out.frames) {
    f.values.resize(sensors.size());
    for (std::size_t c = 0; c < sensors.size(); ++c) {
      const double healthy = sensors[c].base_map(f.rpm, f.power);
      const double n = gauss(rng);
      f.values[c] = sensors[c].noise_sigma > 0.0 ? healthy + sensors[c].noise_sigma * n : healthy;
    }
  }
  return out;
}

Telemetry inject_fault(const Telemetry& frames, const FaultSpec& fault) {
  if (frames.frames.empty()) throw InvalidArgument("inject_fault: empty frame sequence");
  std::vector<std::size_t> idx;
  for (const auto& name : fault.targets) idx.push_back(frames.channel_index(name));
  const double t_last = frames.frames.back().t;
  if (fault.t_f < 0.0 || fault.t_f > t_last) {
    throw InvalidArgument("inject_fault: t_f outside the frame sequence");
  }
  if (fault.ramp_s < 0.0) throw InvalidArgument("inject_fault: ramp_s must be >= 0");
  Telemetry out = frames;
  for (auto& f : out.frames) {
    if (f.t < fault.t_f) continue;
    const double k = fault.coefficient(f.t, t_last);
    for (auto c : idx) {
      double& y = f.values[c];
      switch (fault.kind) {
        case FaultKind::additive_ageing: y = y + k; break;
        case FaultKind::multiplicative_ageing: y = y * k; break;
        case FaultKind::catastrophic_step:
          y = fault.apply == FaultApply::offset ? y + k : y * (1.0 + k);
          break;
      }
    }
  }
  return out;
}

Telemetry inject_faults(const Telemetry& frames, const std::vector<FaultSpec>& faults) {
  Telemetry out = frames;
  for (const auto& f : faults) out = inject_fault(out, f);
  return out;
}

namespace {

SensorModel sensor(std::string id, std::string units, double sigma,
                   std::vector<ResponseMap::Term> terms) {
  return SensorModel{std::move(id), std::move(units), ResponseMap{1800.0, 2000.0, std::move(terms)},
                     sigma};
}

}  // namespace

std::vector<SensorModel> default_sensors() {
  // r = rpm / 1800, p = power / 2000 kW. Noise is roughly 1% of the
  // mid-range value of each channel.
  return {
      sensor("water_pump_pressure", "bar", 0.03, {{1.2, 0, 0}, {2.2, 1, 0}, {0.4, 2, 0}}),
      sensor("fuel_pressure", "bar", 0.06, {{4.0, 0, 0}, {1.5, 1, 0}, {2.0, 0, 1}}),
      sensor("injector_pressure", "bar", 8.0, {{350.0, 0, 0}, {700.0, 0, 1}, {250.0, 1, 1}}),
      sensor("oil_mist_1", "mg/l", 0.0015, {{0.06, 0, 0}, {0.08, 0, 1}, {0.04, 2, 0}}),
      sensor("oil_mist_2", "mg/l", 0.0015, {{0.05, 0, 0}, {0.09, 0, 1}, {0.03, 2, 0}}),
      sensor("oil_mist_3", "mg/l", 0.0015, {{0.07, 0, 0}, {0.07, 0, 1}, {0.05, 2, 0}}),
      sensor("rail_pressure", "bar", 12.0,
             {{700.0, 0, 0}, {500.0, 1, 0}, {600.0, 0, 1}, {-250.0, 0, 2}}),
      sensor("turbo_speed", "rpm", 500.0,
             {{18000.0, 0, 0}, {52000.0, 0, 1}, {-14000.0, 0, 2}, {6000.0, 1, 0}}),
      sensor("coolant_temp", "degC", 0.4, {{72.0, 0, 0}, {9.0, 0, 1}}),
      sensor("lube_oil_temp", "degC", 0.4, {{68.0, 0, 0}, {11.0, 0, 1}, {3.0, 1, 0}}),
  };
}

LoadProfile default_detection_profile() {
  LoadProfile p;
  p.shape = "ramp-up/hold/ramp-down";
  p.step_s = 1.0;
  p.duration_s = 11999.0;
  p.waypoints = {{0, 600, 100},       {1000, 600, 100},   {5000, 1800, 2000},
                 {8000, 1800, 2000},  {11000, 600, 100},  {11999, 600, 100}};
  p.rpm_jitter = 4.0;
  p.power_jitter = 8.0;
  return p;
}

LoadProfile default_training_profile() {
  LoadProfile p;
  p.shape = "multi-sweep";
  p.step_s = 1.0;
  p.duration_s = 19999.0;
  // The first sweep follows the run-to-failure path; the rest visit
  // neighbouring operating points.
  p.waypoints = {{0, 600, 100},        {800, 600, 100},     {4800, 1800, 2000},
                 {6300, 1800, 2000},   {9300, 600, 100},    {10000, 600, 100},
                 {12500, 1300, 650},   {13500, 1300, 900},  {15500, 1800, 1900},
                 {16500, 1650, 1500},  {18500, 900, 300},   {19999, 600, 100}};
  p.rpm_jitter = 4.0;
  p.power_jitter = 8.0;
  return p;
}

// ---- JSON ----

using json_util::allow_keys;
using json_util::read_optional;
using json_util::read_required;

void to_json(nlohmann::json& j, const Waypoint& w) { j = nlohmann::json::array({w.t, w.rpm, w.power}); }

void from_json(const nlohmann::json& j, Waypoint& w) {
  if (!j.is_array() || j.size() != 3) {
    throw json_util::SchemaError("waypoint", "expected [t, rpm, power]");
  }
  w = Waypoint{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(nlohmann::json& j, const LoadProfile& p) {
  j = {{"duration_s", p.duration_s}, {"step_s", p.step_s},        {"shape", p.shape},
       {"waypoints", p.waypoints},   {"rpm_jitter", p.rpm_jitter}, {"power_jitter", p.power_jitter}};
}

void from_json(const nlohmann::json& j, LoadProfile& p) {
  allow_keys(j, {"duration_s", "step_s", "shape", "waypoints", "rpm_jitter", "power_jitter"},
             "profile");
  read_required(j, "duration_s", p.duration_s, "profile");
  read_optional(j, "step_s", p.step_s, "profile");
  read_optional(j, "shape", p.shape, "profile");
  read_required(j, "waypoints", p.waypoints, "profile");
  read_optional(j, "rpm_jitter", p.rpm_jitter, "profile");
  read_optional(j, "power_jitter", p.power_jitter, "profile");
}

void to_json(nlohmann::json& j, const ResponseMap& m) {
  auto terms = nlohmann::json::array();
  for (const auto& t : m.terms) terms.push_back({t.coefficient, t.rpm_exp, t.power_exp});
  j = {{"rpm_ref", m.rpm_ref}, {"power_ref", m.power_ref}, {"terms", terms}};
}

void from_json(const nlohmann::json& j, ResponseMap& m) {
  allow_keys(j, {"rpm_ref", "power_ref", "terms"}, "map");
  read_optional(j, "rpm_ref", m.rpm_ref, "map");
  read_optional(j, "power_ref", m.power_ref, "map");
  m.terms.clear();
  for (const auto& t : j.at("terms")) {
    if (!t.is_array() || t.size() != 3) {
      throw json_util::SchemaError("map.terms", "expected [coefficient, rpm_exp, power_exp]");
    }
    m.terms.push_back({t[0].get<double>(), t[1].get<int>(), t[2].get<int>()});
  }
}

void to_json(nlohmann::json& j, const SensorModel& s) {
  j = {{"id", s.id}, {"units", s.units}, {"noise_sigma", s.noise_sigma}, {"map", s.base_map}};
}

void from_json(const nlohmann::json& j, SensorModel& s) {
  allow_keys(j, {"id", "units", "noise_sigma", "map"}, "sensor");
  read_required(j, "id", s.id, "sensor");
  read_optional(j, "units", s.units, "sensor");
  read_optional(j, "noise_sigma", s.noise_sigma, "sensor");
  read_required(j, "map", s.base_map, "sensor");
}

std::string to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::additive_ageing: return "additive_ageing";
    case FaultKind::multiplicative_ageing: return "multiplicative_ageing";
    case FaultKind::catastrophic_step: return "catastrophic_step";
  }
  return "?";
}

FaultKind fault_kind_from_string(const std::string& s) {
  if (s == "additive_ageing") return FaultKind::additive_ageing;
  if (s == "multiplicative_ageing") return FaultKind::multiplicative_ageing;
  if (s == "catastrophic_step") return FaultKind::catastrophic_step;
  throw json_util::SchemaError("fault.kind", "unknown fault kind '" + s + "'");
}

void to_json(nlohmann::json& j, const FaultSpec& f) {
  j = {{"kind", to_string(f.kind)},
       {"targets", f.targets},
       {"t_f", f.t_f},
       {"magnitude", f.magnitude},
       {"apply", f.apply == FaultApply::offset ? "offset" : "relative"},
       {"ramp_s", f.ramp_s}};
  if (f.t_end) j["t_end"] = *f.t_end;
}

void from_json(const nlohmann::json& j, FaultSpec& f) {
  allow_keys(j, {"kind", "targets", "t_f", "magnitude", "apply", "ramp_s", "t_end"}, "fault");
  std::string kind = "catastrophic_step";
  read_optional(j, "kind", kind, "fault");
  f.kind = fault_kind_from_string(kind);
  read_required(j, "targets", f.targets, "fault");
  read_required(j, "t_f", f.t_f, "fault");
  read_required(j, "magnitude", f.magnitude, "fault");
  std::string apply = "offset";
  read_optional(j, "apply", apply, "fault");
  if (apply != "offset" && apply != "relative") {
    throw json_util::SchemaError("fault.apply", "expected 'offset' or 'relative'");
  }
  f.apply = apply == "offset" ? FaultApply::offset : FaultApply::relative;
  read_optional(j, "ramp_s", f.ramp_s, "fault");
  if (j.contains("t_end")) f.t_end = j.at("t_end").get<double>();
}

}  // namespace ddetect::sim
