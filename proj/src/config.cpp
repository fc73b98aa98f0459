#include "ddetect/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ddetect/csv.hpp"
#include "ddetect/json_util.hpp"
#include "ddetect/prep.hpp"

namespace ddetect::config {

using nlohmann::json;

double Scenario::onset() const {
  if (faults.empty()) throw InvalidArgument("scenario '" + name + "' has no faults");
  double t = faults.front().t_f;
  for (const auto& f : faults) t = std::min(t, f.t_f);
  return t;
}

std::uint64_t stage_seed(std::uint64_t base, const std::string& stage) { return derive_seed(base, stage); }

std::vector<Scenario> default_scenarios(double t_f) {
  auto step = [t_f](std::vector<std::string> targets, double magnitude, double ramp_s) {
    sim::FaultSpec f;
    f.kind = sim::FaultKind::catastrophic_step;
    f.targets = std::move(targets);
    f.t_f = t_f;
    f.magnitude = magnitude;
    f.apply = sim::FaultApply::relative;
    f.ramp_s = ramp_s;
    return f;
  };
  Scenario s{"step", {}};
  s.faults = {step({"water_pump_pressure"}, 0.25, 0.0),
              step({"oil_mist_1", "oil_mist_2", "oil_mist_3"}, 0.35, 0.0),
              step({"fuel_pressure", "injector_pressure", "rail_pressure", "turbo_speed"}, -0.2, 0.0)};
  Scenario r{"ramp", {}};
  r.faults = {step({"water_pump_pressure", "oil_mist_1", "oil_mist_2", "oil_mist_3"}, 0.2, 400.0),
              step({"fuel_pressure", "injector_pressure", "rail_pressure", "turbo_speed"}, -0.2, 400.0)};
  return {s, r};
}

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.simulation.training_profile = sim::default_training_profile();
  c.simulation.detection_profile = sim::default_detection_profile();
  c.simulation.sensors = sim::default_sensors();
  c.scenarios = default_scenarios();
  c.models.mlp.epochs = 30;
  c.augmentation.vae.epochs = 60;
  c.augmentation.vae.beta = 0.01;
  c.augmentation.vae.learning_rate = 1e-2;
  return c.resolved();
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  c.augmentation.vae.seed = stage_seed(seed, "augment.vae");
  c.models.tree.seed = stage_seed(seed, "models.tree");
  c.models.forest.seed = stage_seed(seed, "models.forest");
  c.models.mlp.seed = stage_seed(seed, "models.mlp");
  c.baseline.seed = stage_seed(seed, "baseline.ocsvm");
  return c;
}

std::string ExperimentConfig::digest() const {
  const json j = resolved();
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

std::size_t ExperimentConfig::window_samples() const {
  return prep::window_samples(prep.window_seconds, simulation.detection_profile.step_s);
}

const Scenario& ExperimentConfig::scenario(const std::string& name) const {
  for (const auto& s : scenarios) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("no scenario named '" + name + "'");
}

void to_json(json& j, const Scenario& s) { j = {{"name", s.name}, {"faults", s.faults}}; }

void from_json(const json& j, Scenario& s) {
  json_util::allow_keys(j, {"name", "faults"}, "scenario");
  json_util::read_required(j, "name", s.name, "scenario");
  json_util::read_required(j, "faults", s.faults, "scenario");
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"seed", c.seed},
       {"simulation",
        {{"training_profile", c.simulation.training_profile},
         {"detection_profile", c.simulation.detection_profile},
         {"sensors", c.simulation.sensors}}},
       {"scenarios", c.scenarios},
       {"prep",
        {{"window_seconds", c.prep.window_seconds},
         {"train_fraction", c.prep.train_fraction},
         {"top_k", c.prep.top_k},
         {"min_deviation_pct", c.prep.min_deviation_pct},
         {"selection_scenario", c.prep.selection_scenario},
         {"smooth_training", c.prep.smooth_training}}},
       {"augmentation", {{"enabled", c.augmentation.enabled}, {"factor", c.augmentation.factor}, {"before_split", c.augmentation.before_split}, {"vae", c.augmentation.vae}}},
       {"models", c.models},
       {"detection",
        {{"margin", c.detection.margin},
         {"deviation_threshold", c.detection.deviation_threshold},
         {"floor_v", c.detection.floor_v},
         {"floor_a", c.detection.floor_a},
         {"confirm_k", c.detection.confirm_k}}},
       {"baseline", c.baseline}};
}

void from_json(const json& j, ExperimentConfig& c) {
  using json_util::allow_keys;
  using json_util::read_optional;
  allow_keys(j, {"seed", "simulation", "scenarios", "prep", "augmentation", "models", "detection", "baseline"}, "");
  std::uint64_t seed = ExperimentConfig{}.seed;
  read_optional(j, "seed", seed, "");
  c = ExperimentConfig::defaults();
  c.seed = seed;
  c = c.resolved();

  if (auto it = j.find("simulation"); it != j.end()) {
    allow_keys(*it, {"training_profile", "detection_profile", "sensors"}, "simulation");
    read_optional(*it, "training_profile", c.simulation.training_profile, "simulation");
    read_optional(*it, "detection_profile", c.simulation.detection_profile, "simulation");
    read_optional(*it, "sensors", c.simulation.sensors, "simulation");
  }
  read_optional(j, "scenarios", c.scenarios, "");
  if (auto it = j.find("prep"); it != j.end()) {
    allow_keys(*it, {"window_seconds", "train_fraction", "top_k", "min_deviation_pct", "selection_scenario", "smooth_training"}, "prep");
    read_optional(*it, "window_seconds", c.prep.window_seconds, "prep");
    read_optional(*it, "train_fraction", c.prep.train_fraction, "prep");
    read_optional(*it, "top_k", c.prep.top_k, "prep");
    read_optional(*it, "min_deviation_pct", c.prep.min_deviation_pct, "prep");
    read_optional(*it, "selection_scenario", c.prep.selection_scenario, "prep");
    read_optional(*it, "smooth_training", c.prep.smooth_training, "prep");
  }
  if (auto it = j.find("augmentation"); it != j.end()) {
    allow_keys(*it, {"enabled", "factor", "before_split", "vae"}, "augmentation");
    read_optional(*it, "enabled", c.augmentation.enabled, "augmentation");
    read_optional(*it, "factor", c.augmentation.factor, "augmentation");
    read_optional(*it, "before_split", c.augmentation.before_split, "augmentation");
    if (it->contains("vae")) {
      // Nested configs start from the current values so partial objects work.
      json merged = c.augmentation.vae;
      merged.update(it->at("vae"));
      c.augmentation.vae = merged.get<augment::VaeConfig>();
    }
  }
  if (auto it = j.find("models"); it != j.end()) {
    json merged = c.models;
    json_util::allow_keys(*it, {"tree", "forest", "mlp"}, "models");
    for (const char* k : {"tree", "forest", "mlp"}) {
      if (!it->contains(k)) continue;
      if (std::string(k) == "forest" && it->at(k).contains("tree")) {
        json inner = merged[k]["tree"];
        inner.update(it->at(k).at("tree"));
        json outer = it->at(k);
        outer["tree"] = inner;
        merged[k].update(outer);
      } else {
        merged[k].update(it->at(k));
      }
    }
    c.models = merged.get<models::RegressorConfig>();
  }
  if (auto it = j.find("detection"); it != j.end()) {
    allow_keys(*it, {"margin", "deviation_threshold", "floor_v", "floor_a", "confirm_k"}, "detection");
    read_optional(*it, "margin", c.detection.margin, "detection");
    read_optional(*it, "deviation_threshold", c.detection.deviation_threshold, "detection");
    read_optional(*it, "floor_v", c.detection.floor_v, "detection");
    read_optional(*it, "floor_a", c.detection.floor_a, "detection");
    read_optional(*it, "confirm_k", c.detection.confirm_k, "detection");
  }
  if (auto it = j.find("baseline"); it != j.end()) {
    json merged = c.baseline;
    json_util::expect_object(*it, "baseline");
    merged.update(*it);
    c.baseline = merged.get<baseline::OcsvmConfig>();
  }
}

std::vector<Diagnostic> validate(const ExperimentConfig& c) {
  std::vector<Diagnostic> d;
  auto add = [&d](std::string field, std::string msg) { d.push_back({std::move(field), std::move(msg)}); };
  auto fmt = [](double v) { return format_double(v); };

  for (const auto& [name, p] : {std::pair<const char*, const sim::LoadProfile*>{"simulation.training_profile",
                                                                                 &c.simulation.training_profile},
                                {"simulation.detection_profile", &c.simulation.detection_profile}}) {
    try {
      p->validate();
    } catch (const Error& e) {
      add(name, e.what());
    }
  }
  if (c.simulation.training_profile.step_s != c.simulation.detection_profile.step_s) {
    add("simulation.detection_profile.step_s", "must equal the training profile step");
  }
  if (c.simulation.sensors.empty()) add("simulation.sensors", "at least one sensor is required");
  std::set<std::string> sensor_ids;
  for (std::size_t i = 0; i < c.simulation.sensors.size(); ++i) {
    const auto& s = c.simulation.sensors[i];
    if (!sensor_ids.insert(s.id).second) add("simulation.sensors[" + std::to_string(i) + "].id", "duplicate id '" + s.id + "'");
    if (!(s.noise_sigma >= 0.0)) add("simulation.sensors[" + std::to_string(i) + "].noise_sigma", "must be >= 0");
  }

  if (c.scenarios.empty()) add("scenarios", "at least one scenario is required");
  std::set<std::string> names;
  const double t_last = c.simulation.detection_profile.duration_s;
  for (std::size_t i = 0; i < c.scenarios.size(); ++i) {
    const auto& s = c.scenarios[i];
    const std::string base = "scenarios[" + std::to_string(i) + "]";
    if (s.name.empty()) add(base + ".name", "must not be empty");
    if (!names.insert(s.name).second) add(base + ".name", "duplicate scenario '" + s.name + "'");
    if (s.faults.empty()) add(base + ".faults", "at least one fault is required");
    for (std::size_t k = 0; k < s.faults.size(); ++k) {
      const auto& f = s.faults[k];
      const std::string fb = base + ".faults[" + std::to_string(k) + "]";
      if (f.targets.empty()) add(fb + ".targets", "at least one target is required");
      for (const auto& t : f.targets) {
        if (!sensor_ids.count(t)) add(fb + ".targets", "unknown channel '" + t + "'");
      }
      if (!(f.t_f >= 0.0 && f.t_f <= t_last)) {
        add(fb + ".t_f", "must lie within the detection profile [0, " + fmt(t_last) + "], got " + fmt(f.t_f));
      }
      if (!(f.ramp_s >= 0.0)) add(fb + ".ramp_s", "must be >= 0");
    }
  }

  const double step = c.simulation.detection_profile.step_s;
  if (!(c.prep.window_seconds > 0.0)) {
    add("prep.window_seconds", "must be > 0, got " + fmt(c.prep.window_seconds));
  } else if (step > 0.0) {
    try {
      prep::window_samples(c.prep.window_seconds, step);
    } catch (const Error& e) {
      add("prep.window_seconds", e.what());
    }
  }
  if (!(c.prep.train_fraction > 0.0 && c.prep.train_fraction < 1.0)) {
    add("prep.train_fraction", "must lie in the open interval (0, 1), got " + fmt(c.prep.train_fraction));
  }
  if (c.prep.top_k == 0) add("prep.top_k", "must be >= 1");
  if (!(c.prep.min_deviation_pct >= 0.0)) add("prep.min_deviation_pct", "must be >= 0");
  if (!names.count(c.prep.selection_scenario)) {
    add("prep.selection_scenario", "no scenario named '" + c.prep.selection_scenario + "'");
  }

  const auto& v = c.augmentation.vae;
  if (!(c.augmentation.factor > 0.0)) add("augmentation.factor", "must be > 0");
  if (v.epochs == 0) add("augmentation.vae.epochs", "must be >= 1");
  if (v.hidden == 0) add("augmentation.vae.hidden", "must be >= 1");
  if (v.latent == 0) add("augmentation.vae.latent", "must be >= 1");
  if (v.batch_size == 0) add("augmentation.vae.batch_size", "must be >= 1");
  if (!(v.learning_rate > 0.0)) add("augmentation.vae.learning_rate", "must be > 0");
  if (!(v.beta >= 0.0)) add("augmentation.vae.beta", "must be >= 0");

  const auto& m = c.models;
  for (const auto& [name, t] : {std::pair<std::string, const tree::TreeConfig*>{"models.tree", &m.tree},
                                {"models.forest.tree", &m.forest.tree}}) {
    if (t->min_samples_split < 2) add(name + ".min_samples_split", "must be >= 2");
    if (t->min_samples_leaf < 1) add(name + ".min_samples_leaf", "must be >= 1");
  }
  if (m.forest.n_trees == 0) add("models.forest.n_trees", "must be >= 1");
  if (m.mlp.hidden.empty()) add("models.mlp.hidden", "at least one hidden layer is required");
  for (std::size_t h : m.mlp.hidden) {
    if (h == 0) add("models.mlp.hidden", "layer widths must be >= 1");
  }
  if (!(m.mlp.learning_rate > 0.0)) add("models.mlp.learning_rate", "must be > 0");
  if (m.mlp.epochs == 0) add("models.mlp.epochs", "must be >= 1");
  if (m.mlp.batch_size == 0) add("models.mlp.batch_size", "must be >= 1");

  if (!(c.detection.margin > 0.0)) add("detection.margin", "must be > 0");
  if (!(c.detection.deviation_threshold > 0.0)) add("detection.deviation_threshold", "must be > 0");
  if (!(c.detection.floor_v > 0.0)) add("detection.floor_v", "must be > 0");
  if (!(c.detection.floor_a > 0.0)) add("detection.floor_a", "must be > 0");
  if (c.detection.confirm_k == 0) add("detection.confirm_k", "must be >= 1");

  if (!(c.baseline.nu > 0.0 && c.baseline.nu <= 1.0)) add("baseline.nu", "must lie in (0, 1], got " + fmt(c.baseline.nu));
  if (!(c.baseline.gamma >= 0.0)) add("baseline.gamma", "must be >= 0 (0 selects the default)");
  if (c.baseline.k_stable == 0) add("baseline.k_stable", "must be >= 1");
  if (c.baseline.max_train < 2) add("baseline.max_train", "must be >= 2");
  if (c.baseline.max_iter == 0) add("baseline.max_iter", "must be >= 1");

  const ExperimentConfig r = c.resolved();
  auto seed_check = [&](const char* field, std::uint64_t got, std::uint64_t want) {
    if (got != want) add(field, "stage seeds derive from the top-level seed; expected " + std::to_string(want));
  };
  seed_check("augmentation.vae.seed", c.augmentation.vae.seed, r.augmentation.vae.seed);
  seed_check("models.tree.seed", c.models.tree.seed, r.models.tree.seed);
  seed_check("models.forest.seed", c.models.forest.seed, r.models.forest.seed);
  seed_check("models.mlp.seed", c.models.mlp.seed, r.models.mlp.seed);
  seed_check("baseline.seed", c.baseline.seed, r.baseline.seed);
  return d;
}

std::vector<Diagnostic> validate(const json& j) {
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const json_util::SchemaError& e) {
    return {{e.field(), e.what()}};
  } catch (const std::exception& e) {
    return {{"", e.what()}};
  }
  return validate(c);
}

json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1, start = 0;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
        start = i + 1;
      } else {
        ++col;
      }
    }
    const std::size_t end = text.find('\n', start);
    const std::string context = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    throw InvalidArgument(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": JSON syntax error\n  " + context + "\n  " + std::string(col > 0 ? col - 1 : 0, ' ') + "^");
  }
}

ExperimentConfig from_text(const std::string& text, const std::string& source) {
  const json j = parse_text(text, source);
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const json_util::SchemaError& e) {
    throw InvalidArgument(source + ": " + e.what());
  } catch (const json::exception& e) {
    throw InvalidArgument(source + ": " + e.what());
  }
  const auto diags = validate(c);
  if (!diags.empty()) {
    std::string msg = source + ": invalid config";
    for (const auto& d : diags) msg += "\n  " + d.field + ": " + d.message;
    throw InvalidArgument(msg);
  }
  return c;
}

ExperimentConfig load(const std::filesystem::path& path) { return from_text(csv::read_text(path), path.string()); }

}  // namespace ddetect::config
