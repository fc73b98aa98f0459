#include "ddetect/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <tuple>

#include "ddetect/augment.hpp"
#include "ddetect/csv.hpp"
#include "ddetect/json_util.hpp"

namespace ddetect::eval {

using nlohmann::json;

const ModelScores& MseTable::at(models::ModelKind kind) const {
  for (const auto& r : rows) {
    if (r.kind == kind) return r;
  }
  throw InvalidArgument("MSE table has no row for " + models::to_string(kind));
}

const ScenarioResult& ResultBundle::scenario(const std::string& name) const {
  for (const auto& s : scenarios) {
    if (s.name == name) return s;
  }
  throw InvalidArgument("result has no scenario '" + name + "'");
}

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<Timing>& out, std::string stage)
      : out_(out), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const auto d = std::chrono::steady_clock::now() - start_;
    out_.push_back({stage_, std::chrono::duration<double>(d).count()});
  }

 private:
  std::vector<Timing>& out_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto stage(const std::string& name, std::vector<Timing>& timings, F&& fn) {
  Stopwatch sw(timings, name);
  try {
    return fn();
  } catch (const Error& e) {
    throw Error("stage '" + name + "': " + e.what());
  }
}

sim::Telemetry tail(const sim::Telemetry& t, std::size_t from) {
  sim::Telemetry out;
  out.channels = t.channels;
  out.step_s = t.step_s;
  out.frames.assign(t.frames.begin() + static_cast<std::ptrdiff_t>(std::min(from, t.frames.size())), t.frames.end());
  return out;
}

std::size_t onset_index(const sim::Telemetry& t, double onset) {
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    if (t.frames[i].t >= onset) return i;
  }
  return t.frames.size();
}

MseTable score_models(const prep::Dataset& train, const prep::Dataset& test, const models::RegressorConfig& cfg,
                      kernels::Exec exec, std::vector<models::Regressor>* keep) {
  MseTable table;
  table.train_rows = train.size();
  table.test_rows = test.size();
  for (auto kind : models::all_kinds()) {
    auto model = models::fit(kind, train, cfg, exec);
    table.rows.push_back({kind, models::evaluate_mse(model, train, exec), models::evaluate_mse(model, test, exec)});
    if (keep) keep->push_back(std::move(model));
  }
  return table;
}

}  // namespace

ResultBundle run_experiment(const config::ExperimentConfig& input, const RunOptions& options) {
  const auto cfg = input.resolved();
  {
    const auto diags = config::validate(cfg);
    if (!diags.empty()) throw InvalidArgument("invalid config: " + diags.front().field + ": " + diags.front().message);
  }
  ResultBundle b;
  b.config = cfg;
  b.config_digest = cfg.digest();
  auto& T = b.timings;
  const std::uint64_t seed = cfg.seed;
  const auto& sensors = cfg.simulation.sensors;

  // Simulation.
  struct Sims {
    sim::Telemetry training, calibration, base;
    std::vector<sim::Telemetry> scenarios;
  };
  const Sims sims = stage("simulate", T, [&] {
    Sims s;
    s.training = sim::generate_profile(cfg.simulation.training_profile, sensors, config::stage_seed(seed, "sim.training"));
    s.calibration =
        sim::generate_profile(cfg.simulation.detection_profile, sensors, config::stage_seed(seed, "sim.calibration"));
    s.base = sim::generate_profile(cfg.simulation.detection_profile, sensors, config::stage_seed(seed, "sim.detection"));
    for (const auto& sc : cfg.scenarios) s.scenarios.push_back(sim::inject_faults(s.base, sc.faults));
    return s;
  });

  // Preprocessing and variable selection.
  struct Prepped {
    prep::Dataset all, train, test;
    prep::Dataset raw_train;  // unsmoothed rows of the training partition, for the baseline
  };
  Prepped data = stage("prep", T, [&] {
    std::size_t sel = 0;
    while (cfg.scenarios[sel].name != cfg.prep.selection_scenario) ++sel;
    const double onset = cfg.scenarios[sel].onset();
    const std::size_t from = onset_index(sims.base, onset);
    const auto healthy = prep::clean(tail(sims.base, from)).dataset;
    const auto faulty = prep::clean(tail(sims.scenarios[sel], from)).dataset;
    b.ranking = prep::rank_variables(healthy, faulty);
    b.selected = prep::select_channels(b.ranking, cfg.prep.top_k, cfg.prep.min_deviation_pct);
    if (b.selected.empty()) throw Error("no channel deviates by at least " + format_double(cfg.prep.min_deviation_pct) + "%");
    auto cleaned = prep::clean(cfg.prep.smooth_training ? prep::smooth(sims.training, cfg.window_samples()) : sims.training);
    b.removed_rows = cleaned.removed;
    Prepped p;
    p.all = cleaned.dataset.select_channels(b.selected);
    b.real_rows = p.all.size();
    std::tie(p.train, p.test) = prep::split(p.all, cfg.prep.train_fraction, config::stage_seed(seed, "prep.split"));
    if (cfg.prep.smooth_training) {
      auto raw = prep::clean(sims.training).dataset.select_channels(b.selected);
      p.raw_train = prep::split(raw, cfg.prep.train_fraction, config::stage_seed(seed, "prep.split")).first;
    } else {
      p.raw_train = p.train;
    }
    return p;
  });

  // Augmentation. Either the whole cleaned set is doubled and split with the
  // same seed, or only the training partition receives synthetic rows.
  prep::Dataset augmented_train, augmented_test;
  if (cfg.augmentation.enabled) {
    stage("augment", T, [&] {
      const auto& source = cfg.augmentation.before_split ? data.all : data.train;
      const auto vae = augment::train_vae(source, cfg.augmentation.vae);
      b.vae_loss = vae.loss_history;
      const auto count = static_cast<std::size_t>(std::llround(cfg.augmentation.factor * static_cast<double>(source.size())));
      const auto synth = augment::generate_valid(vae, count, config::stage_seed(seed, "augment.generate"));
      b.synthetic_rows = synth.size();
      if (cfg.augmentation.before_split) {
        std::tie(augmented_train, augmented_test) =
            prep::split(data.all.concat(synth), cfg.prep.train_fraction, config::stage_seed(seed, "prep.split"));
      } else {
        augmented_train = data.train.concat(synth);
        augmented_test = data.test;
      }
      return 0;
    });
  }

  // Regressors.
  std::vector<models::Regressor> fitted;
  if (cfg.augmentation.enabled) {
    b.augmented = stage("train.augmented", T, [&] {
      return score_models(augmented_train, augmented_test, cfg.models, options.exec, &fitted);
    });
  }
  if (!cfg.augmentation.enabled || options.ablation) {
    b.plain = stage("train.plain", T, [&] {
      if (!cfg.augmentation.enabled) return score_models(data.train, data.test, cfg.models, options.exec, &fitted);
      // Same test partition; the training partition loses its synthetic rows.
      std::vector<std::size_t> real;
      for (std::size_t i = 0; i < augmented_train.size(); ++i) {
        if (augmented_train.origin[i] == prep::Origin::real) real.push_back(i);
      }
      return score_models(augmented_train.take_rows(real), augmented_test, cfg.models, options.exec, nullptr);
    });
  }

  // Selection: argmin of the aggregate test MSE, ties in all_kinds() order.
  std::vector<std::pair<models::ModelKind, double>> agg;
  for (const auto& r : b.primary().rows) agg.emplace_back(r.kind, r.test.aggregate);
  b.chosen = models::select_best(agg);
  const double best = b.primary().at(b.chosen).test.aggregate;
  b.chosen_by_tie = std::count_if(agg.begin(), agg.end(), [&](const auto& a) { return a.second == best; }) > 1;
  b.model = *std::find_if(fitted.begin(), fitted.end(), [&](const auto& m) { return m.kind == b.chosen; });
  const auto& model = b.model;

  // Calibration on a fresh healthy run of the detection profile.
  b.thresholds = stage("calibrate", T, [&] {
    detect::CalibrationOptions opt;
    opt.window_samples = cfg.window_samples();
    opt.margin = cfg.detection.margin;
    opt.floor_v = cfg.detection.floor_v;
    opt.floor_a = cfg.detection.floor_a;
    opt.deviation_threshold = cfg.detection.deviation_threshold;
    opt.created = "config:" + b.config_digest;
    return detect::calibrate(model, sims.calibration, opt);
  });

  const auto ocsvm = stage("baseline.train", T, [&] {
    return baseline::train_ocsvm(data.raw_train, b.selected, cfg.baseline, options.exec);
  });
  b.ocsvm_support_vectors = ocsvm.alpha.size();
  b.ocsvm_rho = ocsvm.rho;
  b.ocsvm_gamma = ocsvm.gamma;
  b.ocsvm_kkt_residual = ocsvm.kkt_residual;

  stage("detect", T, [&] {
    for (std::size_t s = 0; s < cfg.scenarios.size(); ++s) {
      ScenarioResult r;
      r.name = cfg.scenarios[s].name;
      r.onset_s = cfg.scenarios[s].onset();
      r.onset_index = onset_index(sims.scenarios[s], r.onset_s);
      r.run = detect::run_detector(model, sims.scenarios[s], b.thresholds, cfg.detection.confirm_k);
      r.ocsvm = baseline::classify_frames(ocsvm, sims.scenarios[s], options.exec);
      r.comparison = baseline::compare_detection(r.ocsvm, r.run.report, cfg.baseline.k_stable);
      b.scenarios.push_back(std::move(r));
    }
    return 0;
  });
  return b;
}

std::vector<LeadTimeRow> lead_time_table(std::span<const ResultBundle> bundles) {
  std::vector<LeadTimeRow> rows;
  auto diff = [](const std::optional<std::size_t>& a, const std::optional<std::size_t>& b) -> std::optional<long long> {
    if (!a || !b) return std::nullopt;
    return static_cast<long long>(*a) - static_cast<long long>(*b);
  };
  for (const auto& b : bundles) {
    if (b.scenarios.empty()) throw InvalidArgument("result " + b.config_digest + " has no fault scenario");
    for (const auto& s : b.scenarios) {
      LeadTimeRow r;
      r.run = b.config_digest;
      r.scenario = s.name;
      r.derivative = s.run.report.combined;
      r.deviation = s.run.report.deviation;
      r.ocsvm = s.comparison.ocsvm_detection;
      r.deviation_minus_derivative = diff(r.deviation, r.derivative);
      r.ocsvm_minus_derivative = diff(r.ocsvm, r.derivative);
      r.ocsvm_minus_deviation = diff(r.ocsvm, r.deviation);
      rows.push_back(r);
    }
  }
  return rows;
}

namespace {

json opt(const std::optional<std::size_t>& v) { return v ? json(*v) : json(); }
json opt(const std::optional<long long>& v) { return v ? json(*v) : json(); }

std::string cell(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "-"; }
std::string cell(const std::optional<long long>& v) { return v ? std::to_string(*v) : "-"; }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << std::scientific << v;
  return ss.str();
}

void write_table_md(std::ostringstream& md, const MseTable& t, const std::vector<std::string>& channels, bool train) {
  md << "| model | aggregate |";
  for (const auto& c : channels) md << ' ' << c << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < channels.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& r : t.rows) {
    const auto& rep = train ? r.train : r.test;
    md << "| " << models::to_string(r.kind) << " | " << fmt(rep.aggregate) << " |";
    for (double v : rep.per_channel) md << ' ' << fmt(v) << " |";
    md << '\n';
  }
  md << '\n';
}

std::string markdown(const ResultBundle& b) {
  std::ostringstream md;
  md << "# Experiment " << b.config_digest << "\n\n";
  md << "Seed " << b.config.seed << ". " << b.real_rows << " healthy rows after cleaning (" << b.removed_rows
     << " removed), " << b.synthetic_rows << " synthetic rows.\n\n";
  md << "## Selected channels\n\n| channel | deviation % | selected |\n|---|---|---|\n";
  for (const auto& r : b.ranking) {
    const bool sel = std::find(b.selected.begin(), b.selected.end(), r.channel) != b.selected.end();
    md << "| " << r.channel << " | " << format_double(std::round(r.deviation_pct * 1000.0) / 1000.0) << " | "
       << (sel ? "yes" : "no") << " |\n";
  }
  md << '\n';
  auto section = [&](const char* title, const MseTable& t) {
    if (t.empty()) return;
    md << "## " << title << " (" << t.train_rows << " train / " << t.test_rows << " test rows)\n\n";
    md << "Train MSE\n\n";
    write_table_md(md, t, b.selected, true);
    md << "Test MSE\n\n";
    write_table_md(md, t, b.selected, false);
  };
  section("With augmentation", b.augmented);
  section("Without augmentation", b.plain);
  md << "Aggregate = sum over channels of MSE / variance of the evaluated rows.\n\n";
  md << "Chosen model: **" << models::to_string(b.chosen) << "**" << (b.chosen_by_tie ? " (tie broken by order)" : "")
     << "\n\n";
  md << "## Thresholds (margin " << format_double(b.thresholds.margin) << ")\n\n| channel | v | a | deviation |\n|---|---|---|---|\n";
  for (std::size_t c = 0; c < b.thresholds.channels.size(); ++c) {
    md << "| " << b.thresholds.channels[c] << " | " << fmt(b.thresholds.v_threshold[c]) << " | "
       << fmt(b.thresholds.a_threshold[c]) << " | " << format_double(b.thresholds.deviation_threshold[c]) << " |\n";
  }
  md << "\n## Detection\n\n| scenario | onset | derivative | deviation 5% | OC-SVM (k=" << b.config.baseline.k_stable
     << ") | lead vs deviation | lead vs OC-SVM |\n|---|---|---|---|---|---|---|\n";
  for (const auto& s : b.scenarios) {
    const auto& r = s.run.report;
    md << "| " << s.name << " | " << s.onset_index << " | " << cell(r.combined) << " | " << cell(r.deviation) << " | "
       << cell(s.comparison.ocsvm_detection) << " | " << cell(r.lead_time_samples) << " | "
       << cell(s.comparison.difference) << " |\n";
  }
  md << "\nOC-SVM: " << b.ocsvm_support_vectors << " support vectors, nu " << format_double(b.config.baseline.nu)
     << ", gamma " << format_double(b.ocsvm_gamma) << ", features rpm, power and the selected channels (standardized).\n";
  return md.str();
}

}  // namespace

std::vector<LeadTimeRow> lead_time_table(const json& results) {
  auto diff = [](const std::optional<std::size_t>& a, const std::optional<std::size_t>& b) -> std::optional<long long> {
    if (!a || !b) return std::nullopt;
    return static_cast<long long>(*a) - static_cast<long long>(*b);
  };
  auto index = [](const json& v) -> std::optional<std::size_t> {
    if (v.is_null()) return std::nullopt;
    return v.get<std::size_t>();
  };
  std::vector<LeadTimeRow> rows;
  try {
    const auto run = results.at("config_digest").get<std::string>();
    const auto& scenarios = results.at("scenarios");
    if (scenarios.empty()) throw InvalidArgument("result " + run + " has no fault scenario");
    for (const auto& s : scenarios) {
      LeadTimeRow r;
      r.run = run;
      r.scenario = s.at("name").get<std::string>();
      const auto report = s.at("detection").get<detect::DetectionReport>();
      r.derivative = report.combined;
      r.deviation = report.deviation;
      r.ocsvm = index(s.at("baseline").at("ocsvm_detection"));
      r.deviation_minus_derivative = diff(r.deviation, r.derivative);
      r.ocsvm_minus_derivative = diff(r.ocsvm, r.derivative);
      r.ocsvm_minus_deviation = diff(r.ocsvm, r.deviation);
      rows.push_back(r);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed results document: ") + e.what());
  }
  return rows;
}

std::string lead_time_csv(std::span<const LeadTimeRow> rows, bool with_run) {
  std::string out = with_run ? "run," : "";
  out += "scenario,derivative,deviation_5pct,ocsvm,deviation_minus_derivative,ocsvm_minus_derivative,ocsvm_minus_deviation\n";
  auto c = [](const auto& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& r : rows) {
    if (with_run) out += r.run + ",";
    out += r.scenario + "," + c(r.derivative) + "," + c(r.deviation) + "," + c(r.ocsvm) + "," +
           c(r.deviation_minus_derivative) + "," + c(r.ocsvm_minus_derivative) + "," + c(r.ocsvm_minus_deviation) + "\n";
  }
  return out;
}

void to_json(json& j, const MseTable& t) {
  json rows = json::object();
  for (const auto& r : t.rows) rows[models::to_string(r.kind)] = {{"train", r.train}, {"test", r.test}};
  j = {{"train_rows", t.train_rows}, {"test_rows", t.test_rows}, {"models", rows}};
}

void to_json(json& j, const LeadTimeRow& r) {
  j = {{"run", r.run},
       {"scenario", r.scenario},
       {"derivative", opt(r.derivative)},
       {"deviation_5pct", opt(r.deviation)},
       {"ocsvm", opt(r.ocsvm)},
       {"deviation_minus_derivative", opt(r.deviation_minus_derivative)},
       {"ocsvm_minus_derivative", opt(r.ocsvm_minus_derivative)},
       {"ocsvm_minus_deviation", opt(r.ocsvm_minus_deviation)}};
}

void to_json(json& j, const ResultBundle& b) {
  json ranking = json::array();
  for (const auto& r : b.ranking) {
    ranking.push_back({{"channel", r.channel}, {"deviation_pct", r.deviation_pct}, {"selectable", r.selectable}});
  }
  json scenarios = json::array();
  for (const auto& s : b.scenarios) {
    scenarios.push_back({{"name", s.name},
                         {"onset_s", s.onset_s},
                         {"onset_index", s.onset_index},
                         {"detection", s.run.report},
                         {"baseline", s.comparison}});
  }
  j = {{"config_digest", b.config_digest},
       {"config", b.config},
       {"variable_ranking", ranking},
       {"selected_channels", b.selected},
       {"rows", {{"real", b.real_rows}, {"removed", b.removed_rows}, {"synthetic", b.synthetic_rows}}},
       {"vae_loss", b.vae_loss},
       {"mse", {{"augmented", b.augmented.empty() ? json() : json(b.augmented)},
                {"without_augmentation", b.plain.empty() ? json() : json(b.plain)}}},
       {"chosen_model", models::to_string(b.chosen)},
       {"chosen_by_tie", b.chosen_by_tie},
       {"thresholds", b.thresholds},
       {"baseline_model",
        {{"support_vectors", b.ocsvm_support_vectors},
         {"rho", b.ocsvm_rho},
         {"gamma", b.ocsvm_gamma},
         {"nu", b.config.baseline.nu},
         {"kkt_residual", b.ocsvm_kkt_residual},
         {"features", "rpm, power and the selected channels, standardized on the healthy training rows"}}},
       {"scenarios", scenarios}};
}

std::filesystem::path emit_report(const ResultBundle& b, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  const fs::path dir = root / ("run-" + b.config_digest);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  csv::write_text(dir / "results.json", json(b).dump(2) + "\n");
  csv::write_text(dir / "thresholds.json", json(b.thresholds).dump(2) + "\n");
  json timings = json::array();
  for (const auto& t : b.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  csv::write_text(dir / "timings.json", timings.dump(2) + "\n");
  csv::write_text(dir / "report.md", markdown(b));

  const auto rows = lead_time_table(std::span<const ResultBundle>(&b, 1));
  const std::string lt = lead_time_csv(rows, false);
  csv::write_text(dir / "lead_times.csv", lt);

  for (const auto& s : b.scenarios) {
    const fs::path sd = dir / "traces" / s.name;
    detect::export_traces(s.run.state, s.run.report, sd);
    baseline::write_outputs(sd / "ocsvm_outputs.csv", s.run.state.t, s.ocsvm);
  }
  return dir;
}

}  // namespace ddetect::eval
