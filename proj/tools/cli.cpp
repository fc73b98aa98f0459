#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>
#include <sstream>

#include "ddetect/augment.hpp"
#include "ddetect/baseline.hpp"
#include "ddetect/config.hpp"
#include "ddetect/csv.hpp"
#include "ddetect/detect.hpp"
#include "ddetect/eval.hpp"
#include "ddetect/prep.hpp"
#include "ddetect/regressor.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool serial = false;
};

kernels::Exec exec_of(const Globals& g) { return g.serial ? kernels::Exec::serial : kernels::Exec::parallel; }

json read_json(const fs::path& path) { return config::parse_text(csv::read_text(path), path.string()); }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  csv::write_text(path, j.dump(2) + "\n");
}

template <typename T>
T load_as(const fs::path& path, const char* what) {
  const json j = read_json(path);
  try {
    return j.get<T>();
  } catch (const std::exception& e) {
    throw InvalidArgument(path.string() + ": not a valid " + what + ": " + e.what());
  }
}

/// key.path=value; the value is read as JSON when it parses, else as a string.
void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw InvalidArgument("--set key '" + key + "' has an empty component");
    if (!node->is_object()) throw InvalidArgument("--set key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

config::ExperimentConfig resolve_config(const Globals& g, std::ostream& err) {
  json doc = json::object();
  std::string source = "<defaults>";
  if (!g.config_path.empty()) {
    doc = read_json(g.config_path);
    source = g.config_path;
  }
  for (const auto& o : g.overrides) apply_override(doc, o);
  auto cfg = config::from_text(doc.dump(), source);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg = cfg.resolved();
  }
  err << "resolved config " << cfg.digest() << ": " << json(cfg).dump() << "\n";
  return cfg;
}

sim::LoadProfile profile_of(const config::ExperimentConfig& cfg, const std::string& which) {
  return which == "training" ? cfg.simulation.training_profile : cfg.simulation.detection_profile;
}

std::string seed_stage_of(const std::string& which) { return "sim." + which; }

/// Raw rows of the training partition, split exactly as the experiment does.
prep::Dataset raw_training_rows(const config::ExperimentConfig& cfg, const sim::Telemetry& training,
                                const std::vector<std::string>& channels) {
  auto all = prep::clean(training).dataset.select_channels(channels);
  return prep::split(all, cfg.prep.train_fraction, config::stage_seed(cfg.seed, "prep.split")).first;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_table(std::ostream& out, const eval::MseTable& t) {
  out << "model    train_aggregate  test_aggregate\n";
  for (const auto& r : t.rows) {
    out << models::to_string(r.kind) << std::string(9 - std::min<std::size_t>(8, models::to_string(r.kind).size()), ' ')
        << format_double(r.train.aggregate) << "  " << format_double(r.test.aggregate) << "\n";
  }
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Early detection of catastrophic failures from derivatives of the measured/predicted deviation."};
  app.name("ddetect");
  app.require_subcommand(1);
  app.fallthrough();
  app.get_formatter()->column_width(34);

  {
    const auto d = config::ExperimentConfig::defaults();
    std::ostringstream f;
    f << "\nConfig defaults (override with --config or --set):\n"
      << "  seed " << d.seed << "; prep.window_seconds " << format_double(d.prep.window_seconds)
      << "; prep.train_fraction " << format_double(d.prep.train_fraction) << "; prep.top_k " << d.prep.top_k
      << "; prep.min_deviation_pct " << format_double(d.prep.min_deviation_pct) << "\n"
      << "  augmentation.factor " << format_double(d.augmentation.factor) << "; augmentation.vae.epochs "
      << d.augmentation.vae.epochs << "; augmentation.vae.hidden " << d.augmentation.vae.hidden << "\n"
      << "  models.forest.n_trees " << d.models.forest.n_trees << "; models.mlp.hidden 32,24,12; models.mlp.learning_rate "
      << format_double(d.models.mlp.learning_rate) << "; models.mlp.epochs " << d.models.mlp.epochs << "\n"
      << "  detection.margin " << format_double(d.detection.margin) << "; detection.deviation_threshold "
      << format_double(d.detection.deviation_threshold) << "; detection.confirm_k " << d.detection.confirm_k << "\n"
      << "  baseline.nu " << format_double(d.baseline.nu) << "; baseline.k_stable " << d.baseline.k_stable << "\n"
      << "Exit codes: 0 ok / no alarm, 1 error, 2 derivative alarm, 3 deviation-only alarm.\n";
    app.footer(f.str());
  }

  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON); defaults are used when omitted")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a config field, e.g. --set detection.margin=2 (repeatable)");
  app.add_option("--seed", g.seed, "Base seed; every stage seed is re-derived from it");
  app.add_flag("--serial", g.serial, "Run kernels on one thread (OpenMP off)");

  int code = kOk;
  std::function<void()> action;

  // simulate
  std::string sim_profile = "detection", sim_scenario, sim_out;
  auto* simc = app.add_subcommand("simulate", "Generate a telemetry CSV");
  simc->add_option("--profile", sim_profile, "Load profile and noise seed")
      ->check(CLI::IsMember({"training", "calibration", "detection"}))
      ->capture_default_str();
  simc->add_option("--scenario", sim_scenario, "Inject the named fault scenario (detection profile only)");
  simc->add_option("--out", sim_out, "Output CSV")->required();
  simc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      auto t = sim::generate_profile(profile_of(cfg, sim_profile), cfg.simulation.sensors,
                                     config::stage_seed(cfg.seed, seed_stage_of(sim_profile)));
      if (!sim_scenario.empty()) {
        if (sim_profile != "detection") throw InvalidArgument("--scenario requires --profile detection");
        t = sim::inject_faults(t, cfg.scenario(sim_scenario).faults);
      }
      if (fs::path(sim_out).has_parent_path()) fs::create_directories(fs::path(sim_out).parent_path());
      csv::write_telemetry(sim_out, t);
      out << "wrote " << t.frames.size() << " frames x " << t.channels.size() << " channels to " << sim_out << "\n";
    };
  });

  // prep
  std::string prep_in, prep_healthy, prep_faulty, prep_channels, prep_out;
  auto* prepc = app.add_subcommand("prep", "Clean, denoise, select channels and split a training run");
  prepc->add_option("--in", prep_in, "Healthy training telemetry CSV")->required()->check(CLI::ExistingFile);
  prepc->add_option("--healthy", prep_healthy, "Healthy detection run used for channel ranking")->check(CLI::ExistingFile);
  prepc->add_option("--faulty", prep_faulty, "Faulty detection run used for channel ranking")->check(CLI::ExistingFile);
  prepc->add_option("--channels", prep_channels, "Comma-separated channels; skips ranking");
  prepc->add_option("--out", prep_out, "Output directory (train.csv, test.csv, selection.json)")->required();
  prepc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      json selection = json::object();
      std::vector<std::string> channels;
      if (!prep_channels.empty()) {
        channels = split_list(prep_channels);
      } else {
        if (prep_healthy.empty() || prep_faulty.empty()) throw InvalidArgument("prep needs --channels or both --healthy and --faulty");
        const auto base = csv::read_telemetry(prep_healthy);
        const auto faulty = csv::read_telemetry(prep_faulty);
        const double onset = cfg.scenario(cfg.prep.selection_scenario).onset();
        auto from = [&](const sim::Telemetry& t) {
          sim::Telemetry tail;
          tail.channels = t.channels;
          tail.step_s = t.step_s;
          for (const auto& f : t.frames) {
            if (f.t >= onset) tail.frames.push_back(f);
          }
          return prep::clean(tail).dataset;
        };
        const auto ranking = prep::rank_variables(from(base), from(faulty));
        channels = prep::select_channels(ranking, cfg.prep.top_k, cfg.prep.min_deviation_pct);
        json r = json::array();
        for (const auto& d : ranking) r.push_back({{"channel", d.channel}, {"deviation_pct", d.deviation_pct}});
        selection["ranking"] = r;
      }
      if (channels.empty()) throw Error("no channel selected");
      const auto training = csv::read_telemetry(prep_in);
      const auto cleaned =
          prep::clean(cfg.prep.smooth_training ? prep::smooth(training, cfg.window_samples()) : training);
      const auto all = cleaned.dataset.select_channels(channels);
      const auto [train, test] = prep::split(all, cfg.prep.train_fraction, config::stage_seed(cfg.seed, "prep.split"));
      fs::create_directories(prep_out);
      csv::write_dataset(fs::path(prep_out) / "train.csv", train);
      csv::write_dataset(fs::path(prep_out) / "test.csv", test);
      selection["selected"] = channels;
      selection["removed_rows"] = cleaned.removed;
      selection["smoothed_window_samples"] = cfg.prep.smooth_training ? json(cfg.window_samples()) : json();
      write_json(fs::path(prep_out) / "selection.json", selection);
      out << "selected " << channels.size() << " channels; " << train.size() << " train / " << test.size()
          << " test rows in " << prep_out << "\n";
    };
  });

  // augment
  std::string aug_in, aug_out, aug_model;
  auto* augc = app.add_subcommand("augment", "Train the VAE on a dataset and append synthetic rows");
  augc->add_option("--in", aug_in, "Dataset CSV")->required()->check(CLI::ExistingFile);
  augc->add_option("--out", aug_out, "Real plus synthetic rows, with an origin column")->required();
  augc->add_option("--model-out", aug_model, "Also save the trained VAE as JSON");
  augc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      const auto data = csv::read_dataset(aug_in);
      const auto vae = augment::train_vae(data, cfg.augmentation.vae);
      const auto count = static_cast<std::size_t>(std::llround(cfg.augmentation.factor * static_cast<double>(data.size())));
      const auto synth = augment::generate_valid(vae, count, config::stage_seed(cfg.seed, "augment.generate"));
      if (fs::path(aug_out).has_parent_path()) fs::create_directories(fs::path(aug_out).parent_path());
      csv::write_dataset(aug_out, data.concat(synth), true);
      if (!aug_model.empty()) write_json(aug_model, vae);
      out << "vae loss " << format_double(vae.loss_history.front()) << " -> " << format_double(vae.loss_history.back())
          << "; " << synth.size() << " synthetic rows\n";
    };
  });

  // train
  std::string train_in, train_test, train_kind = "auto", train_out, train_scores;
  auto* trainc = app.add_subcommand("train", "Fit a healthy-behaviour regressor");
  trainc->add_option("--in", train_in, "Training dataset CSV")->required()->check(CLI::ExistingFile);
  trainc->add_option("--test", train_test, "Test dataset CSV (required for auto)")->check(CLI::ExistingFile);
  trainc->add_option("--model", train_kind, "Model kind; auto keeps the lowest aggregate test MSE")
      ->check(CLI::IsMember({"auto", "forest", "tree", "mlp"}))
      ->capture_default_str();
  trainc->add_option("--out", train_out, "Model JSON")->required();
  trainc->add_option("--scores", train_scores, "Write the MSE table as JSON");
  trainc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      const auto train = csv::read_dataset(train_in);
      std::optional<prep::Dataset> test;
      if (!train_test.empty()) test = csv::read_dataset(train_test);
      std::vector<models::ModelKind> kinds;
      if (train_kind == "auto") {
        if (!test) throw InvalidArgument("--model auto needs --test");
        kinds = models::all_kinds();
      } else {
        kinds = {models::model_kind_from_string(train_kind)};
      }
      eval::MseTable table;
      table.train_rows = train.size();
      table.test_rows = test ? test->size() : 0;
      std::vector<models::Regressor> fitted;
      std::vector<std::pair<models::ModelKind, double>> agg;
      for (auto kind : kinds) {
        auto m = models::fit(kind, train, cfg.models, exec_of(g));
        eval::ModelScores s;
        s.kind = kind;
        s.train = models::evaluate_mse(m, train, exec_of(g));
        if (test) {
          s.test = models::evaluate_mse(m, *test, exec_of(g));
          agg.emplace_back(kind, s.test.aggregate);
        }
        table.rows.push_back(s);
        fitted.push_back(std::move(m));
      }
      const auto chosen = kinds.size() == 1 ? kinds.front() : models::select_best(agg);
      for (const auto& m : fitted) {
        if (m.kind == chosen) write_json(train_out, m);
      }
      if (!train_scores.empty()) write_json(train_scores, json(table));
      print_table(out, table);
      out << "saved " << models::to_string(chosen) << " to " << train_out << "\n";
    };
  });

  // calibrate
  std::string cal_model, cal_in, cal_out;
  auto* calc = app.add_subcommand("calibrate", "Derive derivative thresholds from a healthy run");
  calc->add_option("--model", cal_model, "Model JSON")->required()->check(CLI::ExistingFile);
  calc->add_option("--in", cal_in, "Healthy telemetry CSV")->required()->check(CLI::ExistingFile);
  calc->add_option("--out", cal_out, "Threshold JSON")->required();
  calc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      const auto model = load_as<models::Regressor>(cal_model, "model");
      detect::CalibrationOptions opt;
      opt.window_samples = cfg.window_samples();
      opt.margin = cfg.detection.margin;
      opt.floor_v = cfg.detection.floor_v;
      opt.floor_a = cfg.detection.floor_a;
      opt.deviation_threshold = cfg.detection.deviation_threshold;
      opt.created = "config:" + cfg.digest();
      const auto th = detect::calibrate(model, csv::read_telemetry(cal_in), opt);
      write_json(cal_out, th);
      for (std::size_t c = 0; c < th.channels.size(); ++c) {
        out << th.channels[c] << " v " << format_double(th.v_threshold[c]) << " a " << format_double(th.a_threshold[c])
            << (th.degenerate[c] ? " (floored)" : "") << "\n";
      }
    };
  });

  // detect
  std::string det_model, det_th, det_in, det_report, det_traces;
  auto* detc = app.add_subcommand("detect", "Run the detector; exit 2 on a derivative alarm, 3 on deviation only");
  detc->add_option("--model", det_model, "Model JSON")->required()->check(CLI::ExistingFile);
  detc->add_option("--thresholds", det_th, "Threshold JSON")->required()->check(CLI::ExistingFile);
  detc->add_option("--in", det_in, "Telemetry CSV")->required()->check(CLI::ExistingFile);
  detc->add_option("--report", det_report, "Write the detection report JSON");
  detc->add_option("--traces", det_traces, "Write per-channel traces into this directory");
  detc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      const auto model = load_as<models::Regressor>(det_model, "model");
      const auto th = load_as<detect::ThresholdSet>(det_th, "threshold set");
      const auto run = detect::run_detector(model, csv::read_telemetry(det_in), th, cfg.detection.confirm_k);
      if (!det_report.empty()) write_json(det_report, run.report);
      if (!det_traces.empty()) detect::export_traces(run.state, run.report, det_traces);
      const auto& r = run.report;
      auto cell = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string("none"); };
      out << "derivative " << cell(r.combined) << " deviation " << cell(r.deviation);
      if (r.first_channel) out << " first channel " << *r.first_channel;
      out << "\n";
      if (r.derivative_alarm()) {
        out << r.action << "\n";
        code = kDerivativeAlarm;
      } else if (r.deviation_alarm()) {
        code = kDeviationAlarm;
      }
    };
  });

  // baseline
  std::string bl_healthy, bl_model, bl_in, bl_out, bl_model_out, bl_report;
  auto* blc = app.add_subcommand("baseline", "Train the one-class SVM and classify a run");
  blc->add_option("--healthy", bl_healthy, "Healthy training telemetry CSV (unsmoothed)")->required()->check(CLI::ExistingFile);
  blc->add_option("--model", bl_model, "Regressor JSON supplying the channel list")->required()->check(CLI::ExistingFile);
  blc->add_option("--in", bl_in, "Telemetry CSV to classify")->required()->check(CLI::ExistingFile);
  blc->add_option("--out", bl_out, "Per-sample CSV (t, decision_value, label)")->required();
  blc->add_option("--model-out", bl_model_out, "Also save the OC-SVM as JSON");
  blc->add_option("--detection-report", bl_report, "Compare against this detection report")->check(CLI::ExistingFile);
  blc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      const auto model = load_as<models::Regressor>(bl_model, "model");
      const auto rows = raw_training_rows(cfg, csv::read_telemetry(bl_healthy), model.channels);
      const auto svm = baseline::train_ocsvm(rows, model.channels, cfg.baseline, exec_of(g));
      const auto frames = csv::read_telemetry(bl_in);
      const auto outputs = baseline::classify_frames(svm, frames, exec_of(g));
      std::vector<double> t;
      for (const auto& f : frames.frames) t.push_back(f.t);
      if (fs::path(bl_out).has_parent_path()) fs::create_directories(fs::path(bl_out).parent_path());
      baseline::write_outputs(bl_out, t, outputs);
      if (!bl_model_out.empty()) write_json(bl_model_out, svm);
      const auto stable = baseline::stable_detection(std::span<const baseline::Classification>(outputs), cfg.baseline.k_stable);
      out << "ocsvm " << svm.alpha.size() << " support vectors; stable detection "
          << (stable ? std::to_string(*stable) : std::string("none")) << "\n";
      if (!bl_report.empty()) {
        const auto report = load_as<detect::DetectionReport>(bl_report, "detection report");
        out << json(baseline::compare_detection(outputs, report, cfg.baseline.k_stable)).dump() << "\n";
      }
    };
  });

  // experiment
  std::string exp_out = "runs";
  bool no_ablation = false;
  auto* expc = app.add_subcommand("experiment", "Run the whole pipeline and write a run directory");
  expc->add_option("--out", exp_out, "Root directory; the run goes to <root>/run-<digest>")->capture_default_str();
  expc->add_flag("--no-ablation", no_ablation, "Skip the training pass without synthetic rows");
  expc->callback([&] {
    action = [&] {
      const auto cfg = resolve_config(g, err);
      eval::RunOptions opt;
      opt.exec = exec_of(g);
      opt.ablation = !no_ablation;
      const auto bundle = eval::run_experiment(cfg, opt);
      const auto dir = eval::emit_report(bundle, exp_out);
      print_table(out, bundle.primary());
      out << "chosen " << models::to_string(bundle.chosen) << "\n";
      out << eval::lead_time_csv(eval::lead_time_table(std::span<const eval::ResultBundle>(&bundle, 1)), false);
      out << "run directory " << dir.string() << "\n";
    };
  });

  // report
  std::vector<std::string> rep_runs;
  std::string rep_out;
  auto* repc = app.add_subcommand("report", "Collect lead times from finished run directories");
  repc->add_option("runs", rep_runs, "Run directories or results.json files")->required();
  repc->add_option("--out", rep_out, "Write the combined lead-time CSV here");
  repc->callback([&] {
    action = [&] {
      std::vector<eval::LeadTimeRow> rows;
      for (const auto& r : rep_runs) {
        fs::path p = r;
        if (fs::is_directory(p)) p /= "results.json";
        const auto part = eval::lead_time_table(read_json(p));
        rows.insert(rows.end(), part.begin(), part.end());
      }
      const auto text = eval::lead_time_csv(rows, true);
      if (!rep_out.empty()) {
        if (fs::path(rep_out).has_parent_path()) fs::create_directories(fs::path(rep_out).parent_path());
        csv::write_text(rep_out, text);
      }
      out << text;
    };
  });

  // validate-config
  std::string val_path;
  auto* valc = app.add_subcommand("validate-config", "Check a config file; exit 0 iff it is valid");
  valc->add_option("path", val_path, "Config JSON")->required()->check(CLI::ExistingFile);
  valc->callback([&] {
    action = [&] {
      const auto diags = config::validate(read_json(val_path));
      for (const auto& d : diags) out << val_path << ": " << d.field << ": " << d.message << "\n";
      if (diags.empty()) {
        out << val_path << ": ok\n";
      } else {
        code = kError;
      }
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run 'ddetect --help' for usage\n";
    return kError;
  }
  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kError;
  }
  return code;
}

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace ddetect::cli
