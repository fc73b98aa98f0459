#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "ddetect/csv.hpp"
#include "ddetect/detect.hpp"

using namespace ddetect;
using namespace ddetect::detect;

namespace {

struct Series {
  std::vector<double> t;
  Matrix y, y_hat;
};

// Two channels with multiplicative noise around a varying prediction. An
// optional relative step of `step` on channel 0 from sample `onset`.
Series noisy(std::size_t n, std::uint64_t seed, double step = 0.0, std::size_t onset = 0, double sigma = 0.005) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  Series s;
  s.y = Matrix(n, 2);
  s.y_hat = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    s.t.push_back(static_cast<double>(i));
    const double base0 = 80.0 + 5.0 * std::sin(static_cast<double>(i) / 200.0);
    const double base1 = 3.0 + 0.5 * std::cos(static_cast<double>(i) / 350.0);
    s.y_hat(i, 0) = base0;
    s.y_hat(i, 1) = base1;
    const double k = (step != 0.0 && i >= onset) ? step : 0.0;
    s.y(i, 0) = base0 * (1.0 + noise(rng)) * (1.0 + k);
    s.y(i, 1) = base1 * (1.0 + noise(rng));
  }
  return s;
}

ThresholdSet manual(double v, double a, std::size_t window, double dev = 0.05) {
  ThresholdSet th;
  th.channels = {"c0", "c1"};
  th.v_threshold = {v, v};
  th.a_threshold = {a, a};
  th.deviation_threshold = {dev, dev};
  th.degenerate = {false, false};
  th.window_samples = window;
  th.step_s = 1.0;
  th.profile_digest = "manual";
  th.created = "test";
  return th;
}

std::vector<std::string> chans() { return {"c0", "c1"}; }

Series prefix(const Series& s, std::size_t n) {
  Series p;
  p.t.assign(s.t.begin(), s.t.begin() + static_cast<long>(n));
  p.y = Matrix(n, s.y.cols());
  p.y_hat = Matrix(n, s.y.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < s.y.cols(); ++c) {
      p.y(i, c) = s.y(i, c);
      p.y_hat(i, c) = s.y_hat(i, c);
    }
  }
  return p;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ddetect_test_detect_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("deviation examples") {
  CHECK(deviation(3.5, 3.5) == 0.0);
  CHECK(deviation(1.05, 1.0) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(deviation(0.9, 1.2) == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(std::isnan(deviation(1.0, 0.0)));
  CHECK(std::isnan(deviation(1.0, 1e-12)));
  CHECK(std::isnan(deviation(1.0, 0.5, 1.0)));
  CHECK(deviation(1.0, -2.0) == doctest::Approx(-1.5));
}

TEST_CASE("derivative examples") {
  const std::vector<double> flat(10, 4.2);
  for (double v : derivative(flat, 0.5)) CHECK(v == 0.0);

  const std::vector<double> e{0.0, 0.1, 0.2};
  const auto v = derivative(e, 1.0);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(v[1] == doctest::Approx(0.1).epsilon(1e-14));
  const auto a = derivative(v, 1.0);
  REQUIRE(a.size() == 1);
  CHECK(std::abs(a[0]) < 1e-15);

  for (double dt : {0.01, 0.25, 1.0, 7.0}) {
    const double slope = -3.3;
    std::vector<double> ramp;
    for (int i = 0; i < 50; ++i) ramp.push_back(slope * dt * i + 2.0);
    const auto rv = derivative(ramp, dt);
    for (double x : rv) CHECK(std::abs(x - slope) < 1e-12);
    for (double x : derivative(rv, dt)) CHECK(std::abs(x) < 1e-9 / dt);
  }

  CHECK_THROWS_AS(derivative(std::vector<double>{1.0}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(derivative(std::vector<double>{}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(derivative(std::vector<double>{1.0, 2.0}, 0.0), InvalidArgument);
  CHECK_THROWS_AS(derivative(std::vector<double>{1.0, 2.0}, -1.0), InvalidArgument);
}

TEST_CASE("derivative is linear") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s1(40), s2(40), mix(40);
    const double al = n(rng), be = n(rng), dt = 0.1 + std::abs(n(rng));
    for (std::size_t i = 0; i < 40; ++i) {
      s1[i] = n(rng);
      s2[i] = n(rng);
      mix[i] = al * s1[i] + be * s2[i];
    }
    const auto d1 = derivative(s1, dt), d2 = derivative(s2, dt), dm = derivative(mix, dt);
    for (std::size_t i = 0; i < dm.size(); ++i) CHECK(std::abs(dm[i] - (al * d1[i] + be * d2[i])) < 1e-12);
  }
}

TEST_CASE("state matches an independent recomputation") {
  const std::size_t W = 25;
  const auto s = noisy(400, 11, 0.1, 200);
  const auto st = compute_state(chans(), s.t, s.y, s.y_hat, W, 1.0);
  REQUIRE(st.v.rows() == 399);
  REQUIRE(st.a.rows() == 398);
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> e(400), es(400, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < 400; ++i) e[i] = (s.y(i, c) - s.y_hat(i, c)) / s.y_hat(i, c);
    for (std::size_t i = W - 1; i < 400; ++i) {
      double sum = 0.0;
      for (std::size_t k = i + 1 - W; k <= i; ++k) sum += e[k];
      es[i] = sum / static_cast<double>(W);
    }
    for (std::size_t i = 0; i < 400; ++i) {
      CHECK(std::abs(st.e(i, c) - e[i]) < 1e-15);
      if (i + 1 < W) {
        CHECK_FALSE(st.e_valid(i, c));
      } else {
        CHECK(std::abs(st.e_smooth(i, c) - es[i]) < 1e-12);
      }
    }
    for (std::size_t j = 0; j < 399; ++j) {
      if (j + 1 < W) {
        CHECK_FALSE(st.v_valid(j, c));
      } else {
        CHECK(std::abs(st.v(j, c) - (es[j + 1] - es[j])) < 1e-12);
      }
    }
    for (std::size_t j = 0; j < 398; ++j) {
      if (j + 1 < W) {
        CHECK_FALSE(st.a_valid(j, c));
      } else {
        const double expect = (es[j + 2] - es[j + 1]) - (es[j + 1] - es[j]);
        CHECK(std::abs(st.a(j, c) - expect) < 1e-12);
      }
    }
  }
}

TEST_CASE("calibration recomputed by brute force and replayed without alarms") {
  const auto s = noisy(3000, 21);
  const auto st = compute_state(chans(), s.t, s.y, s.y_hat, 30, 1.0);
  CalibrationOptions opt;
  opt.window_samples = 30;
  const auto th = calibrate_state(st, opt, "digest");
  th.validate();
  for (std::size_t c = 0; c < 2; ++c) {
    double vmax = 0.0, amax = 0.0;
    for (std::size_t j = 0; j < st.v.rows(); ++j) {
      if (std::isfinite(st.v(j, c))) vmax = std::max(vmax, std::abs(st.v(j, c)));
    }
    for (std::size_t j = 0; j < st.a.rows(); ++j) {
      if (std::isfinite(st.a(j, c))) amax = std::max(amax, std::abs(st.a(j, c)));
    }
    CHECK(th.v_threshold[c] == vmax);
    CHECK(th.a_threshold[c] == amax);
    CHECK_FALSE(th.degenerate[c]);
  }
  const auto run = run_series(s.t, s.y, s.y_hat, th);
  CHECK_FALSE(run.report.combined);
  CHECK_FALSE(run.report.first_derivative);
  CHECK_FALSE(run.report.second_derivative);
  CHECK_FALSE(run.report.deviation);

  opt.margin = 2.0;
  const auto th2 = calibrate_state(st, opt, "digest");
  for (std::size_t c = 0; c < 2; ++c) CHECK(th2.v_threshold[c] == 2.0 * th.v_threshold[c]);
}

TEST_CASE("perfect prediction yields floored degenerate thresholds") {
  auto s = noisy(200, 3);
  s.y = s.y_hat;
  const auto st = compute_state(chans(), s.t, s.y, s.y_hat, 10, 1.0);
  CalibrationOptions opt;
  opt.window_samples = 10;
  const auto th = calibrate_state(st, opt, "d");
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(th.degenerate[c]);
    CHECK(th.v_threshold[c] == opt.floor_v);
    CHECK(th.a_threshold[c] == opt.floor_a);
  }
  CHECK_NOTHROW(th.validate());
  CHECK_FALSE(run_series(s.t, s.y, s.y_hat, th).report.combined);
}

TEST_CASE("calibration errors") {
  auto s = noisy(100, 4);
  for (std::size_t i = 0; i < 100; ++i) s.y_hat(i, 1) = 0.0;
  const auto st = compute_state(chans(), s.t, s.y, s.y_hat, 10, 1.0);
  CalibrationOptions opt;
  opt.window_samples = 10;
  CHECK_THROWS_AS(calibrate_state(st, opt, "d"), Error);

  const auto ok = compute_state(chans(), noisy(100, 4).t, noisy(100, 4).y, noisy(100, 4).y_hat, 10, 1.0);
  opt.margin = 0.0;
  CHECK_THROWS_AS(calibrate_state(ok, opt, "d"), InvalidArgument);
  opt.margin = 1.0;
  opt.floor_v = 0.0;
  CHECK_THROWS_AS(calibrate_state(ok, opt, "d"), InvalidArgument);

  // Too short for any full-window derivative.
  const auto shortrun = noisy(10, 4);
  const auto st2 = compute_state(chans(), shortrun.t, shortrun.y, shortrun.y_hat, 10, 1.0);
  opt.floor_v = 1e-6;
  CHECK_THROWS_AS(calibrate_state(st2, opt, "d"), Error);
}

TEST_CASE("step fault: derivative alarm near onset and no later than deviation") {
  const auto healthy = noisy(6000, 31);
  CalibrationOptions opt;
  opt.window_samples = 300;
  opt.margin = 1.5;
  const auto th = calibrate_state(compute_state(chans(), healthy.t, healthy.y, healthy.y_hat, 300, 1.0), opt, "d");

  const auto faulty = noisy(6000, 32, 0.2, 5000);
  const auto r = run_series(faulty.t, faulty.y, faulty.y_hat, th).report;
  REQUIRE(r.combined);
  REQUIRE(r.deviation);
  CHECK(*r.combined >= 5000);
  CHECK(*r.combined <= 5005);
  CHECK(*r.combined <= *r.deviation);
  REQUIRE(r.lead_time_samples);
  CHECK(*r.lead_time_samples >= 0);
  CHECK(*r.lead_time_samples == static_cast<long long>(*r.deviation - *r.combined));
  CHECK(r.first_channel == std::optional<std::string>("c0"));
  CHECK_FALSE(r.channels[1].combined);
  CHECK(r.action == std::string(kAlarmAction));
  CHECK(r.frames == 6000);
}

TEST_CASE("a slow drift below 5% with a kink fires only the derivative rule") {
  const std::size_t n = 3000;
  Series s;
  s.y = Matrix(n, 2);
  s.y_hat = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    s.t.push_back(static_cast<double>(i));
    double e = 0.0;
    if (i <= 2000) {
      e = 1e-5 * static_cast<double>(i);
    } else if (i <= 2020) {
      e = 0.02 + 1e-3 * static_cast<double>(i - 2000);
    } else {
      e = 0.04;
    }
    s.y_hat(i, 0) = s.y_hat(i, 1) = 10.0;
    s.y(i, 0) = 10.0 * (1.0 + e);
    s.y(i, 1) = 10.0;
  }
  const auto r = run_series(s.t, s.y, s.y_hat, manual(2e-5, 1.0, 1)).report;
  CHECK_FALSE(r.deviation);
  REQUIRE(r.first_derivative);
  // v over [2000, 2001] is first known at sample 2001.
  CHECK(*r.first_derivative == 2001);
  CHECK(*r.combined == 2001);
  CHECK_FALSE(r.lead_time_samples);
}

TEST_CASE("combined is the minimum of the derivative rules and margins are monotone") {
  const auto healthy = noisy(4000, 41);
  const auto st = compute_state(chans(), healthy.t, healthy.y, healthy.y_hat, 100, 1.0);
  for (std::uint64_t seed = 50; seed < 55; ++seed) {
    const auto f = noisy(4000, seed, 0.03 + 0.01 * static_cast<double>(seed - 50), 2500);
    std::optional<std::size_t> prev;
    for (double margin : {1.0, 1.5, 3.0, 10.0, 100.0}) {
      CalibrationOptions opt;
      opt.window_samples = 100;
      opt.margin = margin;
      const auto r = run_series(f.t, f.y, f.y_hat, calibrate_state(st, opt, "d")).report;
      for (const auto& ch : r.channels) {
        if (ch.first_derivative) CHECK(*ch.combined <= *ch.first_derivative);
        if (ch.second_derivative) CHECK(*ch.combined <= *ch.second_derivative);
        std::optional<std::size_t> lo = ch.first_derivative;
        if (ch.second_derivative && (!lo || *ch.second_derivative < *lo)) lo = ch.second_derivative;
        CHECK(ch.combined == lo);
      }
      if (prev) CHECK((!r.combined || *r.combined >= *prev));
      prev = r.combined;
      if (!prev) break;
    }
  }
}

TEST_CASE("truncating the input never changes earlier decisions") {
  const auto f = noisy(3000, 61, 0.15, 2000);
  const auto th = manual(5e-5, 5e-5, 50);
  const auto full = run_series(f.t, f.y, f.y_hat, th).report;
  REQUIRE(full.combined);
  for (std::size_t cut : {100, 1999, 2000, 2001, 2003, 2050, 2500}) {
    const auto p = prefix(f, cut);
    const auto r = run_series(p.t, p.y, p.y_hat, th).report;
    auto same = [&](const std::optional<std::size_t>& full_slot, const std::optional<std::size_t>& cut_slot) {
      if (full_slot && *full_slot < cut) {
        CHECK(cut_slot == full_slot);
      } else {
        CHECK_FALSE(cut_slot);
      }
    };
    same(full.combined, r.combined);
    same(full.deviation, r.deviation);
    same(full.first_derivative, r.first_derivative);
    same(full.second_derivative, r.second_derivative);
    for (std::size_t c = 0; c < 2; ++c) same(full.channels[c].combined, r.channels[c].combined);
  }
}

TEST_CASE("scaling y and prediction together leaves alarms unchanged") {
  const auto f = noisy(3000, 71, 0.15, 2000);
  const auto th = manual(5e-5, 5e-5, 50);
  const auto base = run_series(f.t, f.y, f.y_hat, th);
  for (double k : {4.0, 3.7, 0.013, 250.0}) {
    Series g = f;
    for (std::size_t i = 0; i < 3000; ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        g.y(i, c) *= k;
        g.y_hat(i, c) *= k;
      }
    }
    const auto run = run_series(g.t, g.y, g.y_hat, th);
    CHECK(run.report == base.report);
    for (std::size_t i = 0; i < 3000; ++i) {
      for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(run.state.e(i, c) - base.state.e(i, c)) < 1e-12);
    }
  }
}

TEST_CASE("the streaming detector agrees with the batch run") {
  const auto f = noisy(1500, 81, 0.1, 1000);
  const auto th = manual(1e-4, 1e-4, 20);
  StreamDetector det(th);
  std::optional<std::size_t> first_alarm;
  for (std::size_t i = 0; i < 1500; ++i) {
    const auto& out = det.push(f.y.row(i), f.y_hat.row(i));
    if (out.derivative_alarm && !first_alarm) first_alarm = i;
    if (i + 1 < 20) CHECK(std::isnan(out.e_smooth[0]));
    if (i < 20) CHECK(std::isnan(out.v[0]));
  }
  const auto batch = run_series(f.t, f.y, f.y_hat, th).report;
  CHECK(det.report() == batch);
  CHECK(det.samples() == 1500);
  CHECK(first_alarm == batch.combined);

  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(det.push(one, one), InvalidArgument);
  CHECK_THROWS_AS(StreamDetector(th, 0), InvalidArgument);
}

TEST_CASE("confirmation requires k consecutive exceedances") {
  // A single-sample spike on channel 0, then a sustained offset.
  const std::size_t n = 60;
  Series s;
  s.y = Matrix(n, 2);
  s.y_hat = Matrix(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    s.t.push_back(static_cast<double>(i));
    s.y_hat(i, 0) = s.y_hat(i, 1) = 1.0;
    s.y(i, 1) = 1.0;
    s.y(i, 0) = 1.0 + (i == 10 ? 0.1 : 0.0) + (i >= 30 ? 0.1 : 0.0);
  }
  const auto th = manual(1.0, 1.0, 1, 0.05);
  const auto r1 = run_series(s.t, s.y, s.y_hat, th, 1).report;
  CHECK(r1.deviation == std::optional<std::size_t>(10));
  const auto r3 = run_series(s.t, s.y, s.y_hat, th, 3).report;
  CHECK(r3.deviation == std::optional<std::size_t>(32));
  CHECK(r3.confirm_k == 3);
}

TEST_CASE("threshold set JSON round trip and validation") {
  auto th = manual(1e-3, 2e-4, 300);
  th.degenerate = {true, false};
  th.margin = 1.5;
  nlohmann::json j = th;
  ThresholdSet back = j.get<ThresholdSet>();
  CHECK(back == th);
  CHECK(nlohmann::json(back).dump() == j.dump());
  CHECK(th.index("c1") == 1);
  CHECK_THROWS_AS(th.index("nope"), InvalidArgument);

  auto bad = th;
  bad.v_threshold[0] = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = th;
  bad.profile_digest.clear();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = th;
  bad.a_threshold.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  nlohmann::json extra = j;
  extra["surprise"] = 1;
  CHECK_THROWS(extra.get<ThresholdSet>());
}

TEST_CASE("detection report JSON round trip") {
  const auto f = noisy(3000, 91, 0.15, 2000);
  const auto r = run_series(f.t, f.y, f.y_hat, manual(5e-5, 5e-5, 50)).report;
  nlohmann::json j = r;
  CHECK(j.get<DetectionReport>() == r);
  DetectionReport empty;
  nlohmann::json je = empty;
  CHECK(je.at("detection").at("combined").is_null());
  CHECK(je.at("action").is_null());
  CHECK(je.get<DetectionReport>() == empty);
}

TEST_CASE("exported traces") {
  const auto f = noisy(500, 101);
  const auto run = run_series(f.t, f.y, f.y_hat, manual(1.0, 1.0, 20));
  REQUIRE_FALSE(run.report.combined);
  const auto dir = scratch("traces");
  export_traces(run.state, run.report, dir);
  CHECK(line_count(dir / "trace_c0.csv") == 501);
  CHECK(line_count(dir / "trace_c1.csv") == 501);
  const auto rep = nlohmann::json::parse(csv::read_text(dir / "detection_report.json"));
  CHECK(rep.at("detection").at("combined").is_null());
  CHECK(rep.at("detection").at("deviation_5pct").is_null());
  CHECK(rep.at("channels").at(0).at("first_derivative").is_null());

  const auto first = csv::read_text(dir / "trace_c0.csv");
  const auto first_report = csv::read_text(dir / "detection_report.json");
  export_traces(run.state, run.report, dir);
  CHECK(csv::read_text(dir / "trace_c0.csv") == first);
  CHECK(csv::read_text(dir / "detection_report.json") == first_report);

  // The e column agrees with y and y_hat.
  std::istringstream in(first);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,y,y_hat,e,e_smooth,v,a");
  double worst = 0.0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto cells = csv::split_line(line);
    REQUIRE(cells.size() == 7);
    const double y = std::stod(cells[1]), yh = std::stod(cells[2]), e = std::stod(cells[3]);
    worst = std::max(worst, std::abs(e - (y - yh) / yh));
    ++rows;
  }
  CHECK(rows == 500);
  CHECK(worst < 1e-12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("model-driven calibration and detection") {
  // A memorising tree predicts its own training frames exactly.
  sim::Telemetry t;
  t.channels = {"c0", "c1"};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < 400; ++i) {
    sim::Frame f;
    f.t = static_cast<double>(i);
    f.rpm = 600 + 900 * u(rng);
    f.power = 100 + 1900 * u(rng);
    f.values = {20 + f.rpm / 100, 5 + f.power / 1000};
    t.frames.push_back(f);
  }
  models::RegressorConfig cfg;
  const auto model = models::fit(models::ModelKind::tree, prep::clean(t).dataset, cfg);
  CalibrationOptions opt;
  opt.window_samples = 10;
  const auto th = calibrate(model, t, opt);
  CHECK(th.degenerate[0]);
  CHECK(th.profile_digest == t.digest());
  CHECK_FALSE(run_detector(model, t, th).report.combined);

  auto shifted = t;
  for (std::size_t i = 300; i < 400; ++i) shifted.frames[i].values[1] *= 1.2;
  const auto r = run_detector(model, shifted, th).report;
  REQUIRE(r.combined);
  CHECK(*r.combined == 300);
  CHECK(r.first_channel == std::optional<std::string>("c1"));

  auto missing = t.project({"c0"});
  CHECK_THROWS_AS(run_detector(model, missing, th), InvalidArgument);
  auto other_step = t;
  other_step.step_s = 2.0;
  CHECK_THROWS_AS(run_detector(model, other_step, th), InvalidArgument);
  sim::Telemetry empty;
  empty.channels = t.channels;
  CHECK_THROWS_AS(calibrate(model, empty, opt), InvalidArgument);
}
