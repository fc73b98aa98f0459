#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "ddetect/baseline.hpp"
#include "ddetect/csv.hpp"

using namespace ddetect;
using namespace ddetect::baseline;

namespace {

Matrix gaussian_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) x(i, c) = g(rng);
  }
  return x;
}

Matrix brute_gram(const Matrix& x, double gamma) {
  Matrix k(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.rows(); ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) d2 += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      k(i, j) = std::exp(-gamma * d2);
    }
  }
  return k;
}

std::vector<Classification> labels_to_outputs(const std::vector<int>& labels) {
  std::vector<Classification> out;
  for (int l : labels) out.push_back({l, static_cast<double>(l)});
  return out;
}

}  // namespace

TEST_CASE("nu-property and KKT conditions on 2-D Gaussian data") {
  const auto x = gaussian_points(500, 2, 2024);
  OcsvmConfig cfg;
  cfg.nu = 0.05;
  const auto m = train_ocsvm(x, cfg, kernels::Exec::serial);

  std::size_t outliers = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (classify(m, x.row(i)).label < 0) ++outliers;
  }
  const double frac = static_cast<double>(outliers) / 500.0;
  CHECK(frac <= 0.05 + 0.02);
  CHECK(m.kkt_residual < 1e-6);

  // Conditions checked directly on the full dual solution with an
  // independently computed Gram matrix.
  const double gamma = m.gamma;
  CHECK(gamma == doctest::Approx(1.0 / (2.0 * variance(x.data()))));
  const Matrix K = brute_gram(x, gamma);
  const auto sol = solve_dual(K, 0.05, cfg.tolerance, cfg.max_iter);
  const double C = 1.0 / (0.05 * 500.0);
  double sum = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    const double a = sol.alpha[i];
    sum += a;
    CHECK(a >= 0.0);
    CHECK(a <= C + 1e-12);
    double g = 0.0;
    for (std::size_t j = 0; j < 500; ++j) g += K(i, j) * sol.alpha[j];
    const double r = g - sol.rho;
    if (a <= 1e-12) {
      worst = std::max(worst, std::max(0.0, -r));
    } else if (a >= C - 1e-12) {
      worst = std::max(worst, std::max(0.0, r));
    } else {
      worst = std::max(worst, std::abs(r));
    }
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
  CHECK(worst < 1e-6);
  // At least nu * m points sit at or beyond the boundary.
  const auto at_bound = std::count_if(sol.alpha.begin(), sol.alpha.end(), [](double a) { return a > 0.0; });
  CHECK(static_cast<double>(at_bound) >= 0.05 * 500.0 - 1e-9);
}

TEST_CASE("kkt residual flags violations") {
  const std::vector<double> alpha{0.5, 0.5};
  CHECK(kkt_residual(alpha, {1.0, 1.0}, 1.0, 1.0) == doctest::Approx(0.0));
  CHECK(kkt_residual(alpha, {1.2, 1.0}, 1.0, 1.0) >= 0.2 - 1e-12);
  CHECK(kkt_residual({0.7, 0.5}, {1.0, 1.0}, 1.0, 1.0) >= 0.2 - 1e-12);
}

TEST_CASE("two identical points are both healthy") {
  Matrix x(2, 2);
  x(0, 0) = x(1, 0) = 0.3;
  x(0, 1) = x(1, 1) = -1.1;
  for (double nu : {0.1, 0.5, 1.0}) {
    OcsvmConfig cfg;
    cfg.nu = nu;
    cfg.gamma = 0.7;
    const auto m = train_ocsvm(x, cfg);
    CHECK(classify(m, x.row(0)).label == 1);
    CHECK(classify(m, x.row(1)).label == 1);
  }
}

TEST_CASE("interior point is healthy and a distant point is faulty") {
  const auto x = gaussian_points(300, 2, 7);
  OcsvmConfig cfg;
  const auto m = train_ocsvm(x, cfg);
  const std::vector<double> centre{0.0, 0.0};
  CHECK(classify(m, centre).label == 1);
  const std::vector<double> far{100.0, -100.0};
  const auto c = classify(m, far);
  CHECK(c.label == -1);
  CHECK(c.value == doctest::Approx(-m.rho).epsilon(1e-12));
  CHECK(m.rho > 0.0);
}

TEST_CASE("training is deterministic and dual feasible") {
  const auto x = gaussian_points(200, 3, 9);
  OcsvmConfig cfg;
  cfg.nu = 0.2;
  const auto a = train_ocsvm(x, cfg, kernels::Exec::serial);
  const auto b = train_ocsvm(x, cfg, kernels::Exec::parallel);
  CHECK(a == b);
  const double C = 1.0 / (0.2 * 200.0);
  double sum = 0.0;
  for (double v : a.alpha) {
    CHECK(v > 0.0);
    CHECK(v <= C + 1e-12);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);
}

TEST_CASE("classification ignores support vector order") {
  const auto x = gaussian_points(150, 2, 13);
  OcsvmConfig cfg;
  cfg.nu = 0.3;
  const auto m = train_ocsvm(x, cfg);
  auto p = m;
  std::vector<std::size_t> order(m.alpha.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::reverse(order.begin(), order.end());
  p.support = m.support.take_rows(order);
  for (std::size_t i = 0; i < order.size(); ++i) p.alpha[i] = m.alpha[order[i]];
  const auto probes = gaussian_points(50, 2, 14);
  for (std::size_t i = 0; i < probes.rows(); ++i) {
    const auto u = classify(m, probes.row(i));
    const auto v = classify(p, probes.row(i));
    CHECK(u.label == v.label);
    CHECK(std::abs(u.value - v.value) < 1e-12);
  }
}

TEST_CASE("serial and parallel Gram matrices agree with brute force") {
  const auto a = gaussian_points(40, 3, 1);
  const auto b = gaussian_points(30, 3, 2);
  const auto s = kernels::rbf_gram(a, b, 0.4, kernels::Exec::serial);
  const auto p = kernels::rbf_gram(a, b, 0.4, kernels::Exec::parallel);
  REQUIRE(s.rows() == 40);
  REQUIRE(s.cols() == 30);
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t j = 0; j < 30; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 3; ++c) d2 += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
      CHECK(std::abs(s(i, j) - std::exp(-0.4 * d2)) < 1e-14);
      CHECK(s(i, j) == p(i, j));
    }
  }
}

TEST_CASE("training errors") {
  Matrix one(1, 2);
  CHECK_THROWS_AS(train_ocsvm(one, OcsvmConfig{}), InvalidArgument);
  const auto x = gaussian_points(10, 2, 1);
  OcsvmConfig cfg;
  cfg.nu = 0.0;
  CHECK_THROWS_AS(train_ocsvm(x, cfg), InvalidArgument);
  cfg.nu = 1.5;
  CHECK_THROWS_AS(train_ocsvm(x, cfg), InvalidArgument);
  OcsvmModel untrained;
  const std::vector<double> z{0.0, 0.0};
  CHECK_THROWS_AS(classify(untrained, z), InvalidArgument);
}

TEST_CASE("dataset training standardizes features and classifies frames") {
  sim::Telemetry t;
  t.channels = {"a", "b"};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < 600; ++i) {
    sim::Frame f;
    f.t = static_cast<double>(i);
    f.rpm = 1000 + 50 * g(rng);
    f.power = 400 + 20 * g(rng);
    f.values = {10 + g(rng), 70 + 3 * g(rng)};
    t.frames.push_back(f);
  }
  const auto d = prep::clean(t).dataset;
  OcsvmConfig cfg;
  cfg.max_train = 250;
  const auto m = train_ocsvm(d, {"b"}, cfg);
  CHECK(m.train_size == 250);
  CHECK(m.features == std::vector<std::string>{"rpm", "power", "b"});
  CHECK(m.scaler.columns[2].mean == doctest::Approx(70.0).epsilon(0.02));

  auto faulty = t;
  for (std::size_t i = 300; i < 600; ++i) faulty.frames[i].values[1] += 60.0;
  const auto out = classify_frames(m, faulty);
  REQUIRE(out.size() == 600);
  CHECK(stable_detection(out, 10) == std::optional<std::size_t>(300));
  const auto serial = classify_frames(m, faulty, kernels::Exec::serial);
  for (std::size_t i = 0; i < 600; ++i) CHECK(serial[i].value == out[i].value);

  CHECK(train_ocsvm(d, {"b"}, cfg) == m);
  cfg.seed = 99;
  CHECK_FALSE(train_ocsvm(d, {"b"}, cfg) == m);
}

TEST_CASE("stable detection scans for k consecutive faulty labels") {
  const std::vector<int> labels{-1, 1, -1, 1, -1, -1, -1, 1};
  CHECK(stable_detection(labels, 3) == std::optional<std::size_t>(4));
  CHECK(stable_detection(labels, 1) == std::optional<std::size_t>(0));
  CHECK_FALSE(stable_detection(labels, 4));
  CHECK_FALSE(stable_detection(std::vector<int>(20, 1), 1));
  CHECK_THROWS_AS(stable_detection(labels, 0), InvalidArgument);
}

TEST_CASE("comparison with the derivative report") {
  const auto outs = labels_to_outputs({-1, 1, -1, 1, -1, -1, -1, 1});
  detect::DetectionReport r;
  r.frames = 8;
  r.combined = 2;
  const auto c = compare_detection(outs, r, 3);
  CHECK(c.ocsvm_detection == std::optional<std::size_t>(4));
  CHECK(c.derivative_detection == std::optional<std::size_t>(2));
  CHECK(c.difference == std::optional<long long>(2));
  CHECK(c.oscillations_before == 3);
  CHECK(c.k_stable == 3);

  const auto healthy = labels_to_outputs(std::vector<int>(8, 1));
  const auto h = compare_detection(healthy, r, 3);
  CHECK_FALSE(h.ocsvm_detection);
  CHECK_FALSE(h.difference);
  CHECK(h.oscillations_before == 0);

  r.frames = 9;
  CHECK_THROWS_AS(compare_detection(outs, r, 3), InvalidArgument);
}

TEST_CASE("model JSON round trip and output CSV") {
  const auto x = gaussian_points(100, 2, 21);
  OcsvmConfig cfg;
  cfg.nu = 0.1;
  const auto m = train_ocsvm(x, cfg);
  nlohmann::json j = m;
  const auto back = j.get<OcsvmModel>();
  CHECK(back == m);
  nlohmann::json jc = cfg;
  CHECK(jc.get<OcsvmConfig>() == cfg);

  const auto outs = labels_to_outputs({1, -1, 1});
  const auto path = std::filesystem::temp_directory_path() / "ddetect_test_baseline_out.csv";
  write_outputs(path, {0.0, 1.0, 2.0}, outs);
  const auto text = csv::read_text(path);
  CHECK(text.rfind("t,decision_value,label\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 4);
  CHECK_THROWS_AS(write_outputs(path, {0.0}, outs), InvalidArgument);
  std::filesystem::remove(path);
}
