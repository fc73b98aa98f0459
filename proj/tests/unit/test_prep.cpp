#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "ddetect/prep.hpp"

using namespace ddetect;
using namespace ddetect::prep;

namespace {

sim::Telemetry make_run(std::size_t n, std::uint64_t seed, std::vector<std::string> channels = {"a", "b", "c"}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  sim::Telemetry t;
  t.channels = channels;
  for (std::size_t i = 0; i < n; ++i) {
    sim::Frame f;
    f.t = static_cast<double>(i);
    f.rpm = 1000.0 + static_cast<double>(i % 50);
    f.power = 500.0 + static_cast<double>(i % 30);
    for (std::size_t c = 0; c < channels.size(); ++c) f.values.push_back(10.0 * static_cast<double>(c + 1) + noise(rng));
    t.frames.push_back(f);
  }
  return t;
}

std::vector<double> brute_ma(const std::vector<double>& x, std::size_t w) {
  std::vector<double> out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = i + 1 >= w ? i + 1 - w : 0;
    double s = 0.0;
    for (std::size_t k = lo; k <= i; ++k) s += x[k];
    out.push_back(s / static_cast<double>(i - lo + 1));
  }
  return out;
}

}  // namespace

TEST_CASE("clean drops rows with negative values") {
  auto t = make_run(100, 1);
  for (std::size_t i : {3u, 40u, 77u}) t.frames[i].values[1] = -1.0;
  const auto r = clean(t);
  CHECK(r.dataset.size() == 97);
  CHECK(r.removed == 3);
}

TEST_CASE("clean is the identity on valid data") {
  const auto t = make_run(50, 2);
  const auto r = clean(t);
  CHECK(r.removed == 0);
  REQUIRE(r.dataset.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(r.dataset.X(i, 0) == t.frames[i].rpm);
    CHECK(r.dataset.Y(i, 2) == t.frames[i].values[2]);
    CHECK(r.dataset.row_ids[i] == i);
  }
}

TEST_CASE("clean removes infinities and is idempotent") {
  auto t = make_run(60, 3);
  t.frames[5].values[0] = std::numeric_limits<double>::infinity();
  t.frames[9].rpm = std::numeric_limits<double>::quiet_NaN();
  const auto once = clean(t);
  CHECK(once.removed == 2);
  const auto twice = clean(once.dataset);
  CHECK(twice.removed == 0);
  CHECK(twice.dataset.X == once.dataset.X);
  CHECK(twice.dataset.Y == once.dataset.Y);
}

TEST_CASE("clean fails when every row is invalid") {
  auto t = make_run(5, 4);
  for (auto& f : t.frames) f.power = -1.0;
  CHECK_THROWS_AS(clean(t), Error);
}

TEST_CASE("standardize examples") {
  ColumnStats s{10.0, 2.0, 0.0, 1.0};
  const std::vector<double> x{10.0, 14.0};
  const auto z = standardize(x, s);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 2.0);
  ColumnStats zero{1.0, 0.0, 0.0, 1.0};
  CHECK_THROWS_AS(standardize(x, zero), InvalidArgument);
}

TEST_CASE("standardizing with own statistics gives zero mean, unit deviation") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(40.0, 7.0);
  Matrix m;
  for (int i = 0; i < 5000; ++i) m.push_row(std::vector<double>{d(rng)});
  const auto p = ScalerParams::fit(m, {"x"});
  const auto z = standardize(m.column(0), p.columns[0]);
  double s = 0.0, ss = 0.0;
  for (double v : z) s += v;
  const double mu = s / static_cast<double>(z.size());
  for (double v : z) ss += (v - mu) * (v - mu);
  CHECK(std::abs(mu) < 1e-9);
  CHECK(std::abs(std::sqrt(ss / static_cast<double>(z.size())) - 1.0) < 1e-9);
  const auto back = destandardize(z, p.columns[0]);
  const auto orig = m.column(0);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back[i] - orig[i]) < 1e-9);
}

TEST_CASE("normalize examples and round trip") {
  ColumnStats s{0.0, 1.0, 0.0, 200.0};
  const std::vector<double> x{0.0, 200.0, 50.0};
  const auto n = normalize(x, s);
  CHECK(n[0] == 0.0);
  CHECK(n[1] == 1.0);
  CHECK(n[2] == 0.25);
  ColumnStats flat{0.0, 1.0, 3.0, 3.0};
  CHECK_THROWS_AS(normalize(x, flat), InvalidArgument);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-50.0, 300.0);
  std::vector<double> col(1000);
  for (auto& v : col) v = u(rng);
  ColumnStats r{0.0, 1.0, *std::min_element(col.begin(), col.end()), *std::max_element(col.begin(), col.end())};
  const auto back = denormalize(normalize(col, r), r);
  double worst = 0.0;
  for (std::size_t i = 0; i < col.size(); ++i) worst = std::max(worst, std::abs(back[i] - col[i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("moving average examples") {
  CHECK(moving_average(std::vector<double>{1, 2, 3, 4}, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  const std::vector<double> c(40, 3.25);
  for (double v : moving_average(c, 7)) CHECK(v == 3.25);
  const std::vector<double> x{4, -1, 9, 2.5};
  CHECK(moving_average(x, 1) == x);
  CHECK_THROWS_AS(moving_average(x, 0), InvalidArgument);
}

TEST_CASE("streaming moving average matches brute-force windowed means") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> d(100.0, 30.0);
  std::vector<double> x(20000);
  for (auto& v : x) v = d(rng);
  for (std::size_t w : {1u, 2u, 17u, 300u}) {
    const auto fast = moving_average(x, w);
    const auto slow = brute_ma(x, w);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("moving average preserves the mean of a long stationary series") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d(5.0, 1.0);
  std::vector<double> x(100000);
  for (auto& v : x) v = d(rng);
  const auto y = moving_average(x, 300);
  CHECK(std::abs(mean(y) - mean(x)) < 0.01);
}

TEST_CASE("window conversion from seconds") {
  CHECK(window_samples(300.0, 1.0) == 300);
  CHECK(window_samples(300.0, 0.5) == 600);
  CHECK_THROWS_WITH_AS(window_samples(300.0, 7.0), doctest::Contains("42.857"), InvalidArgument);
}

TEST_CASE("smooth applies the trailing mean to every column") {
  const auto t = make_run(500, 9);
  const auto s = smooth(t, 25);
  std::vector<double> rpm, ch;
  for (const auto& f : t.frames) {
    rpm.push_back(f.rpm);
    ch.push_back(f.values[1]);
  }
  const auto r = brute_ma(rpm, 25), c = brute_ma(ch, 25);
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    CHECK(s.frames[i].t == t.frames[i].t);
    CHECK(std::abs(s.frames[i].rpm - r[i]) < 1e-9);
    CHECK(std::abs(s.frames[i].values[1] - c[i]) < 1e-9);
  }
}

TEST_CASE("ranking identical runs gives zero deviations in name order") {
  const auto d = clean(make_run(200, 10, {"c", "a", "b"})).dataset;
  const auto r = rank_variables(d, d);
  REQUIRE(r.size() == 3);
  CHECK(r[0].channel == "a");
  CHECK(r[1].channel == "b");
  CHECK(r[2].channel == "c");
  for (const auto& x : r) CHECK(x.deviation_pct == 0.0);
}

TEST_CASE("a shifted channel ranks first with its shift") {
  const auto healthy_run = make_run(2000, 11);
  auto faulty_run = make_run(2000, 12);
  for (auto& f : faulty_run.frames) f.values[1] *= 1.10;
  const auto r = rank_variables(clean(healthy_run).dataset, clean(faulty_run).dataset);
  CHECK(r[0].channel == "b");
  CHECK(r[0].deviation_pct == doctest::Approx(10.0).epsilon(0.05));
  std::vector<std::string> names;
  for (const auto& x : r) {
    names.push_back(x.channel);
    CHECK(x.deviation_pct >= 0.0);
  }
  std::sort(names.begin(), names.end());
  CHECK(names == std::vector<std::string>{"a", "b", "c"});
  CHECK(select_channels(r, 8, 2.0) == std::vector<std::string>{"b"});
  CHECK(select_channels(r, 8, 0.0).size() == 3);
  CHECK(select_channels(r, 2, 0.0).size() == 2);
}

TEST_CASE("zero healthy mean marks a channel unselectable") {
  auto h = make_run(100, 13);
  auto f = make_run(100, 14);
  for (auto& fr : h.frames) fr.values[0] = 0.0;
  const auto r = rank_variables(clean(h).dataset, clean(f).dataset);
  bool found = false;
  for (const auto& x : r) {
    if (x.channel == "a") {
      found = true;
      CHECK_FALSE(x.selectable);
    }
  }
  CHECK(found);
  for (const auto& name : select_channels(r, 8, 0.0)) CHECK(name != "a");
}

TEST_CASE("split sizes, determinism and partition property") {
  const auto d = clean(make_run(100, 15)).dataset;
  const auto [tr, te] = split(d, 0.75, 99);
  CHECK(tr.size() == 75);
  CHECK(te.size() == 25);
  const auto [tr2, te2] = split(d, 0.75, 99);
  CHECK(tr.row_ids == tr2.row_ids);
  CHECK(te.row_ids == te2.row_ids);
  std::vector<std::size_t> all = tr.row_ids;
  all.insert(all.end(), te.row_ids.begin(), te.row_ids.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);
  const auto odd = split(clean(make_run(101, 15)).dataset, 0.75, 1);
  CHECK(odd.first.size() == 76);
}

TEST_CASE("split statistics come from the training partition only") {
  const auto d = clean(make_run(400, 16)).dataset;
  const auto [tr, te] = split(d, 0.75, 3);
  const auto x = ScalerParams::fit(tr.X, Dataset::input_names());
  const auto y = ScalerParams::fit(tr.Y, tr.channels);
  CHECK(tr.x_stats == x);
  CHECK(tr.y_stats == y);
  CHECK(te.x_stats == x);
  CHECK(te.y_stats == y);
}

TEST_CASE("split rejects bad fractions and tiny data") {
  const auto d = clean(make_run(10, 17)).dataset;
  CHECK_THROWS_AS(split(d, 1.0, 1), InvalidArgument);
  CHECK_THROWS_AS(split(d, 0.0, 1), InvalidArgument);
  const auto one = clean(make_run(1, 17)).dataset;
  CHECK_THROWS_AS(split(one, 0.75, 1), InvalidArgument);
}

TEST_CASE("chronological split keeps time order") {
  const auto d = clean(make_run(40, 18)).dataset;
  const auto [tr, te] = split(d, 0.75, 1, SplitMode::chronological);
  CHECK(tr.row_ids.back() == 29);
  CHECK(te.row_ids.front() == 30);
}
