#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ddetect/common.hpp"

using namespace ddetect;

TEST_CASE("FNV-1a matches the published 64-bit test vectors") {
  Fnv1a empty;
  CHECK(empty.value() == 0xcbf29ce484222325ULL);
  Fnv1a a;
  a.update(std::string_view("a"));
  CHECK(a.value() == 0xaf63dc4c8601ec8cULL);
  Fnv1a foobar;
  foobar.update(std::string_view("foobar"));
  CHECK(foobar.value() == 0x85944171f73967e8ULL);
  CHECK(foobar.hex() == "85944171f73967e8");
}

TEST_CASE("derived seeds are deterministic and separate stages") {
  CHECK(derive_seed(7, "sim.training") == derive_seed(7, "sim.training"));
  CHECK(derive_seed(7, "sim.training") != derive_seed(7, "sim.detection"));
  CHECK(derive_seed(7, "sim.training") != derive_seed(8, "sim.training"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 1000);
}

TEST_CASE("format_double round-trips exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(300.0) == "300");
}

TEST_CASE("population moments") {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(mean(v) == doctest::Approx(5.0));
  CHECK(variance(v) == doctest::Approx(4.0));
  CHECK(stddev(v) == doctest::Approx(2.0));
}

TEST_CASE("matrix rows and columns") {
  Matrix m;
  m.push_row(std::vector<double>{1, 2});
  m.push_row(std::vector<double>{3, 4});
  m.push_row(std::vector<double>{5, 6});
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  CHECK(m.column(1) == std::vector<double>{2, 4, 6});
  const std::vector<std::size_t> pick{2, 0};
  const auto t = m.take_rows(pick);
  CHECK(t(0, 0) == 5);
  CHECK(t(1, 1) == 2);
  CHECK_THROWS_AS(m.push_row(std::vector<double>{1}), InvalidArgument);
}
