#include <doctest.h>

#include <cmath>
#include <random>

#include "ddetect/common.hpp"
#include "ddetect/split_stats.hpp"

using namespace ddetect;

namespace {

double brute_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0) h -= x * std::log(x) / std::log(2.0);
  }
  return h;
}

double brute_gini(const std::vector<double>& p) {
  double g = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i != j) g += p[i] * p[j];
    }
  }
  return g;
}

}  // namespace

TEST_CASE("entropy and gini reference values") {
  CHECK(std::abs(entropy(std::vector<double>{0.25, 0.75}) - 0.811278) < 1e-6);
  CHECK(std::abs(gini(std::vector<double>{0.2, 0.3, 0.5}) - 0.62) < 1e-12);
  CHECK(entropy(std::vector<double>{1.0}) == 0.0);
  CHECK(gini(std::vector<double>{1.0}) == 0.0);
  CHECK(entropy(std::vector<double>{0.5, 0.5}) == doctest::Approx(1.0));
}

TEST_CASE("entropy and gini match brute-force sums") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + rng() % 6);
    double s = 0.0;
    for (auto& x : p) s += (x = u(rng));
    for (auto& x : p) x /= s;
    CHECK(std::abs(entropy(p) - brute_entropy(p)) < 1e-9);
    CHECK(std::abs(gini(p) - brute_gini(p)) < 1e-9);
  }
}

TEST_CASE("invalid distributions are rejected") {
  CHECK_THROWS_AS(entropy(std::vector<double>{0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(gini(std::vector<double>{-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(entropy(std::vector<double>{}), InvalidArgument);
}
