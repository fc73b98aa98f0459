#include "ddetect/split_stats.hpp"

#include <cmath>

#include "ddetect/common.hpp"

namespace ddetect {

namespace {

void check_distribution(std::span<const double> p) {
  if (p.empty()) throw InvalidArgument("empty distribution");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("probabilities must lie in [0, 1]");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("probabilities must sum to 1");
}

}  // namespace

double entropy(std::span<const double> p) {
  check_distribution(p);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

double gini(std::span<const double> p) {
  check_distribution(p);
  double s = 0.0;
  for (double v : p) s += v * v;
  return 1.0 - s;
}

}  // namespace ddetect
