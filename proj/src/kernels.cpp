#include "ddetect/kernels.hpp"

#include <cmath>

#include <omp.h>

namespace ddetect::kernels {

void for_each_index(std::size_t n, Exec exec, const std::function<void(std::size_t)>& fn) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

Matrix rbf_gram(const Matrix& a, const Matrix& b, double gamma, Exec exec) {
  if (a.cols() != b.cols()) throw InvalidArgument("rbf_gram: column mismatch");
  Matrix k(a.rows(), b.rows());
  for_each_index(a.rows(), exec, [&](std::size_t i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      double d2 = 0.0;
      for (std::size_t c = 0; c < ai.size(); ++c) {
        const double d = ai[c] - bj[c];
        d2 += d * d;
      }
      k(i, j) = std::exp(-gamma * d2);
    }
  });
  return k;
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace ddetect::kernels
