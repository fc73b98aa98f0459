#pragma once

// Hot loops with an OpenMP path and a serial reference path. Both paths
// produce bit-identical results: work items are independent and every
// reduction happens in a fixed order inside one item.

#include <cstddef>
#include <functional>

#include "ddetect/common.hpp"

namespace ddetect::kernels {

enum class Exec { serial, parallel };

/// Calls fn(i) for i in [0, n). The parallel path uses dynamic scheduling.
void for_each_index(std::size_t n, Exec exec, const std::function<void(std::size_t)>& fn);

/// K(i, j) = exp(-gamma * ||a_i - b_j||²).
Matrix rbf_gram(const Matrix& a, const Matrix& b, double gamma, Exec exec);

/// Number of threads the parallel path would use.
int max_threads();

}  // namespace ddetect::kernels
