#pragma once

#include <span>

namespace ddetect {

/// Shannon entropy in bits of a discrete distribution; 0·log 0 counts as 0.
/// Throws InvalidArgument unless the entries are in [0, 1] and sum to 1.
double entropy(std::span<const double> p);

/// Gini impurity 1 - Σ p².
double gini(std::span<const double> p);

}  // namespace ddetect
