#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/kernels.hpp"
#include "ddetect/tree.hpp"

namespace ddetect::forest {

struct ForestConfig {
  std::size_t n_trees = 100;
  tree::TreeConfig tree{2, 1, 0, 1, 0};
  bool bootstrap = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

/// Bagged regression trees; the prediction is the mean of the members.
class Forest {
 public:
  /// Member t is grown on its own bootstrap sample with seed derive_seed(seed, t),
  /// so the result does not depend on `exec`.
  static Forest fit(const Matrix& X, const Matrix& Y, const ForestConfig& config,
                    kernels::Exec exec = kernels::Exec::parallel);

  void predict_into(std::span<const double> x, std::span<double> out) const;
  std::vector<double> predict(std::span<const double> x) const;

  const std::vector<tree::Tree>& trees() const { return trees_; }
  const ForestConfig& config() const { return config_; }
  std::size_t outputs() const { return trees_.empty() ? 0 : trees_.front().outputs(); }
  std::size_t inputs() const { return trees_.empty() ? 0 : trees_.front().inputs(); }

  friend bool operator==(const Forest&, const Forest&) = default;
  friend void to_json(nlohmann::json& j, const Forest& f);
  friend void from_json(const nlohmann::json& j, Forest& f);

 private:
  ForestConfig config_;
  std::vector<tree::Tree> trees_;
};

void to_json(nlohmann::json& j, const ForestConfig& c);
void from_json(const nlohmann::json& j, ForestConfig& c);

}  // namespace ddetect::forest
