#pragma once

// Multi-output CART regression tree with the squared-error criterion.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"

namespace ddetect::tree {

struct TreeConfig {
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  std::size_t max_depth = 0;     // 0 = unlimited
  std::size_t max_features = 0;  // 0 = all features
  std::uint64_t seed = 0;

  friend bool operator==(const TreeConfig&, const TreeConfig&) = default;
};

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  std::size_t samples = 0;

  bool leaf() const { return feature < 0; }
  friend bool operator==(const Node&, const Node&) = default;
};

class Tree {
 public:
  Tree() = default;

  /// Fits on the rows of X/Y listed in `rows` (duplicates allowed, as in a
  /// bootstrap sample). An empty `rows` means every row once.
  static Tree fit(const Matrix& X, const Matrix& Y, const TreeConfig& config,
                  std::span<const std::size_t> rows = {});

  void predict_into(std::span<const double> x, std::span<double> out) const;
  std::vector<double> predict(std::span<const double> x) const;
  /// Index of the leaf reached by x.
  std::size_t leaf_index(std::span<const double> x) const;

  std::size_t inputs() const { return inputs_; }
  std::size_t outputs() const { return outputs_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::span<const double> value(std::size_t node) const {
    return {values_.data() + node * outputs_, outputs_};
  }
  std::size_t depth() const;
  std::size_t leaf_count() const;
  const TreeConfig& config() const { return config_; }

  friend bool operator==(const Tree&, const Tree&) = default;

  friend void to_json(nlohmann::json& j, const Tree& t);
  friend void from_json(const nlohmann::json& j, Tree& t);

 private:
  TreeConfig config_;
  std::size_t inputs_ = 0;
  std::size_t outputs_ = 0;
  std::vector<Node> nodes_;
  std::vector<double> values_;  // node-major, outputs_ per node

  friend class Builder;
};

void to_json(nlohmann::json& j, const TreeConfig& c);
void from_json(const nlohmann::json& j, TreeConfig& c);

}  // namespace ddetect::tree
