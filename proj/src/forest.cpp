#include "ddetect/forest.hpp"

#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::forest {

Forest Forest::fit(const Matrix& X, const Matrix& Y, const ForestConfig& config, kernels::Exec exec) {
  if (config.n_trees == 0) throw InvalidArgument("forest needs at least one tree");
  if (X.rows() == 0 || Y.rows() != X.rows()) throw InvalidArgument("forest fit: X/Y row mismatch");
  Forest f;
  f.config_ = config;
  f.trees_.resize(config.n_trees);
  kernels::for_each_index(config.n_trees, exec, [&](std::size_t t) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
    tree::TreeConfig tc = config.tree;
    tc.seed = derive_seed(seed, "features");
    std::vector<std::size_t> rows;
    if (config.bootstrap) {
      std::mt19937_64 rng(derive_seed(seed, "bootstrap"));
      std::uniform_int_distribution<std::size_t> pick(0, X.rows() - 1);
      rows.resize(X.rows());
      for (auto& r : rows) r = pick(rng);
    }
    f.trees_[t] = tree::Tree::fit(X, Y, tc, rows);
  });
  return f;
}

void Forest::predict_into(std::span<const double> x, std::span<double> out) const {
  if (trees_.empty()) throw InvalidArgument("forest is not fitted");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : trees_) {
    const auto v = t.value(t.leaf_index(x));
    for (std::size_t o = 0; o < v.size(); ++o) out[o] += v[o];
  }
  const double n = static_cast<double>(trees_.size());
  for (double& v : out) v /= n;
}

std::vector<double> Forest::predict(std::span<const double> x) const {
  std::vector<double> out(outputs());
  predict_into(x, out);
  return out;
}

void to_json(nlohmann::json& j, const ForestConfig& c) {
  j = {{"n_trees", c.n_trees}, {"tree", c.tree}, {"bootstrap", c.bootstrap}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ForestConfig& c) {
  using json_util::read_optional;
  json_util::allow_keys(j, {"n_trees", "tree", "bootstrap", "seed"}, "forest");
  read_optional(j, "n_trees", c.n_trees, "forest");
  if (j.contains("tree")) c.tree = j.at("tree").get<tree::TreeConfig>();
  read_optional(j, "bootstrap", c.bootstrap, "forest");
  read_optional(j, "seed", c.seed, "forest");
}

void to_json(nlohmann::json& j, const Forest& f) { j = {{"config", f.config_}, {"trees", f.trees_}}; }

void from_json(const nlohmann::json& j, Forest& f) {
  json_util::allow_keys(j, {"config", "trees"}, "forest");
  f = Forest{};
  f.config_ = j.at("config").get<ForestConfig>();
  f.trees_ = j.at("trees").get<std::vector<tree::Tree>>();
  if (f.trees_.empty()) throw json_util::SchemaError("forest.trees", "empty");
}

}  // namespace ddetect::forest
