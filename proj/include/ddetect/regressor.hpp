#pragma once

// Uniform wrapper over the three healthy-behaviour regressors.

#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ddetect/forest.hpp"
#include "ddetect/kernels.hpp"
#include "ddetect/mlp.hpp"
#include "ddetect/prep.hpp"
#include "ddetect/tree.hpp"

namespace ddetect::models {

enum class ModelKind { tree, forest, mlp };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);
/// Fixed order used for reporting and to break ties: forest, tree, mlp.
const std::vector<ModelKind>& all_kinds();

struct RegressorConfig {
  tree::TreeConfig tree;
  forest::ForestConfig forest;
  mlp::MlpConfig mlp;

  friend bool operator==(const RegressorConfig&, const RegressorConfig&) = default;
};

struct Regressor {
  ModelKind kind = ModelKind::forest;
  std::vector<std::string> channels;
  std::variant<tree::Tree, forest::Forest, mlp::Mlp> model;

  void predict_into(std::span<const double> x, std::span<double> out) const;
  std::vector<double> predict(std::span<const double> x) const;
  /// One prediction row per input row.
  Matrix predict_rows(const Matrix& X, kernels::Exec exec = kernels::Exec::parallel) const;
};

Regressor fit(ModelKind kind, const prep::Dataset& train, const RegressorConfig& config,
              kernels::Exec exec = kernels::Exec::parallel);

struct MseReport {
  std::vector<std::string> channels;
  std::vector<double> per_channel;
  /// Σ_c MSE_c / Var_c with Var_c the population variance of the evaluated
  /// rows, so channels in different units weigh equally.
  double aggregate = 0.0;
};

MseReport evaluate_mse(const Regressor& model, const prep::Dataset& data,
                       kernels::Exec exec = kernels::Exec::parallel);

/// Kind with the lowest aggregate; ties resolved by all_kinds() order.
ModelKind select_best(const std::vector<std::pair<ModelKind, double>>& aggregates);

void to_json(nlohmann::json& j, const RegressorConfig& c);
void from_json(const nlohmann::json& j, RegressorConfig& c);
void to_json(nlohmann::json& j, const Regressor& r);
void from_json(const nlohmann::json& j, Regressor& r);
void to_json(nlohmann::json& j, const MseReport& r);

}  // namespace ddetect::models
