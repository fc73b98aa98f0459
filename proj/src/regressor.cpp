#include "ddetect/regressor.hpp"

#include <algorithm>

#include "ddetect/json_util.hpp"

namespace ddetect::models {

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::tree: return "tree";
    case ModelKind::forest: return "forest";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "tree") return ModelKind::tree;
  if (s == "forest") return ModelKind::forest;
  if (s == "mlp") return ModelKind::mlp;
  throw InvalidArgument("unknown model kind '" + s + "' (expected tree, forest or mlp)");
}

const std::vector<ModelKind>& all_kinds() {
  static const std::vector<ModelKind> kinds{ModelKind::forest, ModelKind::tree, ModelKind::mlp};
  return kinds;
}

void Regressor::predict_into(std::span<const double> x, std::span<double> out) const {
  std::visit([&](const auto& m) { m.predict_into(x, out); }, model);
}

std::vector<double> Regressor::predict(std::span<const double> x) const {
  std::vector<double> out(channels.size());
  predict_into(x, out);
  return out;
}

Matrix Regressor::predict_rows(const Matrix& X, kernels::Exec exec) const {
  Matrix out(X.rows(), channels.size());
  kernels::for_each_index(X.rows(), exec, [&](std::size_t r) { predict_into(X.row(r), out.row(r)); });
  return out;
}

Regressor fit(ModelKind kind, const prep::Dataset& train, const RegressorConfig& config,
              kernels::Exec exec) {
  if (train.size() == 0) throw InvalidArgument("cannot fit a regressor on an empty dataset");
  Regressor r;
  r.kind = kind;
  r.channels = train.channels;
  switch (kind) {
    case ModelKind::tree: r.model = tree::Tree::fit(train.X, train.Y, config.tree); break;
    case ModelKind::forest: r.model = forest::Forest::fit(train.X, train.Y, config.forest, exec); break;
    case ModelKind::mlp: r.model = mlp::fit(train.X, train.Y, config.mlp); break;
  }
  return r;
}

MseReport evaluate_mse(const Regressor& model, const prep::Dataset& data, kernels::Exec exec) {
  if (data.size() == 0) throw InvalidArgument("evaluate_mse: empty dataset");
  if (data.channels != model.channels) throw InvalidArgument("evaluate_mse: channel mismatch");
  const Matrix pred = model.predict_rows(data.X, exec);
  MseReport rep;
  rep.channels = data.channels;
  const double n = static_cast<double>(data.size());
  for (std::size_t c = 0; c < data.channels.size(); ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
      const double e = data.Y(r, c) - pred(r, c);
      sq += e * e;
    }
    const double mse = sq / n;
    rep.per_channel.push_back(mse);
    const auto col = data.Y.column(c);
    const double var = variance(col);
    if (!(var > 0.0)) throw InvalidArgument("evaluate_mse: channel '" + data.channels[c] + "' is constant");
    rep.aggregate += mse / var;
  }
  return rep;
}

ModelKind select_best(const std::vector<std::pair<ModelKind, double>>& aggregates) {
  if (aggregates.empty()) throw InvalidArgument("select_best: no candidates");
  auto rank = [](ModelKind k) {
    const auto& order = all_kinds();
    return std::find(order.begin(), order.end(), k) - order.begin();
  };
  auto best = aggregates.front();
  for (const auto& a : aggregates) {
    if (a.second < best.second || (a.second == best.second && rank(a.first) < rank(best.first))) best = a;
  }
  return best.first;
}

void to_json(nlohmann::json& j, const RegressorConfig& c) {
  j = {{"tree", c.tree}, {"forest", c.forest}, {"mlp", c.mlp}};
}

void from_json(const nlohmann::json& j, RegressorConfig& c) {
  json_util::allow_keys(j, {"tree", "forest", "mlp"}, "models");
  if (j.contains("tree")) c.tree = j.at("tree").get<tree::TreeConfig>();
  if (j.contains("forest")) c.forest = j.at("forest").get<forest::ForestConfig>();
  if (j.contains("mlp")) c.mlp = j.at("mlp").get<mlp::MlpConfig>();
}

void to_json(nlohmann::json& j, const Regressor& r) {
  j = {{"kind", to_string(r.kind)}, {"inputs", prep::Dataset::input_names()}, {"channels", r.channels}};
  std::visit([&](const auto& m) { j["model"] = m; }, r.model);
}

void from_json(const nlohmann::json& j, Regressor& r) {
  json_util::allow_keys(j, {"kind", "inputs", "channels", "model"}, "regressor");
  r = Regressor{};
  r.kind = model_kind_from_string(j.at("kind").get<std::string>());
  if (j.at("inputs").get<std::vector<std::string>>() != prep::Dataset::input_names()) {
    throw json_util::SchemaError("regressor.inputs", "expected [\"rpm\", \"power\"]");
  }
  r.channels = j.at("channels").get<std::vector<std::string>>();
  const auto& m = j.at("model");
  std::size_t outputs = 0;
  switch (r.kind) {
    case ModelKind::tree: {
      auto t = m.get<tree::Tree>();
      outputs = t.outputs();
      r.model = std::move(t);
      break;
    }
    case ModelKind::forest: {
      auto f = m.get<forest::Forest>();
      outputs = f.outputs();
      r.model = std::move(f);
      break;
    }
    case ModelKind::mlp: {
      auto p = m.get<mlp::Mlp>();
      outputs = p.outputs();
      r.model = std::move(p);
      break;
    }
  }
  if (outputs != r.channels.size()) throw json_util::SchemaError("regressor.channels", "width mismatch");
}

void to_json(nlohmann::json& j, const MseReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t c = 0; c < r.channels.size(); ++c) per[r.channels[c]] = r.per_channel[c];
  j = {{"per_channel", per}, {"aggregate", r.aggregate}};
}

}  // namespace ddetect::models
