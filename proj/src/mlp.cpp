#include "ddetect/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::mlp {

double sample_loss_gradient(const nn::Network& net, std::span<const double> x, std::span<const double> y,
                            std::span<double> grad, nn::Tape& tape) {
  net.forward(x, tape);
  auto out = net.output(tape);
  if (y.size() != out.size()) throw InvalidArgument("target width mismatch");
  const double k = static_cast<double>(out.size());
  std::vector<double> dout(out.size());
  double loss = 0.0;
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double e = out[o] - y[o];
    loss += e * e;
    dout[o] = 2.0 * e / k;
  }
  net.backward(tape, dout, grad);
  return loss / k;
}

double sample_loss(const nn::Network& net, std::span<const double> x, std::span<const double> y) {
  const auto out = net.forward(x);
  if (y.size() != out.size()) throw InvalidArgument("target width mismatch");
  double loss = 0.0;
  for (std::size_t o = 0; o < out.size(); ++o) loss += (out[o] - y[o]) * (out[o] - y[o]);
  return loss / static_cast<double>(out.size());
}

namespace {

prep::ScalerParams safe_fit(const Matrix& m) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < m.cols(); ++c) names.push_back("c" + std::to_string(c));
  auto s = prep::ScalerParams::fit(m, names);
  for (auto& c : s.columns) {
    if (!(c.stddev > 0.0)) c.stddev = 1.0;
  }
  return s;
}

}  // namespace

Mlp fit(const Matrix& X, const Matrix& Y, const MlpConfig& config) {
  if (X.rows() == 0 || Y.rows() != X.rows()) throw InvalidArgument("mlp fit: X/Y row mismatch");
  if (config.batch_size == 0) throw InvalidArgument("mlp fit: batch_size must be > 0");
  if (!(config.learning_rate > 0.0)) throw InvalidArgument("mlp fit: learning_rate must be > 0");
  Mlp m;
  m.config = config;
  std::vector<std::size_t> widths{X.cols()};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(Y.cols());
  std::vector<nn::Activation> acts(config.hidden.size(), config.activation);
  acts.push_back(nn::Activation::identity);
  m.network = nn::Network(widths, acts);
  m.network.initialize(derive_seed(config.seed, "mlp.init"));
  m.x_scaler = safe_fit(X);
  m.y_scaler = safe_fit(Y);
  const Matrix xs = prep::standardize(X, m.x_scaler);
  const Matrix ys = prep::standardize(Y, m.y_scaler);

  std::mt19937_64 rng(derive_seed(config.seed, "mlp.shuffle"));
  std::vector<std::size_t> order(X.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(m.network.param_count());
  auto& w = m.network.params();
  nn::Tape tape;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < stop; ++i) {
        total += sample_loss_gradient(m.network, xs.row(order[i]), ys.row(order[i]), grad, tape);
      }
      const double step = config.learning_rate / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < w.size(); ++p) w[p] -= step * grad[p];
    }
    const double epoch_loss = total / static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !nn::all_finite(w)) {
      throw TrainingError("mlp fit: loss diverged at epoch " + std::to_string(epoch + 1));
    }
    m.loss_history.push_back(epoch_loss);
  }
  return m;
}

void Mlp::predict_into(std::span<const double> x, std::span<double> out) const {
  if (x.size() != inputs()) throw InvalidArgument("mlp predict: input width mismatch");
  std::vector<double> xs(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    xs[c] = (x[c] - x_scaler.columns[c].mean) / x_scaler.columns[c].stddev;
  }
  const auto y = network.forward(xs);
  for (std::size_t o = 0; o < y.size(); ++o) {
    out[o] = y[o] * y_scaler.columns[o].stddev + y_scaler.columns[o].mean;
  }
}

std::vector<double> Mlp::predict(std::span<const double> x) const {
  std::vector<double> out(outputs());
  predict_into(x, out);
  return out;
}

void to_json(nlohmann::json& j, const MlpConfig& c) {
  j = {{"hidden", c.hidden},
       {"activation", nn::to_string(c.activation)},
       {"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, MlpConfig& c) {
  using json_util::read_optional;
  json_util::allow_keys(j, {"hidden", "activation", "learning_rate", "epochs", "batch_size", "seed"}, "mlp");
  read_optional(j, "hidden", c.hidden, "mlp");
  if (j.contains("activation")) c.activation = nn::activation_from_string(j.at("activation").get<std::string>());
  read_optional(j, "learning_rate", c.learning_rate, "mlp");
  read_optional(j, "epochs", c.epochs, "mlp");
  read_optional(j, "batch_size", c.batch_size, "mlp");
  read_optional(j, "seed", c.seed, "mlp");
}

void to_json(nlohmann::json& j, const Mlp& m) {
  j = {{"config", m.config},
       {"network", m.network},
       {"x_scaler", m.x_scaler},
       {"y_scaler", m.y_scaler},
       {"loss_history", m.loss_history}};
}

void from_json(const nlohmann::json& j, Mlp& m) {
  json_util::allow_keys(j, {"config", "network", "x_scaler", "y_scaler", "loss_history"}, "mlp");
  m = Mlp{};
  m.config = j.at("config").get<MlpConfig>();
  m.network = j.at("network").get<nn::Network>();
  m.x_scaler = j.at("x_scaler").get<prep::ScalerParams>();
  m.y_scaler = j.at("y_scaler").get<prep::ScalerParams>();
  m.loss_history = j.at("loss_history").get<std::vector<double>>();
  if (m.x_scaler.columns.size() != m.inputs() || m.y_scaler.columns.size() != m.outputs()) {
    throw json_util::SchemaError("mlp", "scaler widths do not match the network");
  }
}

}  // namespace ddetect::mlp
