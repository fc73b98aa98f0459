#pragma once

// Multi-output MLP regressor trained with per-sample SGD on standardized
// inputs and targets.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/nn.hpp"
#include "ddetect/prep.hpp"

namespace ddetect::mlp {

struct MlpConfig {
  std::vector<std::size_t> hidden{32, 24, 12};
  nn::Activation activation = nn::Activation::relu;
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct Mlp {
  MlpConfig config;
  nn::Network network;
  prep::ScalerParams x_scaler;
  prep::ScalerParams y_scaler;
  std::vector<double> loss_history;  // mean standardized loss per epoch

  void predict_into(std::span<const double> x, std::span<double> out) const;
  std::vector<double> predict(std::span<const double> x) const;
  std::size_t inputs() const { return network.input_width(); }
  std::size_t outputs() const { return network.output_width(); }

  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// Squared error averaged over outputs for one standardized sample, and its
/// gradient added into `grad`.
double sample_loss_gradient(const nn::Network& net, std::span<const double> x, std::span<const double> y,
                            std::span<double> grad, nn::Tape& tape);
double sample_loss(const nn::Network& net, std::span<const double> x, std::span<const double> y);

/// Throws TrainingError when the loss diverges.
Mlp fit(const Matrix& X, const Matrix& Y, const MlpConfig& config);

void to_json(nlohmann::json& j, const MlpConfig& c);
void from_json(const nlohmann::json& j, MlpConfig& c);
void to_json(nlohmann::json& j, const Mlp& m);
void from_json(const nlohmann::json& j, Mlp& m);

}  // namespace ddetect::mlp
