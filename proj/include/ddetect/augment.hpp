#pragma once

// Variational autoencoder over the joint (inputs, targets) rows of a healthy
// dataset, used to synthesize additional training rows.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"
#include "ddetect/nn.hpp"
#include "ddetect/prep.hpp"

namespace ddetect::augment {

struct VaeConfig {
  std::size_t epochs = 400;
  std::size_t hidden = 32;
  std::size_t latent = 4;
  double beta = 1.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  double clip_norm = 5.0;
  nn::Activation decoder_hidden = nn::Activation::relu;
  std::uint64_t seed = 0;

  friend bool operator==(const VaeConfig&, const VaeConfig&) = default;
};

struct VaeModel {
  VaeConfig config;
  /// rpm, power, then the target channels; the scaler covers the same columns.
  std::vector<std::string> columns;
  prep::ScalerParams scaler;
  nn::Network encoder;  // columns -> hidden (relu) -> [mu, log-variance]
  nn::Network decoder;  // latent -> hidden -> columns (linear)
  std::vector<double> loss_history;
  bool trained = false;

  std::size_t width() const { return encoder.input_width(); }
  std::size_t latent() const { return decoder.input_width(); }

  /// Untrained model with freshly initialized weights.
  static VaeModel create(std::size_t width, const VaeConfig& config);

  friend bool operator==(const VaeModel&, const VaeModel&) = default;
};

struct LatentGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;
};

struct LossTerms {
  double total = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
};

/// Log-variance outputs are clamped to this range before exponentiation.
inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

LatentGaussian encode(const VaeModel& model, std::span<const double> x);
std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> eps);
std::vector<double> decode(const VaeModel& model, std::span<const double> z);

/// Negative ELBO on a standardized batch with explicit noise draws (one row
/// of `draws` per batch row): mean squared reconstruction error plus
/// beta times the mean Gaussian KL to the standard normal prior.
LossTerms loss(const VaeModel& model, const Matrix& batch, const Matrix& draws);

/// Loss plus its gradient with respect to [encoder params, decoder params].
LossTerms loss_gradient(const VaeModel& model, const Matrix& batch, const Matrix& draws,
                        std::vector<double>& grad);

/// Fits the scaler on `data`, then trains on the standardized rows with
/// mini-batch SGD. Throws TrainingError if the loss becomes non-finite.
VaeModel train_vae(const prep::Dataset& data, const VaeConfig& config);

/// Draws z ~ N(0, I), decodes and destandardizes `count` rows.
prep::Dataset generate(const VaeModel& model, std::size_t count, std::uint64_t seed);

/// `generate` with rows that would fail `prep::clean` redrawn, so exactly
/// `count` valid rows come back.
prep::Dataset generate_valid(const VaeModel& model, std::size_t count, std::uint64_t seed);

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);
void to_json(nlohmann::json& j, const VaeModel& m);
void from_json(const nlohmann::json& j, VaeModel& m);

}  // namespace ddetect::augment
