#pragma once

// Small fully connected networks shared by the MLP regressor and the VAE.
// Parameters live in one flat vector so optimizers, gradient checks and
// serialization can treat them uniformly.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddetect/common.hpp"

namespace ddetect::nn {

enum class Activation { identity, relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::identity;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Per-sample forward record needed by backward().
struct Tape {
  std::vector<std::vector<double>> values;  // values[0] = input, values[l+1] = layer l output
  std::vector<std::vector<double>> pre;     // pre-activation of layer l
  std::vector<std::vector<double>> delta;   // scratch for backward
};

class Network {
 public:
  Network() = default;
  /// widths = {input, hidden..., output}; one activation per layer.
  Network(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations);

  /// He-uniform for rectifier layers, Glorot-uniform otherwise; zero biases.
  void initialize(std::uint64_t seed);

  std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
  std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back().out; }
  std::size_t param_count() const { return params_.size(); }
  const std::vector<LayerShape>& layers() const { return layers_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const;
  void forward(std::span<const double> x, Tape& tape) const;
  std::span<const double> output(const Tape& tape) const { return tape.values.back(); }

  /// Adds dLoss/dparams to `grad` (size param_count()) given dLoss/doutput,
  /// and returns dLoss/dinput.
  std::vector<double> backward(Tape& tape, std::span<const double> dout,
                               std::span<double> grad) const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
};

/// Scales `grad` in place so its Euclidean norm does not exceed max_norm
/// (no-op when max_norm <= 0). Returns the norm before clipping.
double clip_norm(std::span<double> grad, double max_norm);

bool all_finite(std::span<const double> values);

void to_json(nlohmann::json& j, const Network& n);
void from_json(const nlohmann::json& j, Network& n);

}  // namespace ddetect::nn
