#include "ddetect/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::nn {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "linear"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "linear" || s == "identity") return Activation::identity;
  throw InvalidArgument("unknown activation '" + s + "'");
}

Network::Network(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations) {
  if (widths.size() < 2) throw InvalidArgument("network needs at least input and output widths");
  if (activations.size() != widths.size() - 1) {
    throw InvalidArgument("network needs one activation per layer");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] == 0 || widths[l + 1] == 0) throw InvalidArgument("layer width must be > 0");
    LayerShape s{widths[l], widths[l + 1], activations[l], offset, offset + widths[l] * widths[l + 1]};
    offset = s.bias_offset + s.out;
    layers_.push_back(s);
  }
  params_.assign(offset, 0.0);
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& s : layers_) {
    const double limit = s.act == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(s.in))
                             : std::sqrt(6.0 / static_cast<double>(s.in + s.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < s.in * s.out; ++i) params_[s.weight_offset + i] = dist(rng);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(s.bias_offset), s.out, 0.0);
  }
}

std::vector<double> Network::forward(std::span<const double> x) const {
  Tape tape;
  forward(x, tape);
  return tape.values.back();
}

void Network::forward(std::span<const double> x, Tape& tape) const {
  if (x.size() != input_width()) {
    throw InvalidArgument("network input width " + std::to_string(input_width()) + ", got " +
                          std::to_string(x.size()));
  }
  const std::size_t L = layers_.size();
  tape.values.resize(L + 1);
  tape.pre.resize(L);
  tape.values[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& s = layers_[l];
    const double* w = params_.data() + s.weight_offset;
    const double* b = params_.data() + s.bias_offset;
    const auto& in = tape.values[l];
    auto& pre = tape.pre[l];
    auto& out = tape.values[l + 1];
    pre.resize(s.out);
    out.resize(s.out);
    for (std::size_t o = 0; o < s.out; ++o) {
      double acc = b[o];
      const double* wr = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) acc += wr[i] * in[i];
      pre[o] = acc;
      out[o] = s.act == Activation::relu ? (acc > 0.0 ? acc : 0.0) : acc;
    }
  }
}

std::vector<double> Network::backward(Tape& tape, std::span<const double> dout,
                                      std::span<double> grad) const {
  if (dout.size() != output_width()) throw InvalidArgument("backward: output gradient width");
  if (grad.size() != params_.size()) throw InvalidArgument("backward: gradient buffer size");
  const std::size_t L = layers_.size();
  tape.delta.resize(L + 1);
  tape.delta[L].assign(dout.begin(), dout.end());
  for (std::size_t l = L; l-- > 0;) {
    const auto& s = layers_[l];
    auto& d = tape.delta[l + 1];  // dL/d(output of layer l) -> turned into dL/d(pre)
    if (s.act == Activation::relu) {
      for (std::size_t o = 0; o < s.out; ++o) {
        if (!(tape.pre[l][o] > 0.0)) d[o] = 0.0;
      }
    }
    const double* w = params_.data() + s.weight_offset;
    double* gw = grad.data() + s.weight_offset;
    double* gb = grad.data() + s.bias_offset;
    const auto& in = tape.values[l];
    auto& din = tape.delta[l];
    din.assign(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = d[o];
      gb[o] += g;
      if (g == 0.0) continue;
      double* gwr = gw + o * s.in;
      const double* wr = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) {
        gwr[i] += g * in[i];
        din[i] += g * wr[i];
      }
    }
  }
  return tape.delta[0];
}

double clip_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grad) g *= scale;
  }
  return norm;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void to_json(nlohmann::json& j, const Network& n) {
  auto layers = nlohmann::json::array();
  for (const auto& s : n.layers()) {
    auto weights = nlohmann::json::array();
    for (std::size_t o = 0; o < s.out; ++o) {
      auto row = nlohmann::json::array();
      for (std::size_t i = 0; i < s.in; ++i) row.push_back(n.params()[s.weight_offset + o * s.in + i]);
      weights.push_back(row);
    }
    std::vector<double> bias(n.params().begin() + static_cast<std::ptrdiff_t>(s.bias_offset),
                             n.params().begin() + static_cast<std::ptrdiff_t>(s.bias_offset + s.out));
    layers.push_back({{"in", s.in}, {"out", s.out}, {"activation", to_string(s.act)},
                      {"weights", weights}, {"bias", bias}});
  }
  j = {{"layers", layers}};
}

void from_json(const nlohmann::json& j, Network& n) {
  json_util::allow_keys(j, {"layers"}, "network");
  std::vector<std::size_t> widths;
  std::vector<Activation> acts;
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.empty()) throw json_util::SchemaError("network.layers", "empty");
  for (const auto& l : layers) {
    if (widths.empty()) widths.push_back(l.at("in").get<std::size_t>());
    if (l.at("in").get<std::size_t>() != widths.back()) {
      throw json_util::SchemaError("network.layers", "layer widths do not chain");
    }
    widths.push_back(l.at("out").get<std::size_t>());
    acts.push_back(activation_from_string(l.at("activation").get<std::string>()));
  }
  n = Network(widths, acts);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& s = n.layers()[k];
    const auto& w = layers[k].at("weights");
    const auto& b = layers[k].at("bias");
    if (w.size() != s.out || b.size() != s.out) {
      throw json_util::SchemaError("network.layers", "weight shape mismatch");
    }
    for (std::size_t o = 0; o < s.out; ++o) {
      if (w[o].size() != s.in) throw json_util::SchemaError("network.layers", "weight shape mismatch");
      for (std::size_t i = 0; i < s.in; ++i) n.params()[s.weight_offset + o * s.in + i] = w[o][i].get<double>();
      n.params()[s.bias_offset + o] = b[o].get<double>();
    }
  }
}

}  // namespace ddetect::nn
