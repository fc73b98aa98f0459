#include "ddetect/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::augment {

VaeModel VaeModel::create(std::size_t width, const VaeConfig& config) {
  if (width == 0 || config.hidden == 0 || config.latent == 0) {
    throw InvalidArgument("VAE widths must be > 0");
  }
  VaeModel m;
  m.config = config;
  m.encoder = nn::Network({width, config.hidden, 2 * config.latent},
                          {nn::Activation::relu, nn::Activation::identity});
  m.decoder = nn::Network({config.latent, config.hidden, width},
                          {config.decoder_hidden, nn::Activation::identity});
  m.encoder.initialize(derive_seed(config.seed, "vae.encoder"));
  m.decoder.initialize(derive_seed(config.seed, "vae.decoder"));
  return m;
}

namespace {

double clamp_logvar(double lv) { return std::clamp(lv, kLogVarMin, kLogVarMax); }

void check_width(const VaeModel& model, std::size_t n) {
  if (n != model.width()) {
    throw InvalidArgument("VAE expects rows of width " + std::to_string(model.width()) + ", got " +
                          std::to_string(n));
  }
}

}  // namespace

LatentGaussian encode(const VaeModel& model, std::span<const double> x) {
  check_width(model, x.size());
  const auto h = model.encoder.forward(x);
  const std::size_t L = model.latent();
  LatentGaussian out;
  out.mu.assign(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(L));
  out.sigma.resize(L);
  for (std::size_t l = 0; l < L; ++l) out.sigma[l] = std::exp(0.5 * clamp_logvar(h[L + l]));
  return out;
}

std::vector<double> reparameterize(std::span<const double> mu, std::span<const double> sigma,
                                   std::span<const double> eps) {
  if (mu.size() != sigma.size() || mu.size() != eps.size()) {
    throw InvalidArgument("reparameterize: length mismatch");
  }
  std::vector<double> z(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) z[i] = mu[i] + sigma[i] * eps[i];
  return z;
}

std::vector<double> decode(const VaeModel& model, std::span<const double> z) {
  if (z.size() != model.latent()) throw InvalidArgument("decode: latent width mismatch");
  return model.decoder.forward(z);
}

namespace {

// Shared forward/backward pass. When grad is null only the loss is computed.
LossTerms evaluate(const VaeModel& model, const Matrix& batch, const Matrix& draws,
                   std::vector<double>* grad) {
  if (batch.rows() == 0) throw InvalidArgument("VAE loss: empty batch");
  check_width(model, batch.cols());
  const std::size_t L = model.latent();
  if (draws.rows() != batch.rows() || draws.cols() != L) {
    throw InvalidArgument("VAE loss: draws must be batch rows x latent");
  }
  const double B = static_cast<double>(batch.rows());
  const double D = static_cast<double>(batch.cols());
  const double beta = model.config.beta;
  const std::size_t enc_n = model.encoder.param_count();
  if (grad) grad->assign(enc_n + model.decoder.param_count(), 0.0);

  nn::Tape enc_tape, dec_tape;
  std::vector<double> z(L), sigma(L), lv(L), dg(batch.cols()), dh(2 * L);
  LossTerms terms;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    auto x = batch.row(r);
    auto eps = draws.row(r);
    model.encoder.forward(x, enc_tape);
    auto h = model.encoder.output(enc_tape);
    double kl = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      lv[l] = clamp_logvar(h[L + l]);
      sigma[l] = std::exp(0.5 * lv[l]);
      z[l] = h[l] + sigma[l] * eps[l];
      kl += 0.5 * (h[l] * h[l] + std::exp(lv[l]) - 1.0 - lv[l]);
    }
    model.decoder.forward(z, dec_tape);
    auto g = model.decoder.output(dec_tape);
    double sq = 0.0;
    for (std::size_t d = 0; d < batch.cols(); ++d) {
      const double e = g[d] - x[d];
      sq += e * e;
      dg[d] = 2.0 * e / (B * D);
    }
    terms.reconstruction += sq / D;
    terms.kl += kl;
    if (!grad) continue;

    std::span<double> dec_grad(grad->data() + enc_n, model.decoder.param_count());
    const auto dz = model.decoder.backward(dec_tape, dg, dec_grad);
    for (std::size_t l = 0; l < L; ++l) {
      dh[l] = dz[l] + beta * h[l] / B;
      const bool clamped = h[L + l] < kLogVarMin || h[L + l] > kLogVarMax;
      dh[L + l] = clamped ? 0.0
                          : dz[l] * eps[l] * 0.5 * sigma[l] + beta * 0.5 * (std::exp(lv[l]) - 1.0) / B;
    }
    std::span<double> enc_grad(grad->data(), enc_n);
    model.encoder.backward(enc_tape, dh, enc_grad);
  }
  terms.reconstruction /= B;
  terms.kl /= B;
  terms.total = terms.reconstruction + beta * terms.kl;
  return terms;
}

}  // namespace

LossTerms loss(const VaeModel& model, const Matrix& batch, const Matrix& draws) {
  return evaluate(model, batch, draws, nullptr);
}

LossTerms loss_gradient(const VaeModel& model, const Matrix& batch, const Matrix& draws,
                        std::vector<double>& grad) {
  return evaluate(model, batch, draws, &grad);
}

namespace {

Matrix joint_matrix(const prep::Dataset& data) {
  Matrix m(data.size(), 2 + data.channels.size());
  for (std::size_t r = 0; r < data.size(); ++r) {
    m(r, 0) = data.X(r, 0);
    m(r, 1) = data.X(r, 1);
    for (std::size_t c = 0; c < data.channels.size(); ++c) m(r, 2 + c) = data.Y(r, c);
  }
  return m;
}

}  // namespace

VaeModel train_vae(const prep::Dataset& data, const VaeConfig& config) {
  if (data.size() < 2) throw InvalidArgument("train_vae: at least 2 samples required");
  if (config.batch_size == 0) throw InvalidArgument("train_vae: batch_size must be > 0");
  const Matrix raw = joint_matrix(data);
  std::vector<std::string> columns = prep::Dataset::input_names();
  columns.insert(columns.end(), data.channels.begin(), data.channels.end());

  VaeModel model = VaeModel::create(raw.cols(), config);
  model.columns = columns;
  model.scaler = prep::ScalerParams::fit(raw, columns);
  // Constant columns (e.g. a single repeated sample) get unit scale so the
  // standardization stays defined.
  for (auto& c : model.scaler.columns) {
    if (!(c.stddev > 0.0)) c.stddev = 1.0;
  }
  const Matrix x = prep::standardize(raw, model.scaler);

  const std::size_t n = x.rows();
  const std::size_t L = config.latent;
  std::mt19937_64 rng(derive_seed(config.seed, "vae.train"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  auto& enc = model.encoder.params();
  auto& dec = model.decoder.params();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::span<const std::size_t> rows(order.data() + start, stop - start);
      const Matrix batch = x.take_rows(rows);
      Matrix draws(batch.rows(), L);
      for (double& e : draws.data()) e = gauss(rng);
      const auto terms = loss_gradient(model, batch, draws, grad);
      if (!std::isfinite(terms.total) || !nn::all_finite(grad)) {
        throw TrainingError("train_vae: non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      nn::clip_norm(grad, config.clip_norm);
      for (std::size_t i = 0; i < enc.size(); ++i) enc[i] -= config.learning_rate * grad[i];
      for (std::size_t i = 0; i < dec.size(); ++i) dec[i] -= config.learning_rate * grad[enc.size() + i];
      epoch_loss += terms.total * static_cast<double>(rows.size());
    }
    model.loss_history.push_back(epoch_loss / static_cast<double>(n));
  }
  model.trained = true;
  return model;
}

namespace {

prep::Dataset empty_like(const VaeModel& model) {
  prep::Dataset d;
  d.channels.assign(model.columns.begin() + 2, model.columns.end());
  d.X = Matrix(0, 2);
  d.Y = Matrix(0, d.channels.size());
  return d;
}

std::vector<double> decode_raw(const VaeModel& model, std::span<const double> z) {
  auto g = decode(model, z);
  for (std::size_t c = 0; c < g.size(); ++c) {
    const auto& s = model.scaler.columns[c];
    g[c] = g[c] * s.stddev + s.mean;
  }
  return g;
}

void append_row(prep::Dataset& d, const std::vector<double>& g) {
  d.X.push_row(std::span<const double>(g.data(), 2));
  d.Y.push_row(std::span<const double>(g.data() + 2, g.size() - 2));
  d.row_ids.push_back(d.row_ids.size());
  d.origin.push_back(prep::Origin::synthetic);
}

bool row_valid(const std::vector<double>& g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v) && v >= 0.0; });
}

}  // namespace

prep::Dataset generate(const VaeModel& model, std::size_t count, std::uint64_t seed) {
  if (!model.trained) throw InvalidArgument("generate: model is not trained");
  prep::Dataset d = empty_like(model);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> z(model.latent());
  for (std::size_t i = 0; i < count; ++i) {
    for (double& v : z) v = gauss(rng);
    append_row(d, decode_raw(model, z));
  }
  if (count > 0) d.refit_stats();
  return d;
}

prep::Dataset generate_valid(const VaeModel& model, std::size_t count, std::uint64_t seed) {
  if (!model.trained) throw InvalidArgument("generate: model is not trained");
  prep::Dataset d = empty_like(model);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> z(model.latent());
  std::size_t attempts = 0;
  const std::size_t cap = 100 * count + 1000;
  while (d.size() < count) {
    if (++attempts > cap) throw TrainingError("generate_valid: decoder rarely yields valid rows");
    for (double& v : z) v = gauss(rng);
    auto g = decode_raw(model, z);
    if (row_valid(g)) append_row(d, g);
  }
  if (count > 0) d.refit_stats();
  return d;
}

void to_json(nlohmann::json& j, const VaeConfig& c) {
  j = {{"epochs", c.epochs},
       {"hidden", c.hidden},
       {"latent", c.latent},
       {"beta", c.beta},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"clip_norm", c.clip_norm},
       {"decoder_hidden_activation", nn::to_string(c.decoder_hidden)},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, VaeConfig& c) {
  using json_util::read_optional;
  json_util::allow_keys(j, {"epochs", "hidden", "latent", "beta", "learning_rate", "batch_size",
                            "clip_norm", "decoder_hidden_activation", "seed"},
                        "vae");
  read_optional(j, "epochs", c.epochs, "vae");
  read_optional(j, "hidden", c.hidden, "vae");
  read_optional(j, "latent", c.latent, "vae");
  read_optional(j, "beta", c.beta, "vae");
  read_optional(j, "learning_rate", c.learning_rate, "vae");
  read_optional(j, "batch_size", c.batch_size, "vae");
  read_optional(j, "clip_norm", c.clip_norm, "vae");
  if (j.contains("decoder_hidden_activation")) {
    c.decoder_hidden = nn::activation_from_string(j.at("decoder_hidden_activation").get<std::string>());
  }
  read_optional(j, "seed", c.seed, "vae");
}

void to_json(nlohmann::json& j, const VaeModel& m) {
  j = {{"kind", "vae"},
       {"config", m.config},
       {"columns", m.columns},
       {"scaler", m.scaler},
       {"encoder", m.encoder},
       {"decoder", m.decoder},
       {"loss_history", m.loss_history},
       {"trained", m.trained}};
}

void from_json(const nlohmann::json& j, VaeModel& m) {
  json_util::allow_keys(j, {"kind", "config", "columns", "scaler", "encoder", "decoder",
                            "loss_history", "trained"},
                        "vae_model");
  if (j.value("kind", "") != "vae") throw json_util::SchemaError("kind", "expected 'vae'");
  m = VaeModel{};
  m.config = j.at("config").get<VaeConfig>();
  m.columns = j.at("columns").get<std::vector<std::string>>();
  m.scaler = j.at("scaler").get<prep::ScalerParams>();
  m.encoder = j.at("encoder").get<nn::Network>();
  m.decoder = j.at("decoder").get<nn::Network>();
  m.loss_history = j.at("loss_history").get<std::vector<double>>();
  m.trained = j.at("trained").get<bool>();
  if (m.encoder.input_width() != m.columns.size() || m.decoder.output_width() != m.columns.size()) {
    throw json_util::SchemaError("vae_model", "network widths do not match columns");
  }
}

}  // namespace ddetect::augment
