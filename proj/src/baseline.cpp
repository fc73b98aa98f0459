#include "ddetect/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ddetect/csv.hpp"
#include "ddetect/json_util.hpp"

namespace ddetect::baseline {

DualSolution solve_dual(const Matrix& K, double nu, double tolerance, std::size_t max_iter) {
  const std::size_t m = K.rows();
  if (m < 1 || K.cols() != m) throw InvalidArgument("solve_dual: Gram matrix must be square and non-empty");
  if (!(nu > 0.0 && nu <= 1.0)) throw InvalidArgument("nu must lie in (0, 1]");
  const double C = 1.0 / (nu * static_cast<double>(m));

  DualSolution s;
  s.alpha.assign(m, 0.0);
  // Fill the first floor(ν m) coefficients to the bound and put the remainder
  // on the next one, so Σα = 1 from the start.
  double remaining = 1.0;
  for (std::size_t i = 0; i < m && remaining > 0.0; ++i) {
    s.alpha[i] = std::min(C, remaining);
    remaining -= s.alpha[i];
  }
  s.gradient.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (s.alpha[i] == 0.0) continue;
    for (std::size_t r = 0; r < m; ++r) s.gradient[r] += s.alpha[i] * K(r, i);
  }
  auto& a = s.alpha;
  auto& G = s.gradient;

  const double tau = 1e-12;
  while (true) {
    // j: coefficient to decrease (α_j > 0) with the largest gradient.
    std::size_t j = m;
    double gmax = -INFINITY;
    for (std::size_t t = 0; t < m; ++t) {
      if (a[t] > 0.0 && G[t] > gmax) {
        gmax = G[t];
        j = t;
      }
    }
    double gmin = INFINITY;
    std::size_t i = m;
    double best = -INFINITY;
    for (std::size_t t = 0; t < m; ++t) {
      if (!(a[t] < C)) continue;
      gmin = std::min(gmin, G[t]);
      const double diff = gmax - G[t];
      if (diff <= 0.0) continue;
      double eta = K(t, t) + K(j, j) - 2.0 * K(t, j);
      if (eta <= 0.0) eta = tau;
      const double gain = diff * diff / eta;
      if (gain > best) {
        best = gain;
        i = t;
      }
    }
    if (j == m || i == m || gmax - gmin <= tolerance) break;
    if (s.iterations >= max_iter) {
      throw TrainingError("OC-SVM solver did not converge within " + std::to_string(max_iter) + " iterations");
    }
    ++s.iterations;
    double eta = K(i, i) + K(j, j) - 2.0 * K(i, j);
    if (eta <= 0.0) eta = tau;
    double delta = (G[j] - G[i]) / eta;
    delta = std::min({delta, C - a[i], a[j]});
    if (!(delta > 0.0)) break;
    a[i] += delta;
    a[j] -= delta;
    if (C - a[i] < 1e-15 * C) a[i] = C;
    if (a[j] < 1e-15 * C) a[j] = 0.0;
    for (std::size_t r = 0; r < m; ++r) G[r] += delta * (K(r, i) - K(r, j));
  }

  double sum = 0.0;
  std::size_t nfree = 0;
  double ub = INFINITY, lb = -INFINITY;
  for (std::size_t t = 0; t < m; ++t) {
    if (a[t] > 0.0 && a[t] < C) {
      sum += G[t];
      ++nfree;
    } else if (a[t] == 0.0) {
      ub = std::min(ub, G[t]);
    } else {
      lb = std::max(lb, G[t]);
    }
  }
  if (nfree > 0) {
    s.rho = sum / static_cast<double>(nfree);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    s.rho = 0.5 * (ub + lb);
  } else {
    s.rho = std::isfinite(ub) ? ub : lb;
  }
  return s;
}

double kkt_residual(const std::vector<double>& alpha, const std::vector<double>& G, double rho, double C) {
  double worst = std::abs(std::accumulate(alpha.begin(), alpha.end(), 0.0) - 1.0);
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    const double a = alpha[t];
    worst = std::max({worst, -a, a - C});
    double v = 0.0;
    if (a <= 0.0) {
      v = std::max(0.0, rho - G[t]);
    } else if (a >= C) {
      v = std::max(0.0, G[t] - rho);
    } else {
      v = std::abs(G[t] - rho);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

OcsvmModel train_ocsvm(const Matrix& X, const OcsvmConfig& config, kernels::Exec exec) {
  if (X.rows() < 2) throw InvalidArgument("train_ocsvm: at least 2 samples required");
  if (!(config.nu > 0.0 && config.nu <= 1.0)) throw InvalidArgument("train_ocsvm: nu must lie in (0, 1]");
  if (config.gamma < 0.0) throw InvalidArgument("train_ocsvm: gamma must be >= 0");
  double gamma = config.gamma;
  if (gamma == 0.0) {
    const double var = variance(X.data());
    gamma = var > 0.0 ? 1.0 / (static_cast<double>(X.cols()) * var) : 1.0;
  }
  const Matrix K = kernels::rbf_gram(X, X, gamma, exec);
  const auto sol = solve_dual(K, config.nu, config.tolerance, config.max_iter);
  const double C = 1.0 / (config.nu * static_cast<double>(X.rows()));

  OcsvmModel m;
  m.gamma = gamma;
  m.nu = config.nu;
  m.rho = sol.rho;
  m.train_size = X.rows();
  m.iterations = sol.iterations;
  m.kkt_residual = kkt_residual(sol.alpha, sol.gradient, sol.rho, C);
  m.support = Matrix(0, X.cols());
  for (std::size_t t = 0; t < X.rows(); ++t) {
    if (sol.alpha[t] > 0.0) {
      m.support.push_row(X.row(t));
      m.alpha.push_back(sol.alpha[t]);
    }
  }
  for (std::size_t c = 0; c < X.cols(); ++c) {
    m.features.push_back("f" + std::to_string(c));
    m.scaler.names.push_back(m.features.back());
    m.scaler.columns.push_back(prep::ColumnStats{0.0, 1.0, 0.0, 1.0});
  }
  return m;
}

namespace {

Matrix feature_matrix(const prep::Dataset& d, const std::vector<std::string>& channels) {
  std::vector<std::size_t> idx;
  for (const auto& c : channels) {
    auto it = std::find(d.channels.begin(), d.channels.end(), c);
    if (it == d.channels.end()) throw InvalidArgument("OC-SVM: dataset has no channel '" + c + "'");
    idx.push_back(static_cast<std::size_t>(it - d.channels.begin()));
  }
  Matrix f(d.size(), 2 + channels.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    f(r, 0) = d.X(r, 0);
    f(r, 1) = d.X(r, 1);
    for (std::size_t c = 0; c < idx.size(); ++c) f(r, 2 + c) = d.Y(r, idx[c]);
  }
  return f;
}

}  // namespace

OcsvmModel train_ocsvm(const prep::Dataset& healthy, const std::vector<std::string>& channels,
                       const OcsvmConfig& config, kernels::Exec exec) {
  if (healthy.size() < 2) throw InvalidArgument("train_ocsvm: at least 2 samples required");
  if (config.max_train < 2) throw InvalidArgument("train_ocsvm: max_train must be >= 2");
  Matrix raw = feature_matrix(healthy, channels);
  std::vector<std::string> names = prep::Dataset::input_names();
  names.insert(names.end(), channels.begin(), channels.end());
  if (raw.rows() > config.max_train) {
    std::vector<std::size_t> rows(raw.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::mt19937_64 rng(derive_seed(config.seed, "ocsvm.subsample"));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(config.max_train);
    std::sort(rows.begin(), rows.end());
    raw = raw.take_rows(rows);
  }
  auto scaler = prep::ScalerParams::fit(raw, names);
  for (auto& c : scaler.columns) {
    if (!(c.stddev > 0.0)) c.stddev = 1.0;
  }
  OcsvmModel m = train_ocsvm(prep::standardize(raw, scaler), config, exec);
  m.features = names;
  m.scaler = scaler;
  return m;
}

Classification classify(const OcsvmModel& model, std::span<const double> x) {
  if (!model.trained()) throw InvalidArgument("classify: model is not trained");
  if (x.size() != model.features.size()) throw InvalidArgument("classify: feature width mismatch");
  std::vector<double> z(x.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    z[c] = (x[c] - model.scaler.columns[c].mean) / model.scaler.columns[c].stddev;
  }
  double f = 0.0;
  for (std::size_t s = 0; s < model.alpha.size(); ++s) {
    auto sv = model.support.row(s);
    double d2 = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) d2 += (sv[c] - z[c]) * (sv[c] - z[c]);
    f += model.alpha[s] * std::exp(-model.gamma * d2);
  }
  f -= model.rho;
  return {f >= 0.0 ? 1 : -1, f};
}

std::vector<Classification> classify_frames(const OcsvmModel& model, const sim::Telemetry& frames,
                                            kernels::Exec exec) {
  std::vector<std::size_t> idx;
  for (std::size_t c = 2; c < model.features.size(); ++c) idx.push_back(frames.channel_index(model.features[c]));
  std::vector<Classification> out(frames.frames.size());
  kernels::for_each_index(frames.frames.size(), exec, [&](std::size_t i) {
    const auto& f = frames.frames[i];
    std::vector<double> x{f.rpm, f.power};
    for (std::size_t c : idx) x.push_back(f.values.at(c));
    out[i] = classify(model, x);
  });
  return out;
}

std::optional<std::size_t> stable_detection(std::span<const int> labels, std::size_t k) {
  if (k == 0) throw InvalidArgument("k_stable must be >= 1");
  std::size_t run = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    run = labels[i] < 0 ? run + 1 : 0;
    if (run == k) return i + 1 - k;
  }
  return std::nullopt;
}

std::optional<std::size_t> stable_detection(std::span<const Classification> outputs, std::size_t k) {
  std::vector<int> labels;
  labels.reserve(outputs.size());
  for (const auto& o : outputs) labels.push_back(o.label);
  return stable_detection(labels, k);
}

Comparison compare_detection(std::span<const Classification> ocsvm, const detect::DetectionReport& derivative,
                             std::size_t k_stable) {
  if (ocsvm.size() != derivative.frames) {
    throw InvalidArgument("compare_detection: OC-SVM outputs cover " + std::to_string(ocsvm.size()) +
                          " samples, derivative report " + std::to_string(derivative.frames));
  }
  Comparison c;
  c.k_stable = k_stable;
  c.ocsvm_detection = stable_detection(ocsvm, k_stable);
  c.derivative_detection = derivative.combined;
  if (c.ocsvm_detection && c.derivative_detection) {
    c.difference = static_cast<long long>(*c.ocsvm_detection) - static_cast<long long>(*c.derivative_detection);
  }
  const std::size_t end = c.ocsvm_detection ? *c.ocsvm_detection : ocsvm.size();
  for (std::size_t i = 1; i < end; ++i) {
    if (ocsvm[i].label != ocsvm[i - 1].label) ++c.oscillations_before;
  }
  return c;
}

void write_outputs(const std::filesystem::path& path, const std::vector<double>& t,
                   std::span<const Classification> outputs) {
  if (t.size() != outputs.size()) throw InvalidArgument("write_outputs: length mismatch");
  std::vector<double> value, label;
  for (const auto& o : outputs) {
    value.push_back(o.value);
    label.push_back(o.label);
  }
  csv::write_table(path, {"t", "decision_value", "label"}, {t, value, label});
}

void to_json(nlohmann::json& j, const OcsvmConfig& c) {
  j = {{"nu", c.nu},           {"gamma", c.gamma},         {"max_train", c.max_train}, {"max_iter", c.max_iter},
       {"tolerance", c.tolerance}, {"k_stable", c.k_stable}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, OcsvmConfig& c) {
  using json_util::read_optional;
  json_util::allow_keys(j, {"nu", "gamma", "max_train", "max_iter", "tolerance", "k_stable", "seed"}, "baseline");
  read_optional(j, "nu", c.nu, "baseline");
  read_optional(j, "gamma", c.gamma, "baseline");
  read_optional(j, "max_train", c.max_train, "baseline");
  read_optional(j, "max_iter", c.max_iter, "baseline");
  read_optional(j, "tolerance", c.tolerance, "baseline");
  read_optional(j, "k_stable", c.k_stable, "baseline");
  read_optional(j, "seed", c.seed, "baseline");
}

void to_json(nlohmann::json& j, const OcsvmModel& m) {
  std::vector<std::vector<double>> sv;
  for (std::size_t s = 0; s < m.support.rows(); ++s) sv.emplace_back(m.support.row(s).begin(), m.support.row(s).end());
  j = {{"kind", "ocsvm"},
       {"kernel", "rbf"},
       {"features", m.features},
       {"scaler", m.scaler},
       {"support_vectors", sv},
       {"alpha", m.alpha},
       {"rho", m.rho},
       {"gamma", m.gamma},
       {"nu", m.nu},
       {"train_size", m.train_size},
       {"iterations", m.iterations},
       {"kkt_residual", m.kkt_residual}};
}

void from_json(const nlohmann::json& j, OcsvmModel& m) {
  json_util::allow_keys(j, {"kind", "kernel", "features", "scaler", "support_vectors", "alpha", "rho", "gamma", "nu",
                            "train_size", "iterations", "kkt_residual"},
                        "ocsvm");
  if (j.value("kind", "") != "ocsvm") throw json_util::SchemaError("kind", "expected 'ocsvm'");
  m = OcsvmModel{};
  m.features = j.at("features").get<std::vector<std::string>>();
  m.scaler = j.at("scaler").get<prep::ScalerParams>();
  m.support = Matrix(0, m.features.size());
  for (const auto& row : j.at("support_vectors")) {
    const auto v = row.get<std::vector<double>>();
    if (v.size() != m.features.size()) throw json_util::SchemaError("ocsvm.support_vectors", "width mismatch");
    m.support.push_row(v);
  }
  m.alpha = j.at("alpha").get<std::vector<double>>();
  if (m.alpha.size() != m.support.rows() || m.alpha.empty()) {
    throw json_util::SchemaError("ocsvm.alpha", "must have one entry per support vector");
  }
  m.rho = j.at("rho").get<double>();
  m.gamma = j.at("gamma").get<double>();
  m.nu = j.at("nu").get<double>();
  m.train_size = j.at("train_size").get<std::size_t>();
  m.iterations = j.value("iterations", std::size_t{0});
  m.kkt_residual = j.value("kkt_residual", 0.0);
}

void to_json(nlohmann::json& j, const Comparison& c) {
  auto o = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j = {{"ocsvm_detection", o(c.ocsvm_detection)},
       {"derivative_detection", o(c.derivative_detection)},
       {"difference", c.difference ? nlohmann::json(*c.difference) : nlohmann::json()},
       {"k_stable", c.k_stable},
       {"oscillations_before", c.oscillations_before}};
}

}  // namespace ddetect::baseline
