#include "ddetect/tree.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "ddetect/json_util.hpp"

namespace ddetect::tree {

// Presorted builder. lists_[f] holds the sample ids of every node sorted by
// (x_f, id); lists_[d] holds them in id order. Each node owns the same
// contiguous range in every list and children are made by stable partition,
// so no node ever re-sorts.
class Builder {
 public:
  Builder(const Matrix& X, const Matrix& Y, const TreeConfig& config, std::span<const std::size_t> rows)
      : X_(X), Y_(Y), config_(config), rng_(config.seed) {
    if (rows.empty()) {
      rows_.resize(X.rows());
      std::iota(rows_.begin(), rows_.end(), std::size_t{0});
    } else {
      rows_.assign(rows.begin(), rows.end());
    }
    d_ = X.cols();
    k_ = Y.cols();
    const std::size_t m = rows_.size();
    lists_.assign(d_ + 1, std::vector<std::size_t>(m));
    for (std::size_t f = 0; f <= d_; ++f) {
      auto& l = lists_[f];
      std::iota(l.begin(), l.end(), std::size_t{0});
      if (f < d_) {
        std::sort(l.begin(), l.end(), [&](std::size_t a, std::size_t b) {
          const double xa = x(a, f), xb = x(b, f);
          return xa < xb || (xa == xb && a < b);
        });
      }
    }
    goes_left_.assign(m, 0);
    scratch_.resize(m);
    features_.resize(d_);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  Tree run() {
    Tree t;
    t.config_ = config_;
    t.inputs_ = d_;
    t.outputs_ = k_;
    tree_ = &t;
    build(0, rows_.size(), 0);
    return t;
  }

 private:
  const Matrix& X_;
  const Matrix& Y_;
  TreeConfig config_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> rows_;
  std::size_t d_ = 0, k_ = 0;
  std::vector<std::vector<std::size_t>> lists_;
  std::vector<unsigned char> goes_left_;
  std::vector<std::size_t> scratch_;
  std::vector<std::size_t> features_;
  Tree* tree_ = nullptr;

  double x(std::size_t s, std::size_t f) const { return X_(rows_[s], f); }
  double y(std::size_t s, std::size_t o) const { return Y_(rows_[s], o); }

  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::size_t build(std::size_t lo, std::size_t hi, std::size_t depth) {
    const std::size_t n = hi - lo;
    const std::size_t id = tree_->nodes_.size();
    tree_->nodes_.push_back(Node{});
    tree_->nodes_[id].samples = n;

    std::vector<double> mean(k_, 0.0);
    const auto& by_id = lists_[d_];
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t o = 0; o < k_; ++o) mean[o] += y(by_id[i], o);
    }
    for (double& v : mean) v /= static_cast<double>(n);
    tree_->values_.insert(tree_->values_.end(), mean.begin(), mean.end());

    if (n < config_.min_samples_split || n < 2 * config_.min_samples_leaf ||
        (config_.max_depth > 0 && depth >= config_.max_depth)) {
      return id;
    }
    double sse = 0.0;
    std::vector<double> total(k_, 0.0);
    for (std::size_t i = lo; i < hi; ++i) {
      for (std::size_t o = 0; o < k_; ++o) {
        const double c = y(by_id[i], o) - mean[o];
        sse += c * c;
        total[o] += c;
      }
    }
    if (!(sse > 0.0)) return id;

    const Split best = find_split(lo, hi, mean, total, sse);
    if (!best.found) return id;

    std::size_t n_left = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      const std::size_t s = by_id[i];
      goes_left_[s] = x(s, best.feature) <= best.threshold ? 1 : 0;
      n_left += goes_left_[s];
    }
    for (auto& l : lists_) partition(l, lo, hi);

    const int left = static_cast<int>(build(lo, lo + n_left, depth + 1));
    const int right = static_cast<int>(build(lo + n_left, hi, depth + 1));
    Node& node = tree_->nodes_[id];
    node.feature = static_cast<int>(best.feature);
    node.threshold = best.threshold;
    node.left = left;
    node.right = right;
    return id;
  }

  void partition(std::vector<std::size_t>& l, std::size_t lo, std::size_t hi) {
    std::size_t w = lo, r = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      if (goes_left_[l[i]]) {
        l[w++] = l[i];
      } else {
        scratch_[r++] = l[i];
      }
    }
    std::copy_n(scratch_.begin(), r, l.begin() + static_cast<std::ptrdiff_t>(w));
  }

  Split find_split(std::size_t lo, std::size_t hi, const std::vector<double>& mean,
                   const std::vector<double>& total, double sse) {
    const std::size_t n = hi - lo;
    const std::size_t limit = config_.max_features == 0 ? d_ : std::min(config_.max_features, d_);
    if (limit < d_) std::shuffle(features_.begin(), features_.end(), rng_);

    double base = 0.0;
    for (std::size_t o = 0; o < k_; ++o) base += total[o] * total[o] / static_cast<double>(n);

    Split best;
    std::size_t visited = 0;
    std::vector<double> left(k_);
    for (std::size_t f : features_) {
      if (visited >= limit) break;
      const auto& l = lists_[f];
      if (x(l[lo], f) == x(l[hi - 1], f)) continue;  // constant here
      ++visited;
      std::fill(left.begin(), left.end(), 0.0);
      for (std::size_t i = 1; i < n; ++i) {
        const std::size_t s = l[lo + i - 1];
        for (std::size_t o = 0; o < k_; ++o) left[o] += y(s, o) - mean[o];
        const double a = x(s, f);
        const double b = x(l[lo + i], f);
        if (!(a < b) || i < config_.min_samples_leaf || n - i < config_.min_samples_leaf) continue;
        const double nl = static_cast<double>(i), nr = static_cast<double>(n - i);
        double gain = -base;
        for (std::size_t o = 0; o < k_; ++o) {
          const double r = total[o] - left[o];
          gain += left[o] * left[o] / nl + r * r / nr;
        }
        const bool better = !best.found || gain > best.gain || (gain == best.gain && f < best.feature);
        if (better) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best = Split{true, f, mid, gain};
        }
      }
    }
    if (best.found && !(best.gain > 1e-12 * sse)) best.found = false;
    return best;
  }
};

Tree Tree::fit(const Matrix& X, const Matrix& Y, const TreeConfig& config,
               std::span<const std::size_t> rows) {
  if (X.rows() == 0 || X.cols() == 0) throw InvalidArgument("tree fit: empty input");
  if (Y.rows() != X.rows() || Y.cols() == 0) throw InvalidArgument("tree fit: X/Y row mismatch");
  if (config.min_samples_split < 2) throw InvalidArgument("min_samples_split must be >= 2");
  if (config.min_samples_leaf < 1) throw InvalidArgument("min_samples_leaf must be >= 1");
  for (std::size_t r : rows) {
    if (r >= X.rows()) throw InvalidArgument("tree fit: row index out of range");
  }
  return Builder(X, Y, config, rows).run();
}

std::size_t Tree::leaf_index(std::span<const double> x) const {
  if (nodes_.empty()) throw InvalidArgument("tree is not fitted");
  if (x.size() != inputs_) throw InvalidArgument("tree predict: input width mismatch");
  std::size_t i = 0;
  while (!nodes_[i].leaf()) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

void Tree::predict_into(std::span<const double> x, std::span<double> out) const {
  const auto v = value(leaf_index(x));
  std::copy(v.begin(), v.end(), out.begin());
}

std::vector<double> Tree::predict(std::span<const double> x) const {
  const auto v = value(leaf_index(x));
  return {v.begin(), v.end()};
}

std::size_t Tree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  // Children always have larger indices than their parent.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].leaf()) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.leaf(); }));
}

void to_json(nlohmann::json& j, const TreeConfig& c) {
  j = {{"min_samples_split", c.min_samples_split},
       {"min_samples_leaf", c.min_samples_leaf},
       {"max_depth", c.max_depth},
       {"max_features", c.max_features},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TreeConfig& c) {
  using json_util::read_optional;
  json_util::allow_keys(j, {"min_samples_split", "min_samples_leaf", "max_depth", "max_features", "seed"},
                        "tree");
  read_optional(j, "min_samples_split", c.min_samples_split, "tree");
  read_optional(j, "min_samples_leaf", c.min_samples_leaf, "tree");
  read_optional(j, "max_depth", c.max_depth, "tree");
  read_optional(j, "max_features", c.max_features, "tree");
  read_optional(j, "seed", c.seed, "tree");
}

void to_json(nlohmann::json& j, const Tree& t) {
  std::vector<int> feature, left, right;
  std::vector<double> threshold;
  std::vector<std::size_t> samples;
  for (const auto& n : t.nodes_) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    samples.push_back(n.samples);
  }
  j = {{"config", t.config_}, {"inputs", t.inputs_}, {"outputs", t.outputs_},
       {"feature", feature},  {"threshold", threshold}, {"left", left},
       {"right", right},      {"samples", samples},     {"value", t.values_}};
}

void from_json(const nlohmann::json& j, Tree& t) {
  json_util::allow_keys(j, {"config", "inputs", "outputs", "feature", "threshold", "left", "right",
                            "samples", "value"},
                        "tree");
  t = Tree{};
  t.config_ = j.at("config").get<TreeConfig>();
  t.inputs_ = j.at("inputs").get<std::size_t>();
  t.outputs_ = j.at("outputs").get<std::size_t>();
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto samples = j.at("samples").get<std::vector<std::size_t>>();
  t.values_ = j.at("value").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || samples.size() != n ||
      t.values_.size() != n * t.outputs_) {
    throw json_util::SchemaError("tree", "node arrays have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (feature[i] >= 0) {
      if (static_cast<std::size_t>(feature[i]) >= t.inputs_ || left[i] <= static_cast<int>(i) ||
          right[i] <= static_cast<int>(i) || static_cast<std::size_t>(left[i]) >= n ||
          static_cast<std::size_t>(right[i]) >= n) {
        throw json_util::SchemaError("tree", "invalid node " + std::to_string(i));
      }
    }
    t.nodes_.push_back(Node{feature[i], threshold[i], left[i], right[i], samples[i]});
  }
}

}  // namespace ddetect::tree
