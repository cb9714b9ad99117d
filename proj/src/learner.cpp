#include "lara/learner.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

#include "lara/error.hpp"

namespace lara {

namespace {

constexpr double kProbClip = 1e-7;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

// Training state in a canonical row order (lexicographic on features, then
// label), so the fitted model does not depend on the caller's row order.
struct CanonicalData {
  RowMatrix x;
  std::vector<double> y;
  std::vector<std::vector<std::uint32_t>> sorted_by_feature;
};

CanonicalData canonicalize(const RowMatrix& features, std::span<const int> labels) {
  const auto n = static_cast<std::size_t>(features.rows());
  const Eigen::Index d = features.cols();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double va = features(a, j);
      const double vb = features(b, j);
      if (va != vb) return va < vb;
    }
    return labels[a] < labels[b];
  });

  CanonicalData out;
  out.x.resize(features.rows(), d);
  out.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    out.x.row(static_cast<Eigen::Index>(r)) = features.row(order[r]);
    out.y[r] = labels[order[r]];
  }
  out.sorted_by_feature.resize(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    auto& idx = out.sorted_by_feature[static_cast<std::size_t>(j)];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return out.x(a, j) < out.x(b, j); });
  }
  return out;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Least-squares regression tree on `target`, grown level by level. Fills
// `leaf_of` with the leaf reached by each training row.
GbdtPredictor::Tree grow_tree(const CanonicalData& data, const std::vector<double>& target, const LearnerConfig& cfg,
                              std::vector<int>& leaf_of) {
  const std::size_t n = target.size();
  const auto min_leaf = static_cast<std::size_t>(cfg.min_samples_leaf);
  GbdtPredictor::Tree tree(1);
  leaf_of.assign(n, 0);
  std::vector<int> active{0};

  for (int depth = 0; depth < cfg.max_depth && !active.empty(); ++depth) {
    const std::size_t n_nodes = tree.size();
    std::vector<char> is_active(n_nodes, 0);
    for (int a : active) is_active[static_cast<std::size_t>(a)] = 1;

    std::vector<std::size_t> count(n_nodes, 0);
    std::vector<double> sum(n_nodes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto node = static_cast<std::size_t>(leaf_of[i]);
      if (!is_active[node]) continue;
      ++count[node];
      sum[node] += target[i];
    }

    std::vector<SplitChoice> best(n_nodes);
    std::vector<std::size_t> left_count(n_nodes);
    std::vector<double> left_sum(n_nodes);
    std::vector<double> last_value(n_nodes);
    std::vector<char> seen(n_nodes);
    for (std::size_t f = 0; f < data.sorted_by_feature.size(); ++f) {
      std::fill(left_count.begin(), left_count.end(), 0);
      std::fill(left_sum.begin(), left_sum.end(), 0.0);
      std::fill(seen.begin(), seen.end(), 0);
      const auto col = static_cast<Eigen::Index>(f);
      for (std::uint32_t i : data.sorted_by_feature[f]) {
        const auto node = static_cast<std::size_t>(leaf_of[i]);
        if (!is_active[node]) continue;
        const double x = data.x(i, col);
        if (seen[node] && x > last_value[node]) {
          const std::size_t lc = left_count[node];
          const std::size_t rc = count[node] - lc;
          if (lc >= min_leaf && rc >= min_leaf) {
            const double ls = left_sum[node];
            const double rs = sum[node] - ls;
            const double gain = ls * ls / static_cast<double>(lc) + rs * rs / static_cast<double>(rc) -
                                sum[node] * sum[node] / static_cast<double>(count[node]);
            if (gain > best[node].gain) {
              double threshold = last_value[node] + 0.5 * (x - last_value[node]);
              if (!(threshold < x)) threshold = last_value[node];
              best[node] = {gain, static_cast<int>(f), threshold};
            }
          }
        }
        ++left_count[node];
        left_sum[node] += target[i];
        last_value[node] = x;
        seen[node] = 1;
      }
    }

    std::vector<int> next_active;
    for (int a : active) {
      const auto& choice = best[static_cast<std::size_t>(a)];
      if (choice.feature < 0) continue;
      const int left = static_cast<int>(tree.size());
      tree.emplace_back();
      tree.emplace_back();
      auto& node = tree[static_cast<std::size_t>(a)];
      node.feature = choice.feature;
      node.threshold = choice.threshold;
      node.left = left;
      node.right = left + 1;
      next_active.push_back(left);
      next_active.push_back(left + 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto& node = tree[static_cast<std::size_t>(leaf_of[i])];
      if (node.feature < 0) continue;
      leaf_of[i] = data.x(static_cast<Eigen::Index>(i), node.feature) <= node.threshold ? node.left : node.right;
    }
    active = std::move(next_active);
  }

  std::vector<double> leaf_sum(tree.size(), 0.0);
  std::vector<std::size_t> leaf_count(tree.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    leaf_sum[static_cast<std::size_t>(leaf_of[i])] += target[i];
    ++leaf_count[static_cast<std::size_t>(leaf_of[i])];
  }
  for (std::size_t k = 0; k < tree.size(); ++k) {
    if (tree[k].feature < 0 && leaf_count[k] > 0) tree[k].value = leaf_sum[k] / static_cast<double>(leaf_count[k]);
  }
  return tree;
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw SchemaError("predictor dump: expected '" + token + "', got '" + got + "'");
  }
}

}  // namespace

void LearnerConfig::validate() const {
  if (n_estimators < 1) throw ParameterError("n_estimators must be >= 1");
  if (max_depth < 1) throw ParameterError("max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ParameterError("learning_rate must lie in (0, 1]");
  if (min_samples_leaf < 1) throw ParameterError("min_samples_leaf must be >= 1");
}

GbdtLearner::GbdtLearner(LearnerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::shared_ptr<const Predictor> GbdtLearner::fit(const RowMatrix& features, std::span<const int> labels) const {
  const auto n = static_cast<std::size_t>(features.rows());
  if (labels.size() != n) throw DimensionError("feature rows and labels differ in length");
  if (n == 0) throw EmptyInputError("cannot fit on zero rows");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("learner labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == n) {
    const double rate = std::clamp(static_cast<double>(positives) / static_cast<double>(n), kProbClip, 1.0 - kProbClip);
    return std::make_shared<GbdtPredictor>(cfg_, features.cols(), logit(rate), std::vector<GbdtPredictor::Tree>{}, true);
  }

  const CanonicalData data = canonicalize(features, labels);
  const double base = logit(static_cast<double>(positives) / static_cast<double>(n));
  std::vector<double> score(n, base);
  std::vector<double> residual(n);
  std::vector<int> leaf_of;
  std::vector<GbdtPredictor::Tree> trees;
  trees.reserve(static_cast<std::size_t>(cfg_.n_estimators));
  for (int stage = 0; stage < cfg_.n_estimators; ++stage) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = data.y[i] - sigmoid(score[i]);
    auto tree = grow_tree(data, residual, cfg_, leaf_of);
    for (std::size_t i = 0; i < n; ++i) {
      score[i] += cfg_.learning_rate * tree[static_cast<std::size_t>(leaf_of[i])].value;
    }
    trees.push_back(std::move(tree));
  }
  return std::make_shared<GbdtPredictor>(cfg_, features.cols(), base, std::move(trees), false);
}

GbdtPredictor::GbdtPredictor(LearnerConfig cfg, Eigen::Index dim, double base_score, std::vector<Tree> trees,
                             bool degenerate)
    : cfg_(cfg), dim_(dim), base_score_(base_score), trees_(std::move(trees)), degenerate_(degenerate) {}

double GbdtPredictor::raw_score(std::span<const double> x) const {
  double s = base_score_;
  for (const auto& tree : trees_) {
    std::size_t k = 0;
    while (tree[k].feature >= 0) {
      k = static_cast<std::size_t>(x[static_cast<std::size_t>(tree[k].feature)] <= tree[k].threshold ? tree[k].left
                                                                                                       : tree[k].right);
    }
    s += cfg_.learning_rate * tree[k].value;
  }
  return s;
}

std::vector<double> GbdtPredictor::predict_proba(const RowMatrix& features) const {
  if (features.cols() != dim_ && features.rows() > 0) {
    throw DimensionError("predict: expected " + std::to_string(dim_) + " features, got " +
                         std::to_string(features.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = sigmoid(raw_score(row_span(features, i)));
  }
  return out;
}

void GbdtPredictor::write(std::ostream& out) const {
  const auto old_precision = out.precision(17);
  out << "gbdt\n";
  out << "dim " << dim_ << '\n';
  out << "config " << cfg_.n_estimators << ' ' << cfg_.max_depth << ' ' << cfg_.learning_rate << ' '
      << cfg_.min_samples_leaf << ' ' << cfg_.seed << '\n';
  out << "degenerate " << (degenerate_ ? 1 : 0) << '\n';
  out << "base_score " << base_score_ << '\n';
  out << "trees " << trees_.size() << '\n';
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    out << "tree " << t << ' ' << trees_[t].size() << '\n';
    for (const auto& node : trees_[t]) {
      out << node.feature << ' ' << node.threshold << ' ' << node.left << ' ' << node.right << ' ' << node.value
          << '\n';
    }
  }
  out << "end\n";
  out.precision(old_precision);
}

std::shared_ptr<const GbdtPredictor> GbdtPredictor::read(std::istream& in) {
  expect_token(in, "gbdt");
  Eigen::Index dim = 0;
  LearnerConfig cfg;
  int degenerate = 0;
  double base = 0.0;
  std::size_t n_trees = 0;
  expect_token(in, "dim");
  in >> dim;
  expect_token(in, "config");
  in >> cfg.n_estimators >> cfg.max_depth >> cfg.learning_rate >> cfg.min_samples_leaf >> cfg.seed;
  expect_token(in, "degenerate");
  in >> degenerate;
  expect_token(in, "base_score");
  in >> base;
  expect_token(in, "trees");
  in >> n_trees;
  if (!in) throw SchemaError("predictor dump: malformed header");
  std::vector<Tree> trees(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    std::size_t index = 0;
    std::size_t n_nodes = 0;
    expect_token(in, "tree");
    in >> index >> n_nodes;
    if (!in || index != t || n_nodes == 0) throw SchemaError("predictor dump: bad tree header");
    trees[t].resize(n_nodes);
    for (auto& node : trees[t]) {
      in >> node.feature >> node.threshold >> node.left >> node.right >> node.value;
      const auto limit = static_cast<int>(n_nodes);
      if (!in || node.feature >= dim ||
          (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= limit || node.right >= limit))) {
        throw SchemaError("predictor dump: bad node in tree " + std::to_string(t));
      }
    }
  }
  expect_token(in, "end");
  return std::make_shared<GbdtPredictor>(cfg, dim, base, std::move(trees), degenerate != 0);
}

std::shared_ptr<const Predictor> fit(const RowMatrix& features, std::span<const int> labels,
                                     const LearnerConfig& cfg) {
  return GbdtLearner(cfg).fit(features, labels);
}

std::vector<double> predict_proba(const Predictor& predictor, const RowMatrix& features) {
  return predictor.predict_proba(features);
}

std::shared_ptr<const Predictor> read_predictor(std::istream& in) {
  const auto pos = in.tellg();
  std::string kind;
  in >> kind;
  in.seekg(pos);
  if (kind == "gbdt") return GbdtPredictor::read(in);
  throw SchemaError("unknown predictor kind '" + kind + "'");
}

double sample_loss(double prediction, double label) {
  const double p = std::clamp(prediction, kProbClip, 1.0 - kProbClip);
  const double loss = -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
  return std::max(loss, 0.0);
}

double mean_log_loss(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("predictions and labels differ in length");
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += sample_loss(predictions[i], labels[i]);
  return total / static_cast<double>(predictions.size());
}

}  // namespace lara
