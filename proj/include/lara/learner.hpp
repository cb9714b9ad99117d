#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "lara/types.hpp"

namespace lara {

struct LearnerConfig {
  int n_estimators = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_samples_leaf = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A trained binary probabilistic classifier.
class Predictor {
 public:
  virtual ~Predictor() = default;

  /// P(y = 1 | x) per row, each in [0, 1].
  virtual std::vector<double> predict_proba(const RowMatrix& features) const = 0;
  virtual Eigen::Index dim() const = 0;
  /// True when training saw a single class and a constant was emitted.
  virtual bool degenerate() const = 0;
  virtual void write(std::ostream& out) const = 0;
};

/// Fitting side of the classifier contract. The pipeline only talks to
/// Learner / Predictor, never to a concrete model.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::shared_ptr<const Predictor> fit(const RowMatrix& features, std::span<const int> labels) const = 0;
};

/// Gradient-boosted regression trees on the logistic loss with exact greedy
/// splits at midpoints between distinct feature values.
class GbdtLearner final : public Learner {
 public:
  explicit GbdtLearner(LearnerConfig cfg);
  std::shared_ptr<const Predictor> fit(const RowMatrix& features, std::span<const int> labels) const override;
  const LearnerConfig& config() const { return cfg_; }

 private:
  LearnerConfig cfg_;
};

class GbdtPredictor final : public Predictor {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;  // rows with x[feature] <= threshold go left
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  using Tree = std::vector<Node>;

  GbdtPredictor(LearnerConfig cfg, Eigen::Index dim, double base_score, std::vector<Tree> trees, bool degenerate);

  std::vector<double> predict_proba(const RowMatrix& features) const override;
  Eigen::Index dim() const override { return dim_; }
  bool degenerate() const override { return degenerate_; }
  void write(std::ostream& out) const override;

  /// Raw additive score (log-odds) for one row.
  double raw_score(std::span<const double> x) const;

  const LearnerConfig& config() const { return cfg_; }
  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }

  static std::shared_ptr<const GbdtPredictor> read(std::istream& in);

 private:
  LearnerConfig cfg_;
  Eigen::Index dim_;
  double base_score_;
  std::vector<Tree> trees_;
  bool degenerate_;
};

std::shared_ptr<const Predictor> fit(const RowMatrix& features, std::span<const int> labels,
                                     const LearnerConfig& cfg);

std::vector<double> predict_proba(const Predictor& predictor, const RowMatrix& features);

/// Reads any predictor produced by Predictor::write.
std::shared_ptr<const Predictor> read_predictor(std::istream& in);

/// Binary cross-entropy with the prediction clipped to [1e-7, 1 - 1e-7].
/// `label` may be soft (any value in [0, 1]).
double sample_loss(double prediction, double label);

/// Mean of sample_loss over rows.
double mean_log_loss(std::span<const double> predictions, std::span<const int> labels);

}  // namespace lara
