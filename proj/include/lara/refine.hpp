#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "lara/learner.hpp"

namespace lara {

enum class RefineMode { HardFlip, ConvexBlend };
enum class Combiner { Last, Vote };

struct RefineConfig {
  int iterations = 7;   // K
  double ratio = 0.05;  // r
  RefineMode mode = RefineMode::HardFlip;
  Combiner combiner = Combiner::Vote;
  LearnerConfig learner;

  void validate() const;
};

/// The K + 1 iterated predictors and the per-round bookkeeping of label
/// refinement.
struct Ensemble {
  std::vector<std::shared_ptr<const Predictor>> predictors;
  Combiner combiner = Combiner::Vote;
  RefineMode mode = RefineMode::HardFlip;
  double ratio = 0.0;
  std::vector<std::vector<double>> label_history;  // y^0 .. y^K
  std::vector<std::size_t> flip_counts;            // one per refinement round
  std::vector<double> epsilons;                    // one per refinement round

  int iterations() const { return static_cast<int>(predictors.size()) - 1; }
};

/// The (N - floor(ratio * N))-th smallest loss, so that at most
/// floor(ratio * N) losses are strictly greater.
double epsilon_threshold(std::span<const double> losses, double ratio);

/// y_j <- y_j + (1 - 2 y_j) * 1(loss_j > eps).
std::vector<int> flip_labels(std::span<const int> labels, std::span<const double> losses, double eps);

/// y_j <- alpha_j * y_j + (1 - alpha_j) * f_j.
std::vector<double> refurbish_convex(std::span<const double> labels, std::span<const double> predictions,
                                     std::span<const int> alphas);

/// Iterative refinement labeling: fit, score per-sample losses against the
/// current labels, relabel the highest-loss fraction `ratio`, refit; K times.
Ensemble ra_label(const RowMatrix& features, std::span<const int> labels, const RefineConfig& cfg,
                  const Learner& learner);
Ensemble ra_label(const RowMatrix& features, std::span<const int> labels, const RefineConfig& cfg);

/// Last: the final predictor. Vote: arithmetic mean over all predictors.
std::vector<double> ensemble_predict(const Ensemble& ensemble, const RowMatrix& features);

void write_ensemble(const Ensemble& ensemble, std::ostream& out);
Ensemble read_ensemble(std::istream& in);
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble load_ensemble(const std::filesystem::path& path);

}  // namespace lara
