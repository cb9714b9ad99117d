#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "lara/dataset.hpp"
#include "lara/types.hpp"

namespace lara {

/// Squared Mahalanobis form d_M(x, y) = (x - y)^T M (x - y) with M symmetric
/// PSD, together with a factor L satisfying L^T L = M so that
/// d_M(x, y) = ||L x - L y||^2.
class MahalanobisMetric {
 public:
  /// Validates symmetry and PSD-ness of `matrix`; throws NumericError otherwise.
  explicit MahalanobisMetric(Eigen::MatrixXd matrix);

  static MahalanobisMetric identity(Eigen::Index dim);

  Eigen::Index dim() const { return matrix_.rows(); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::MatrixXd& factor() const { return factor_; }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd factor_;
};

struct MetricLearnConfig {
  double sparsity_weight = 0.05;  // L1 on off-diagonal entries
  double logdet_weight = 1.0;
  int max_iters = 500;
  double step_size = 1e-2;
  double tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricLearnResult {
  MahalanobisMetric metric;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
};

/// Sparse metric learning over same-class pairs:
///
///   min_M  1/2 * mean_{y_i = y_j} d_M(x_i, x_j) - logdet_weight * log det M
///          + sparsity_weight * sum_{i != j} |M_ij|
///
/// solved by proximal gradient steps (soft-thresholded off-diagonals,
/// eigenvalues clipped at 1e-8) with backtracking from `step_size`,
/// starting at the identity. Returns the best iterate seen.
MetricLearnResult learn_sdml(const Dataset& ds, const MetricLearnConfig& cfg);

enum class BaselineKind { Identity, InverseCovariance };

/// Identity needs only `dim`; InverseCovariance needs `data` with more rows
/// than columns.
MahalanobisMetric baseline_metric(BaselineKind kind, Eigen::Index dim, const Dataset* data = nullptr);

double distance(const MahalanobisMetric& metric, std::span<const double> x, std::span<const double> y);

/// Returns points * L^T, so squared Euclidean distances between output rows
/// equal d_M between input rows.
RowMatrix transform(const MahalanobisMetric& metric, const RowMatrix& points);

/// First line `dim=<d>`, then d comma-separated rows of M.
void save_metric(const MahalanobisMetric& metric, const std::filesystem::path& path);
MahalanobisMetric load_metric(const std::filesystem::path& path);

}  // namespace lara
