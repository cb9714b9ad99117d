#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lara/dataset.hpp"
#include "lara/metric.hpp"
#include "lara/neighbors.hpp"

namespace lara {

enum class NeighborScheme { KNeighbor, RNeighbor };
enum class AttentionWeight { Identical, ReciprocalDistance };

struct AttentionConfig {
  NeighborScheme scheme = NeighborScheme::KNeighbor;
  int k = 150;
  std::optional<double> radius;  // squared-form radius; RNeighbor only
  AttentionWeight weight = AttentionWeight::Identical;
  double thres = 0.5;
  bool exclude_self = true;  // training phase only

  void validate() const;
};

struct SelectionResult {
  std::vector<std::size_t> selected_ids;
  std::vector<double> p_hat;  // NaN where the neighborhood was empty
  std::size_t undefined_count = 0;

  bool defined(std::size_t i) const;
};

/// Reciprocal weights are 1 / (sq_dist + 1e-12).
inline constexpr double kReciprocalGuard = 1e-12;

/// Masked-attention estimate of P(y = 1) from a neighborhood. nullopt when
/// the neighborhood is empty.
std::optional<double> estimate_p(std::span<const int> neighbor_labels, std::span<const double> neighbor_sq_dists,
                                 AttentionWeight weight);

/// Queries `index` with every training point (excluding itself when
/// cfg.exclude_self) and keeps those with p_hat > thres. `index` must be
/// built over transform(metric, train.features()).
SelectionResult select_training(const Dataset& train, const MahalanobisMetric& metric, const AnnIndex& index,
                                const AttentionConfig& cfg);

/// Test-phase selection. Only test features are taken; neighbor labels come
/// from `train`.
SelectionResult select_testing(const RowMatrix& test_features, const Dataset& train,
                               const MahalanobisMetric& metric, const AnnIndex& index, const AttentionConfig& cfg);

/// `id,p_hat,selected` rows; undefined estimates are written as `undefined`.
void save_selection_csv(const SelectionResult& result, const std::filesystem::path& path);

}  // namespace lara
