#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lara/types.hpp"

namespace lara {

struct FeatureRecord {
  std::int64_t timestamp = 0;  // epoch milliseconds
  double price = 0.0;
  std::vector<double> features;
};

/// Time-ordered feature matrix with prices, timestamps and optional binary
/// labels. Stored column-wise; immutable after construction.
///
/// Construction enforces: timestamps non-decreasing, prices > 0, every
/// feature finite, labels (if any) aligned and in {0, 1}.
class Dataset {
 public:
  Dataset() = default;

  /// An empty dataset that still remembers its feature dimension.
  explicit Dataset(Eigen::Index dim) : features_(0, dim) {}

  Dataset(std::vector<std::int64_t> timestamps, std::vector<double> prices, RowMatrix features,
          std::optional<std::vector<int>> labels = std::nullopt);

  std::size_t size() const { return timestamps_.size(); }
  bool empty() const { return timestamps_.empty(); }
  Eigen::Index dim() const { return features_.cols(); }

  const std::vector<std::int64_t>& timestamps() const { return timestamps_; }
  const std::vector<double>& prices() const { return prices_; }
  const RowMatrix& features() const { return features_; }

  bool has_labels() const { return labels_.has_value(); }
  /// Throws DataError when the dataset is unlabeled.
  const std::vector<int>& labels() const;

  FeatureRecord record(std::size_t i) const;

  /// Rows at `indices`, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_labels(std::vector<int> labels) const;

  std::size_t count_positive() const;
  double positive_ratio() const;

 private:
  std::vector<std::int64_t> timestamps_;
  std::vector<double> prices_;
  RowMatrix features_;
  std::optional<std::vector<int>> labels_;
};

enum class LabelMode { Long, Short, Magnitude };

struct LabelSpec {
  LabelMode mode = LabelMode::Magnitude;
  int horizon_steps = 1;   // Δ
  double threshold = 1e-3; // λ

  void validate() const;
};

struct SplitSpec {
  std::int64_t train_end = 0;
  std::int64_t valid_end = 0;

  void validate() const;
};

struct SplitResult {
  Dataset train;
  Dataset valid;
  Dataset test;
  std::vector<std::string> warnings;
};

/// Reads `timestamp,price,f0..f{dim-1}` CSV. An optional `label` column is
/// picked up when present; other extra columns are ignored. With no `dim`
/// the number of consecutive f<i> columns is used.
Dataset load_csv(const std::filesystem::path& path, std::optional<int> dim = std::nullopt);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Fixed-horizon labels on r_t = price[t+Δ] / price[t] - 1. The trailing Δ
/// records have no defined label and are dropped.
Dataset generate_labels(const Dataset& ds, const LabelSpec& spec);

/// Records with timestamp <= train_end go to train, <= valid_end to valid,
/// the rest to test. Empty partitions produce warnings, not errors.
SplitResult chronological_split(const Dataset& ds, const SplitSpec& spec);

/// Two isotropic Gaussian classes in the plane. Records alternate
/// positive / negative so that any chronological cut stays balanced.
Dataset synth_gaussian(int n_per_class, std::array<double, 2> mean_pos, std::array<double, 2> mean_neg,
                       double cov_scale, std::uint64_t seed);

/// Two-class workload where a few low-variance dimensions carry the class
/// signal and the rest are large, mutually correlated noise. Euclidean
/// neighborhoods are dominated by the noise; a metric that shrinks the noise
/// directions recovers the signal.
struct CorrelatedNoiseSpec {
  int n = 10000;
  double positive_ratio = 0.2;
  int signal_dims = 2;
  int noise_dims = 6;
  double signal_shift = 0.75;  // class means at +/- shift on each signal dim
  double noise_scale = 5.0;    // std dev of each noise dim
  double noise_corr = 0.7;     // pairwise correlation among noise dims

  void validate() const;
};

Dataset synth_correlated(const CorrelatedNoiseSpec& spec, std::uint64_t seed);

/// Indices kept by balance_classes, ascending.
std::vector<std::size_t> balanced_indices(std::span<const int> labels, std::uint64_t seed);

/// Subsamples the majority class without replacement down to the minority
/// count. Survivors keep their original order.
Dataset balance_classes(const Dataset& ds, std::uint64_t seed);

}  // namespace lara
