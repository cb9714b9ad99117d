#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lara/attention.hpp"
#include "lara/backtest.hpp"
#include "lara/dataset.hpp"
#include "lara/metric.hpp"
#include "lara/neighbors.hpp"
#include "lara/refine.hpp"

namespace lara {

enum class MetricChoice { Sdml, Identity, InverseCovariance };

struct PipelineConfig {
  // Data source: a CSV path, "synth" (two Gaussians) or "synth-correlated".
  std::string input = "synth";
  std::optional<int> dim;
  LabelSpec label;
  std::optional<std::int64_t> train_end;
  std::optional<std::int64_t> valid_end;

  int n_per_class = 400;
  std::array<double, 2> mean_pos{-2.0, 2.0};
  std::array<double, 2> mean_neg{2.0, -2.0};
  double cov_scale = 8.0;
  CorrelatedNoiseSpec correlated;
  int test_records = 4000;  // synth-correlated test set size

  bool use_attention = true;
  bool use_refine = true;
  MetricChoice metric_choice = MetricChoice::Sdml;
  bool balance_selected = true;

  MetricLearnConfig metric;
  AttentionConfig attention;
  AnnParams ann;
  RefineConfig refine;

  std::size_t top_n = 100;
  int hold = 1;
  std::optional<double> profit_threshold;  // defaults to label.threshold
  std::optional<Side> side;                // defaults from label.mode
  double risk_free = 0.0;
  std::int64_t day_ms = kMillisPerDay;

  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "lara_out";

  bool synthetic() const { return input == "synth" || input == "synth-correlated"; }

  /// Sets one field from its kebab-case key. Throws ConfigError on unknown
  /// keys or malformed values.
  void set(const std::string& key, const std::string& value);

  void validate() const;
};

/// Every key accepted by PipelineConfig::set, with a one-line description.
const std::vector<std::pair<std::string, std::string>>& pipeline_keys();

/// Flat `key = value` file; `#` starts a comment.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

PipelineConfig config_from_settings(const std::map<std::string, std::string>& settings);

struct PipelineResult {
  BacktestReport report;
  std::size_t train_records = 0;
  std::size_t balanced_train_records = 0;
  std::size_t selected_train_records = 0;
  std::size_t test_records = 0;
  std::size_t selected_test_records = 0;
  bool metric_converged = true;
  std::vector<std::string> warnings;
};

/// Offsets added to the global seed for each stage.
namespace seed_offset {
inline constexpr std::uint64_t kSynthTrain = 1;
inline constexpr std::uint64_t kSynthTest = 2;
inline constexpr std::uint64_t kBalance = 3;
inline constexpr std::uint64_t kMetric = 4;
inline constexpr std::uint64_t kIndex = 5;
inline constexpr std::uint64_t kLearner = 6;
inline constexpr std::uint64_t kBalanceSelected = 7;
}  // namespace seed_offset

/// load/synth -> label -> split -> balance -> metric -> index ->
/// train-phase selection -> label refinement -> test-phase selection ->
/// ensemble predict -> top-N backtest. Writes report.txt, ensemble.txt and
/// (with attention) selection.csv into cfg.out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace lara
