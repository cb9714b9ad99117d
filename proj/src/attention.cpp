#include "lara/attention.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "lara/error.hpp"

namespace lara {

namespace {

NeighborSet neighborhood(const AnnIndex& index, std::span<const double> query, const AttentionConfig& cfg,
                         std::optional<std::size_t> exclude) {
  const auto k = static_cast<std::size_t>(cfg.k);
  if (cfg.scheme == NeighborScheme::RNeighbor) return r_neighbor(index, query, k, *cfg.radius, exclude);
  return k_neighbor(index, query, k, exclude);
}

SelectionResult run_selection(const RowMatrix& queries, const std::vector<int>& labels, const AnnIndex& index,
                              const AttentionConfig& cfg, bool exclude_self) {
  SelectionResult out;
  const auto n = static_cast<std::size_t>(queries.rows());
  out.p_hat.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> ys;
  for (std::size_t i = 0; i < n; ++i) {
    const auto exclude = exclude_self ? std::optional<std::size_t>(i) : std::nullopt;
    const auto nb = neighborhood(index, row_span(queries, static_cast<Eigen::Index>(i)), cfg, exclude);
    ys.clear();
    for (std::size_t id : nb.ids) ys.push_back(labels[id]);
    const auto p = estimate_p(ys, nb.sq_dists, cfg.weight);
    if (!p) {
      ++out.undefined_count;
      continue;
    }
    out.p_hat[i] = *p;
    if (*p > cfg.thres) out.selected_ids.push_back(i);
  }
  return out;
}

}  // namespace

void AttentionConfig::validate() const {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (!(thres >= 0.0 && thres <= 1.0)) throw ParameterError("thres must lie in [0, 1]");
  if (scheme == NeighborScheme::RNeighbor && !radius) throw ParameterError("R-Neighbor needs a radius");
  if (radius && !(*radius > 0.0)) throw ParameterError("radius must be > 0");
}

bool SelectionResult::defined(std::size_t i) const { return !std::isnan(p_hat.at(i)); }

std::optional<double> estimate_p(std::span<const int> neighbor_labels, std::span<const double> neighbor_sq_dists,
                                 AttentionWeight weight) {
  if (neighbor_labels.size() != neighbor_sq_dists.size()) {
    throw DimensionError("neighbor labels and distances differ in length");
  }
  if (neighbor_labels.empty()) return std::nullopt;
  if (weight == AttentionWeight::Identical) {
    double hits = 0.0;
    for (int y : neighbor_labels) hits += y;
    return hits / static_cast<double>(neighbor_labels.size());
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < neighbor_labels.size(); ++i) {
    const double w = 1.0 / (neighbor_sq_dists[i] + kReciprocalGuard);
    num += neighbor_labels[i] * w;
    den += w;
  }
  return std::clamp(num / den, 0.0, 1.0);
}

SelectionResult select_training(const Dataset& train, const MahalanobisMetric& metric, const AnnIndex& index,
                                const AttentionConfig& cfg) {
  cfg.validate();
  if (index.size() != train.size()) throw DimensionError("index does not cover the training set");
  return run_selection(transform(metric, train.features()), train.labels(), index, cfg, cfg.exclude_self);
}

SelectionResult select_testing(const RowMatrix& test_features, const Dataset& train,
                               const MahalanobisMetric& metric, const AnnIndex& index, const AttentionConfig& cfg) {
  cfg.validate();
  if (index.size() != train.size()) throw DimensionError("index does not cover the training set");
  return run_selection(transform(metric, test_features), train.labels(), index, cfg, false);
}

void save_selection_csv(const SelectionResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "id,p_hat,selected\n";
  std::size_t next = 0;
  for (std::size_t i = 0; i < result.p_hat.size(); ++i) {
    const bool selected = next < result.selected_ids.size() && result.selected_ids[next] == i;
    if (selected) ++next;
    out << i << ',';
    if (result.defined(i)) {
      out << result.p_hat[i];
    } else {
      out << "undefined";
    }
    out << ',' << (selected ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace lara
