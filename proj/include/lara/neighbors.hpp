#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "lara/types.hpp"

namespace lara {

struct AnnParams {
  int max_links = 16;  // per-node degree bound on upper layers; layer 0 allows twice this
  int ef_construction = 200;
  int ef_search = 100;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Neighbors in ascending (sq_dist, id) order.
struct NeighborSet {
  std::vector<std::size_t> ids;
  std::vector<double> sq_dists;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
};

/// Hierarchical navigable-small-world graph over points that have already
/// been mapped through the metric factor, so the graph works in plain
/// squared Euclidean distance. Immutable after build(); queries are safe to
/// run concurrently.
class AnnIndex {
 public:
  static AnnIndex build(RowMatrix points, const AnnParams& params);

  AnnIndex(AnnIndex&&) noexcept;
  AnnIndex& operator=(AnnIndex&&) noexcept;
  ~AnnIndex();

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  Eigen::Index dim() const { return points_.cols(); }
  const AnnParams& params() const { return params_; }
  const RowMatrix& points() const { return points_; }
  int max_level() const { return max_level_; }

  /// Up to k nearest indexed points with beam width max(ef, k + 1).
  NeighborSet search(std::span<const double> query, std::size_t k, std::size_t ef,
                     std::optional<std::size_t> exclude_id = std::nullopt) const;

 private:
  AnnIndex() = default;

  struct Candidate {
    double dist;
    std::uint32_t id;
    bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && id < o.id); }
    bool operator>(const Candidate& o) const { return o < *this; }
  };

  class VisitedPool;
  // Visit stamps; the array is cleared whenever the stamp wraps.
  using Mark = std::uint16_t;

  double dist_to(std::span<const double> q, std::uint32_t id) const;
  double dist_between(std::uint32_t a, std::uint32_t b) const;
  std::span<const std::uint32_t> links(std::uint32_t id, int level) const;
  std::uint32_t* link_slot(std::uint32_t id, int level);
  std::size_t capacity(int level) const;

  std::uint32_t greedy_descend(std::span<const double> q, std::uint32_t entry, int from_level, int to_level) const;
  std::vector<Candidate> search_layer(std::span<const double> q, std::uint32_t entry, std::size_t ef, int level,
                                      std::vector<Mark>& visited, Mark& epoch) const;
  std::vector<Candidate> select_heuristic(std::vector<Candidate> candidates, std::size_t m) const;
  void insert(std::uint32_t id, int level, std::vector<Mark>& visited, Mark& epoch);

  RowMatrix points_;
  AnnParams params_;
  std::vector<int> levels_;
  // Layer 0: one block per node, [count, slot_0 .. slot_{2M-1}] followed by
  // a copy of the node's coordinates, so a visit touches one region.
  std::vector<std::byte> base_;
  std::size_t block_bytes_ = 0;
  std::size_t coord_offset_ = 0;
  const double* coords(std::uint32_t id) const;
  // Layers >= 1: per node, (level) blocks of [count, slot_0 .. slot_{M-1}].
  std::vector<std::vector<std::uint32_t>> upper_links_;
  std::uint32_t entry_point_ = 0;
  int max_level_ = 0;
  std::unique_ptr<VisitedPool> pool_;
};

NeighborSet k_neighbor(const AnnIndex& index, std::span<const double> query, std::size_t k,
                       std::optional<std::size_t> exclude_id = std::nullopt);

/// k_neighbor filtered to sq_dist < radius (radius is on the squared form).
NeighborSet r_neighbor(const AnnIndex& index, std::span<const double> query, std::size_t k, double radius,
                       std::optional<std::size_t> exclude_id = std::nullopt);

/// Exact top-k by squared Euclidean distance; ties go to the lower index.
NeighborSet brute_force_knn(const RowMatrix& points, std::span<const double> query, std::size_t k,
                            std::optional<std::size_t> exclude_id = std::nullopt);

/// Squared Euclidean distance shared by the index and the exact oracle so
/// both produce bit-identical values.
double squared_l2(std::span<const double> a, std::span<const double> b);

}  // namespace lara
