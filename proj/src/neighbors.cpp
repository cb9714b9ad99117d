#include "lara/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <random>

#include "lara/error.hpp"

namespace lara {

// Reusable visited-marker arrays so concurrent queries do not share state.
class AnnIndex::VisitedPool {
 public:
  explicit VisitedPool(std::size_t n) : n_(n) {}

  struct Lease {
    std::vector<Mark> marks;
    Mark epoch = 0;
  };

  Lease acquire() {
    std::lock_guard<std::mutex> lock(mu_);
    if (free_.empty()) return Lease{std::vector<Mark>(n_, 0), 0};
    Lease lease = std::move(free_.back());
    free_.pop_back();
    return lease;
  }

  void release(Lease lease) {
    std::lock_guard<std::mutex> lock(mu_);
    free_.push_back(std::move(lease));
  }

 private:
  std::size_t n_;
  std::mutex mu_;
  std::vector<Lease> free_;
};

void AnnParams::validate() const {
  if (max_links < 2) throw ParameterError("max_links must be >= 2");
  if (ef_construction < max_links) throw ParameterError("ef_construction must be >= max_links");
  if (ef_search < 1) throw ParameterError("ef_search must be >= 1");
}

double squared_l2(std::span<const double> a, std::span<const double> b) {
  const std::size_t d = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= d; j += 4) {
    const double t0 = a[j] - b[j];
    const double t1 = a[j + 1] - b[j + 1];
    const double t2 = a[j + 2] - b[j + 2];
    const double t3 = a[j + 3] - b[j + 3];
    s0 += t0 * t0;
    s1 += t1 * t1;
    s2 += t2 * t2;
    s3 += t3 * t3;
  }
  for (; j < d; ++j) {
    const double t = a[j] - b[j];
    s0 += t * t;
  }
  return (s0 + s1) + (s2 + s3);
}

AnnIndex::AnnIndex(AnnIndex&&) noexcept = default;
AnnIndex& AnnIndex::operator=(AnnIndex&&) noexcept = default;
AnnIndex::~AnnIndex() = default;

const double* AnnIndex::coords(std::uint32_t id) const {
  return reinterpret_cast<const double*>(base_.data() + id * block_bytes_ + coord_offset_);
}

double AnnIndex::dist_to(std::span<const double> q, std::uint32_t id) const {
  return squared_l2(q, {coords(id), q.size()});
}

double AnnIndex::dist_between(std::uint32_t a, std::uint32_t b) const {
  const auto d = static_cast<std::size_t>(dim());
  return squared_l2({coords(a), d}, {coords(b), d});
}

std::size_t AnnIndex::capacity(int level) const {
  return static_cast<std::size_t>(level == 0 ? 2 * params_.max_links : params_.max_links);
}

std::uint32_t* AnnIndex::link_slot(std::uint32_t id, int level) {
  if (level == 0) return reinterpret_cast<std::uint32_t*>(base_.data() + id * block_bytes_);
  return upper_links_[id].data() + static_cast<std::size_t>(level - 1) * (capacity(1) + 1);
}

std::span<const std::uint32_t> AnnIndex::links(std::uint32_t id, int level) const {
  const std::uint32_t* block = level == 0
                                   ? reinterpret_cast<const std::uint32_t*>(base_.data() + id * block_bytes_)
                                   : upper_links_[id].data() + static_cast<std::size_t>(level - 1) * (capacity(1) + 1);
  return {block + 1, block[0]};
}

std::uint32_t AnnIndex::greedy_descend(std::span<const double> q, std::uint32_t entry, int from_level,
                                       int to_level) const {
  Candidate cur{dist_to(q, entry), entry};
  for (int level = from_level; level >= to_level; --level) {
    bool moved = true;
    while (moved) {
      moved = false;
      for (std::uint32_t n : links(cur.id, level)) {
        const Candidate c{dist_to(q, n), n};
        if (c < cur) {
          cur = c;
          moved = true;
        }
      }
    }
  }
  return cur.id;
}

std::vector<AnnIndex::Candidate> AnnIndex::search_layer(std::span<const double> q, std::uint32_t entry,
                                                        std::size_t ef, int level,
                                                        std::vector<Mark>& visited,
                                                        Mark& epoch) const {
  if (++epoch == 0) {
    std::fill(visited.begin(), visited.end(), 0);
    epoch = 1;
  }
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
  std::priority_queue<Candidate> best;

  const Candidate start{dist_to(q, entry), entry};
  visited[entry] = epoch;
  frontier.push(start);
  best.push(start);
  while (!frontier.empty()) {
    const Candidate c = frontier.top();
    if (best.size() >= ef && best.top() < c) break;
    frontier.pop();
    const auto adj = links(c.id, level);
    for (std::uint32_t n : adj) {
      __builtin_prefetch(&visited[n]);
      __builtin_prefetch(coords(n));
    }
    for (std::uint32_t n : adj) {
      if (visited[n] == epoch) continue;
      visited[n] = epoch;
      const Candidate cn{dist_to(q, n), n};
      if (best.size() < ef || cn < best.top()) {
        frontier.push(cn);
        best.push(cn);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top();
    best.pop();
  }
  return out;
}

// Keeps a candidate only if it is closer to the base point than to every
// neighbor already kept. `candidates` must be sorted ascending.
std::vector<AnnIndex::Candidate> AnnIndex::select_heuristic(std::vector<Candidate> candidates,
                                                            std::size_t m) const {
  if (candidates.size() <= m) return candidates;
  std::vector<Candidate> kept;
  kept.reserve(m);
  for (const Candidate& c : candidates) {
    bool diverse = true;
    for (const Candidate& k : kept) {
      if (dist_between(c.id, k.id) < c.dist) {
        diverse = false;
        break;
      }
    }
    if (diverse) {
      kept.push_back(c);
      if (kept.size() >= m) break;
    }
  }
  return kept;
}

void AnnIndex::insert(std::uint32_t id, int level, std::vector<Mark>& visited, Mark& epoch) {
  if (id == 0) {
    entry_point_ = 0;
    max_level_ = level;
    return;
  }
  const auto q = row_span(points_, id);
  std::uint32_t ep = entry_point_;
  if (level < max_level_) ep = greedy_descend(q, ep, max_level_, level + 1);

  const auto connect = static_cast<std::size_t>(params_.max_links);
  for (int lc = std::min(level, max_level_); lc >= 0; --lc) {
    auto found = search_layer(q, ep, static_cast<std::size_t>(params_.ef_construction), lc, visited, epoch);
    ep = found.front().id;
    const auto chosen = select_heuristic(std::move(found), connect);

    std::uint32_t* own = link_slot(id, lc);
    own[0] = static_cast<std::uint32_t>(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) own[i + 1] = chosen[i].id;

    const std::size_t cap = capacity(lc);
    for (const Candidate& nb : chosen) {
      std::uint32_t* theirs = link_slot(nb.id, lc);
      if (theirs[0] < cap) {
        theirs[1 + theirs[0]] = id;
        ++theirs[0];
        continue;
      }
      for (std::uint32_t i = 0; i < theirs[0]; ++i) __builtin_prefetch(coords(theirs[1 + i]));
      std::vector<Candidate> pool;
      pool.reserve(cap + 1);
      pool.push_back({nb.dist, id});
      for (std::uint32_t i = 0; i < theirs[0]; ++i) pool.push_back({dist_between(nb.id, theirs[1 + i]), theirs[1 + i]});
      std::sort(pool.begin(), pool.end());
      const auto pruned = select_heuristic(std::move(pool), cap);
      theirs[0] = static_cast<std::uint32_t>(pruned.size());
      for (std::size_t i = 0; i < pruned.size(); ++i) theirs[1 + i] = pruned[i].id;
    }
  }
  if (level > max_level_) {
    entry_point_ = id;
    max_level_ = level;
  }
}

AnnIndex AnnIndex::build(RowMatrix points, const AnnParams& params) {
  params.validate();
  if (points.rows() == 0) throw EmptyInputError("cannot build an index over zero points");
  if (points.rows() > std::numeric_limits<std::uint32_t>::max()) throw ParameterError("too many points");

  AnnIndex index;
  index.points_ = std::move(points);
  index.params_ = params;
  const std::size_t n = index.size();

  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double level_scale = 1.0 / std::log(static_cast<double>(params.max_links));
  index.levels_.resize(n);
  index.upper_links_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = 1.0 - uniform(rng);  // (0, 1]
    const int level = static_cast<int>(std::floor(-std::log(u) * level_scale));
    index.levels_[i] = level;
    if (level > 0) index.upper_links_[i].assign(static_cast<std::size_t>(level) * (index.capacity(1) + 1), 0);
  }
  const std::size_t link_bytes = (index.capacity(0) + 1) * sizeof(std::uint32_t);
  index.coord_offset_ = (link_bytes + alignof(double) - 1) / alignof(double) * alignof(double);
  index.block_bytes_ = index.coord_offset_ + static_cast<std::size_t>(index.dim()) * sizeof(double);
  index.base_.assign(n * index.block_bytes_, std::byte{0});
  for (std::size_t i = 0; i < n; ++i) {
    std::memcpy(index.base_.data() + i * index.block_bytes_ + index.coord_offset_,
                index.points_.data() + i * static_cast<std::size_t>(index.dim()),
                static_cast<std::size_t>(index.dim()) * sizeof(double));
  }

  std::vector<Mark> visited(n, 0);
  Mark epoch = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index.insert(static_cast<std::uint32_t>(i), index.levels_[i], visited, epoch);
  }
  index.pool_ = std::make_unique<VisitedPool>(n);
  return index;
}

NeighborSet AnnIndex::search(std::span<const double> query, std::size_t k, std::size_t ef,
                             std::optional<std::size_t> exclude_id) const {
  if (static_cast<Eigen::Index>(query.size()) != dim()) throw DimensionError("query dimension does not match index");
  NeighborSet out;
  if (k == 0) return out;

  const std::uint32_t ep = greedy_descend(query, entry_point_, max_level_, 1);
  const std::size_t beam = std::max(ef, k + (exclude_id ? 1 : 0));
  auto lease = pool_->acquire();
  const auto found = search_layer(query, ep, beam, 0, lease.marks, lease.epoch);
  pool_->release(std::move(lease));

  for (const Candidate& c : found) {
    if (exclude_id && c.id == *exclude_id) continue;
    out.ids.push_back(c.id);
    out.sq_dists.push_back(c.dist);
    if (out.ids.size() == k) break;
  }
  return out;
}

NeighborSet k_neighbor(const AnnIndex& index, std::span<const double> query, std::size_t k,
                       std::optional<std::size_t> exclude_id) {
  if (k < 1) throw ParameterError("k must be >= 1");
  return index.search(query, k, static_cast<std::size_t>(index.params().ef_search), exclude_id);
}

NeighborSet r_neighbor(const AnnIndex& index, std::span<const double> query, std::size_t k, double radius,
                       std::optional<std::size_t> exclude_id) {
  if (!(radius > 0.0)) throw ParameterError("radius must be > 0");
  NeighborSet all = k_neighbor(index, query, k, exclude_id);
  NeighborSet out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.sq_dists[i] < radius) {
      out.ids.push_back(all.ids[i]);
      out.sq_dists.push_back(all.sq_dists[i]);
    }
  }
  return out;
}

NeighborSet brute_force_knn(const RowMatrix& points, std::span<const double> query, std::size_t k,
                            std::optional<std::size_t> exclude_id) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (points.rows() == 0) throw EmptyInputError("brute-force search over zero points");
  if (static_cast<Eigen::Index>(query.size()) != points.cols()) {
    throw DimensionError("query dimension does not match points");
  }
  std::vector<std::pair<double, std::size_t>> all;
  all.reserve(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto id = static_cast<std::size_t>(i);
    if (exclude_id && id == *exclude_id) continue;
    all.emplace_back(squared_l2(query, row_span(points, i)), id);
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  NeighborSet out;
  for (std::size_t i = 0; i < take; ++i) {
    out.ids.push_back(all[i].second);
    out.sq_dists.push_back(all[i].first);
  }
  return out;
}

}  // namespace lara
