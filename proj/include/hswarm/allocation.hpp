#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "hswarm/geometry.hpp"

namespace hswarm {

struct AllocationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One shaping task: a station at `bearing` and `radius` about the worker COM.
struct ShapingTarget {
  double bearing = 0.0;
  double radius = 0.0;
};

/// Self-reported cost rows, keyed by guide id. Rows are immutable once
/// published, so merging is a plain union.
using BidTable = std::map<std::uint32_t, std::vector<double>>;

/// guide id -> task index
using Assignment = std::map<std::uint32_t, int>;

struct AllocationState {
  BidTable bids;
  Assignment assignment;
  int stable_rounds = 0;
  // Row count of the table `assignment` was solved for. Rows only ever get
  // added, so an unchanged count means an unchanged table.
  std::size_t solved_rows = 0;
};

/// Distance from the guide to each task station, using the local COM estimate.
inline std::vector<double> compute_costs(const CenterOfMassEstimate &com,
                                         std::span<const ShapingTarget> tasks) {
  if (!com.defined()) throw AllocationError("center of mass undefined; allocation deferred");
  std::vector<double> costs;
  costs.reserve(tasks.size());
  for (const auto &t : tasks) costs.push_back(norm(com.offset + from_polar(t.radius, t.bearing)));
  return costs;
}

namespace detail {

inline double row_cost(const BidTable &bids, std::uint32_t guide, int task) {
  return bids.at(guide)[static_cast<std::size_t>(task)];
}

}  // namespace detail

/// Deterministic single assignment over a bid table.
///
/// Seeds with greedy matching (cheapest free pair first; ties by lower cost,
/// lower guide id, lower task index), then applies pairwise swaps and
/// three-way rotations while any of them strictly lowers the total. The result
/// depends only on the table contents.
inline Assignment solve_assignment(const BidTable &bids, int n_tasks) {
  Assignment out;
  if (bids.empty() || n_tasks <= 0) return out;

  std::vector<std::uint32_t> guides;
  for (const auto &[g, row] : bids)
    if (static_cast<int>(row.size()) == n_tasks) guides.push_back(g);

  std::vector<std::tuple<double, std::uint32_t, int>> pairs;
  pairs.reserve(guides.size() * static_cast<std::size_t>(n_tasks));
  for (std::uint32_t g : guides)
    for (int t = 0; t < n_tasks; ++t) pairs.emplace_back(detail::row_cost(bids, g, t), g, t);
  std::sort(pairs.begin(), pairs.end());

  // slot[i] = task of guides[i], or -1
  std::vector<int> slot(guides.size(), -1);
  std::vector<char> task_used(static_cast<std::size_t>(n_tasks), 0);
  auto index_of = [&](std::uint32_t g) {
    return static_cast<std::size_t>(std::lower_bound(guides.begin(), guides.end(), g) -
                                    guides.begin());
  };
  for (const auto &[c, g, t] : pairs) {
    const std::size_t gi = index_of(g);
    if (slot[gi] >= 0 || task_used[static_cast<std::size_t>(t)]) continue;
    slot[gi] = t;
    task_used[static_cast<std::size_t>(t)] = 1;
  }

  const std::size_t n = guides.size();
  auto cost = [&](std::size_t i, int t) {
    return t < 0 ? 0.0 : detail::row_cost(bids, guides[i], t);
  };
  constexpr double eps = 1e-12;
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i < n && !improved; ++i)
      for (std::size_t k = i + 1; k < n && !improved; ++k) {
        if (slot[i] < 0 || slot[k] < 0) continue;
        const double now = cost(i, slot[i]) + cost(k, slot[k]);
        if (cost(i, slot[k]) + cost(k, slot[i]) < now - eps) {
          std::swap(slot[i], slot[k]);
          improved = true;
        }
      }
    for (std::size_t i = 0; i < n && !improved; ++i)
      for (std::size_t j = i + 1; j < n && !improved; ++j)
        for (std::size_t k = j + 1; k < n && !improved; ++k) {
          if (slot[i] < 0 || slot[j] < 0 || slot[k] < 0) continue;
          const double now = cost(i, slot[i]) + cost(j, slot[j]) + cost(k, slot[k]);
          const int a = slot[i], b = slot[j], c = slot[k];
          if (cost(i, b) + cost(j, c) + cost(k, a) < now - eps) {
            slot[i] = b, slot[j] = c, slot[k] = a;
            improved = true;
          } else if (cost(i, c) + cost(j, a) + cost(k, b) < now - eps) {
            slot[i] = c, slot[j] = a, slot[k] = b;
            improved = true;
          }
        }
  }

  for (std::size_t i = 0; i < n; ++i)
    if (slot[i] >= 0) out.emplace(guides[i], slot[i]);
  return out;
}

inline double assignment_cost(const BidTable &bids, const Assignment &a) {
  double total = 0.0;
  for (const auto &[g, t] : a) total += detail::row_cost(bids, g, t);
  return total;
}

/// Both single-assignment constraints: at most one task per guide (by
/// construction of the map) and at most one guide per task.
inline bool is_injective(const Assignment &a) {
  std::vector<int> tasks;
  for (const auto &[g, t] : a) tasks.push_back(t);
  std::sort(tasks.begin(), tasks.end());
  return std::adjacent_find(tasks.begin(), tasks.end()) == tasks.end();
}

/// Merges received bid rows into `local`. Returns true if anything new arrived.
inline bool merge_bids(BidTable &local, const BidTable &remote) {
  bool changed = false;
  for (const auto &[g, row] : remote) changed |= local.emplace(g, row).second;
  return changed;
}

struct RoundResult {
  AllocationState state;
  BidTable digest;
};

/// One consensus round: merge inbox digests, re-solve, update the stability
/// counter and emit the full local table.
inline RoundResult consensus_round(const AllocationState &local,
                                   std::span<const BidTable> inbox, int n_tasks) {
  RoundResult r{local, {}};
  for (const auto &d : inbox) merge_bids(r.state.bids, d);
  const bool same_table = local.solved_rows > 0 && r.state.bids.size() == local.solved_rows;
  Assignment next = same_table ? local.assignment : solve_assignment(r.state.bids, n_tasks);
  r.state.solved_rows = r.state.bids.size();
  if (next == local.assignment && !next.empty()) {
    ++r.state.stable_rounds;
  } else {
    r.state.stable_rounds = 0;
  }
  r.state.assignment = std::move(next);
  r.digest = r.state.bids;
  return r;
}

inline bool allocation_done(const AllocationState &state, int n_guides, int quorum_rounds = 3) {
  if (static_cast<int>(state.bids.size()) < n_guides) return false;
  if (static_cast<int>(state.assignment.size()) != n_guides) return false;
  if (!is_injective(state.assignment)) return false;
  return state.stable_rounds >= quorum_rounds;
}

// Digest wire format: records of (guide_id u32, task_index u16, cost f64),
// little-endian, 14 bytes each.
inline std::vector<std::uint8_t> serialize_digest(const BidTable &bids) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  for (const auto &[g, row] : bids)
    for (std::size_t t = 0; t < row.size(); ++t) {
      put(g, 4);
      put(static_cast<std::uint16_t>(t), 2);
      put(std::bit_cast<std::uint64_t>(row[t]), 8);
    }
  return out;
}

inline BidTable parse_digest(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 14 != 0) throw AllocationError("digest length not a multiple of 14");
  auto get = [&](std::size_t at, int n) {
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
    return v;
  };
  BidTable out;
  for (std::size_t at = 0; at < bytes.size(); at += 14) {
    const auto g = static_cast<std::uint32_t>(get(at, 4));
    const auto t = static_cast<std::size_t>(get(at + 4, 2));
    const double c = std::bit_cast<double>(get(at + 6, 8));
    auto &row = out[g];
    if (row.size() <= t) row.resize(t + 1, std::numeric_limits<double>::quiet_NaN());
    row[t] = c;
  }
  return out;
}

struct OracleResult {
  std::vector<int> assignment;  // per row; -1 when the row is left unassigned
  double total = 0.0;
};

/// Exact minimiser by enumeration of column permutations. Rectangular input is
/// padded to square with dummy rows/columns that contribute nothing, so the
/// smaller side is always fully matched. Refuses n > 8.
inline OracleResult oracle_optimal_assignment(const std::vector<std::vector<double>> &costs) {
  const std::size_t rows = costs.size();
  const std::size_t cols = rows ? costs[0].size() : 0;
  const std::size_t n = std::max(rows, cols);
  if (n > 8) throw AllocationError("oracle refuses n > 8");
  OracleResult best;
  best.assignment.assign(rows, -1);
  if (n == 0) return best;
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  best.total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      if (static_cast<std::size_t>(perm[r]) < cols) total += costs[r][static_cast<std::size_t>(perm[r])];
    if (total < best.total) {
      best.total = total;
      for (std::size_t r = 0; r < rows; ++r)
        best.assignment[r] = static_cast<std::size_t>(perm[r]) < cols ? perm[r] : -1;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace hswarm
