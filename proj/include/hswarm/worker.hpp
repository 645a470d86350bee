#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "hswarm/geometry.hpp"
#include "hswarm/potential.hpp"

namespace hswarm {

enum class WorkerMode : std::uint8_t { Loose = 0, Shape = 1, Rigid = 2 };

inline const char *to_string(WorkerMode m) {
  switch (m) {
    case WorkerMode::Loose: return "loose";
    case WorkerMode::Shape: return "shape";
    case WorkerMode::Rigid: return "rigid";
  }
  return "?";
}

/// The four guide-settable worker parameters. rho is stored directly as the
/// equilibrium distance d_rho.
struct WorkerParams {
  double rho = 0.8;
  double fov = 1.0;
  double rfov = 0.7;
  WorkerMode mode = WorkerMode::Loose;

  bool valid(double d_com) const { return rho > 0.0 && rho < fov && fov <= d_com && rfov > 0.0; }
};

struct WorkerGains {
  double alpha = 1.0;
  double beta = 1.0;
};

struct WorkerOptions {
  // Shape mode holds the snapshot distances; false falls back to d_rho.
  bool shape_uses_lock = true;
  // In Shape/Rigid mode, unlocked workers closer than d_rho still repel.
  bool repel_unlocked = true;
};

/// Snapshot of the field-of-view neighbors taken on entering Shape or Rigid
/// mode. Entries are kept sorted by id and only ever removed.
struct FormationLock {
  std::vector<std::pair<std::uint32_t, double>> entries;
  std::int64_t locked_at_tick = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  std::optional<double> distance_to(std::uint32_t id) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), id,
                               [](const auto &e, std::uint32_t v) { return e.first < v; });
    if (it == entries.end() || it->first != id) return std::nullopt;
    return it->second;
  }
  bool contains(std::uint32_t id) const { return distance_to(id).has_value(); }

  std::vector<std::uint32_t> lookup_ids() const {
    std::vector<std::uint32_t> ids;
    ids.reserve(entries.size());
    for (const auto &e : entries) ids.push_back(e.first);
    return ids;
  }

  friend bool operator==(const FormationLock &, const FormationLock &) = default;
};

inline FormationLock snapshot_lock(const NeighborSets &neighbors, const WorkerParams &params,
                                   std::int64_t tick) {
  FormationLock lock;
  lock.locked_at_tick = tick;
  for (const auto &n : neighbors.fov)
    if (n.distance < params.fov) lock.entries.emplace_back(n.id.id, n.distance);
  std::sort(lock.entries.begin(), lock.entries.end());
  return lock;
}

/// Control input u = alpha*w + beta*g for one worker.
inline Vec2 worker_control(const NeighborSets &neighbors, const WorkerParams &params,
                           const WorkerGains &gains, const FormationLock *lock,
                           const PotentialParams &pot, const WorkerOptions &opts = {}) {
  Vec2 w;
  int formation_count = 0;
  if (params.mode == WorkerMode::Loose || lock == nullptr) {
    for (const auto &n : neighbors.fov) {
      w += phi(n.distance - params.rho, pot) * n.away();
      ++formation_count;
    }
  } else {
    const bool use_lock_distance = params.mode == WorkerMode::Rigid || opts.shape_uses_lock;
    for (const auto &n : neighbors.workers) {
      if (auto target = lock->distance_to(n.id.id)) {
        const double rest = use_lock_distance ? *target : params.rho;
        w += phi(n.distance - rest, pot) * n.away();
        ++formation_count;
      } else if (opts.repel_unlocked && n.distance < params.rho) {
        w += phi_plus(n.distance - params.rho, pot) * n.away();
        ++formation_count;
      }
    }
  }
  if (formation_count > 0) w = w / static_cast<double>(formation_count);

  Vec2 g;
  for (const auto &n : neighbors.rfov) g += phi_plus(n.distance - params.rho, pot) * n.away();
  if (!neighbors.rfov.empty()) g = g / static_cast<double>(neighbors.rfov.size());

  return gains.alpha * w + gains.beta * g;
}

struct ModeTransition {
  WorkerParams params;
  std::optional<FormationLock> lock;
};

/// Switches mode. Entering Shape or Rigid snapshots a fresh lock; Loose drops
/// it; re-entering the current mode changes nothing.
inline ModeTransition transition_mode(const WorkerParams &current, WorkerMode new_mode,
                                      const NeighborSets &neighbors,
                                      std::optional<FormationLock> current_lock,
                                      std::int64_t tick = 0) {
  if (current.mode == new_mode) return {current, std::move(current_lock)};
  WorkerParams next = current;
  next.mode = new_mode;
  if (new_mode == WorkerMode::Loose) return {next, std::nullopt};
  return {next, snapshot_lock(neighbors, next, tick)};
}

/// Removes broken links: beyond d_FoV in Shape mode, out of communication in
/// Rigid mode. Removed entries never come back.
inline FormationLock prune_lock(const FormationLock &lock, const NeighborSets &neighbors,
                                const WorkerParams &params, double d_com) {
  FormationLock out;
  out.locked_at_tick = lock.locked_at_tick;
  out.entries.reserve(lock.entries.size());
  for (const auto &e : lock.entries) {
    const NeighborRecord *n = neighbors.find_worker(e.first);
    if (n == nullptr) continue;
    const bool broken = params.mode == WorkerMode::Rigid ? n->distance >= d_com
                                                         : n->distance > params.fov;
    if (!broken) out.entries.push_back(e);
  }
  return out;
}

}  // namespace hswarm
