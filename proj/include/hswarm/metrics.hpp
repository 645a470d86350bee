#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hswarm/geometry.hpp"
#include "hswarm/guide.hpp"
#include "hswarm/potential.hpp"
#include "hswarm/worker.hpp"

namespace hswarm {

struct MetricsError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Worker positions keyed by id.
using Snapshot = std::map<std::uint32_t, Vec2>;

/// Mean pairwise change in inter-worker distance between two snapshots. The
/// double sum runs over ordered pairs, so each unordered pair counts twice.
/// With `signed_terms` the differences are summed without absolute values.
inline double distortion(const Snapshot &at_shaping, const Snapshot &at_final,
                         bool signed_terms = false) {
  if (at_shaping.size() != at_final.size())
    throw MetricsError("distortion: snapshots cover different worker sets");
  std::vector<Vec2> s, f;
  s.reserve(at_shaping.size());
  f.reserve(at_final.size());
  for (auto a = at_shaping.begin(), b = at_final.begin(); a != at_shaping.end(); ++a, ++b) {
    if (a->first != b->first) throw MetricsError("distortion: snapshots cover different worker sets");
    s.push_back(a->second);
    f.push_back(b->second);
  }
  const std::size_t n = s.size();
  if (n < 2) throw MetricsError("distortion needs at least two workers");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double diff = norm(s[i] - s[j]) - norm(f[i] - f[j]);
      sum += 2.0 * (signed_terms ? diff : std::fabs(diff));
    }
  return sum / static_cast<double>(n);
}

/// Divides by the batch maximum; an all-zero batch stays zero.
inline std::vector<double> normalize_distortions(std::span<const double> batch) {
  if (batch.empty()) throw MetricsError("normalize_distortions: empty batch");
  const double mx = *std::max_element(batch.begin(), batch.end());
  std::vector<double> out(batch.begin(), batch.end());
  if (mx > 0.0)
    for (double &v : out) v /= mx;
  else
    std::fill(out.begin(), out.end(), 0.0);
  return out;
}

/// One logged instant: positions indexed by robot id.
struct Frame {
  std::int64_t tick = 0;
  std::vector<Vec2> positions;
  std::vector<std::uint8_t> states;
};

struct CollisionAudit {
  double min_pairwise_distance = std::numeric_limits<double>::infinity();
  std::int64_t collision_events = 0;
};

/// Global minimum pairwise distance and the number of frames holding any pair
/// closer than 2r.
inline CollisionAudit audit_collisions(std::span<const Frame> frames, double robot_radius) {
  CollisionAudit a;
  const double limit = 2.0 * robot_radius;
  for (const auto &f : frames) {
    double frame_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.positions.size(); ++i)
      for (std::size_t j = i + 1; j < f.positions.size(); ++j)
        frame_min = std::min(frame_min, norm(f.positions[i] - f.positions[j]));
    a.min_pairwise_distance = std::min(a.min_pairwise_distance, frame_min);
    if (frame_min < limit) ++a.collision_events;
  }
  return a;
}

/// Largest |d_ij(t) - D_ij| over frames with tick in [from, to], for every
/// locked pair still within d_com. nullopt when no frame falls in the
/// interval.
inline std::optional<double> audit_rigid_edges(std::span<const Frame> frames,
                                               const std::map<std::uint32_t, FormationLock> &locks,
                                               std::int64_t from, std::int64_t to, double d_com) {
  std::optional<double> worst;
  for (const auto &f : frames) {
    if (f.tick < from || f.tick > to) continue;
    double m = worst.value_or(0.0);
    for (const auto &[i, lock] : locks)
      for (const auto &[j, rest] : lock.entries) {
        if (i >= f.positions.size() || j >= f.positions.size()) continue;
        const double d = norm(f.positions[i] - f.positions[j]);
        if (d < d_com) m = std::max(m, std::fabs(d - rest));
      }
    worst = m;
  }
  return worst;
}

/// Ticks spent in each guide phase, from "transition" events. A phase starts
/// at the first transition into it (tick 0 for task_allocation) and ends at
/// the first transition out of it. Phases never left are absent.
inline std::map<std::string, std::int64_t> state_durations(std::span<const GuideEvent> events) {
  std::map<std::string, std::int64_t> start{{to_string(GuidePhase::TaskAllocation), 0}};
  std::map<std::string, std::int64_t> end;
  for (const auto &e : events) {
    if (e.kind != "transition") continue;
    const auto arrow = e.detail.find("->");
    if (arrow == std::string::npos) continue;
    const std::string from = e.detail.substr(0, arrow);
    const std::string to = e.detail.substr(arrow + 2);
    if (auto it = end.find(from); it == end.end() || e.tick < it->second) end[from] = e.tick;
    if (auto it = start.find(to); it == start.end() || e.tick < it->second) start[to] = e.tick;
  }
  std::map<std::string, std::int64_t> out;
  for (const auto &[phase, t_end] : end)
    if (auto it = start.find(phase); it != start.end()) out[phase] = t_end - it->second;
  return out;
}

/// System energy J = U + T: the integral of the restoring force over every
/// worker pair within d_FoV plus the kinetic term of the commanded velocities.
inline double system_energy(std::span<const Vec2> positions, std::span<const Vec2> velocities,
                            const WorkerParams &params, const PotentialParams &pot) {
  double u = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const double d = norm(positions[i] - positions[j]);
      if (d > params.fov) continue;
      const double e = std::fabs(d - params.rho);
      u += pot.k * e * e * e / 6.0;
    }
  double t = 0.0;
  for (const auto &v : velocities) t += 0.5 * norm_sq(v);
  return u + t;
}

struct MetricsReport {
  std::optional<double> distortion_raw;
  std::optional<double> distortion_normalized;
  std::map<std::string, std::int64_t> state_durations;
  double min_pairwise_distance = std::numeric_limits<double>::infinity();
  std::optional<double> max_rigid_edge_error;  // nullopt: no Movement interval
  std::int64_t collision_events = 0;
  std::vector<double> energy_trace;
  // Run bookkeeping.
  std::int64_t ticks = 0;
  bool completed = false;
  bool aborted = false;
  std::string diagnostic;
  std::optional<std::int64_t> shaping_tick;
  std::optional<std::int64_t> final_tick;
  std::optional<Vec2> final_com_error;  // worker COM minus last waypoint
  std::int64_t messages_delivered = 0;
  std::int64_t messages_dropped = 0;
};

}  // namespace hswarm
