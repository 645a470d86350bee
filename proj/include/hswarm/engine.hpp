#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hswarm/allocation.hpp"
#include "hswarm/comms.hpp"
#include "hswarm/geometry.hpp"
#include "hswarm/guide.hpp"
#include "hswarm/metrics.hpp"
#include "hswarm/rng.hpp"
#include "hswarm/scenario.hpp"
#include "hswarm/worker.hpp"

namespace hswarm {

struct RobotState {
  RobotId id;
  Vec2 position;
  Vec2 velocity;
  Vec2 control;
  WorkerParams worker_params;        // workers
  std::optional<FormationLock> lock;  // workers in Shape/Rigid
  std::optional<GuideMemory> guide;   // guides: FSM, edge-follow state, allocation
  StigmergyStore store;
  BidTable bids;  // relayed by every robot
};

struct MessageRecord {
  std::int64_t tick = 0;
  std::uint32_t from = 0;
  std::uint32_t to = 0;
  bool dropped = false;
};

/// Append-only record of a run.
struct WorldLog {
  std::vector<Frame> frames;
  std::vector<GuideEvent> events;
  std::vector<MessageRecord> messages;  // only with log_messages
  std::int64_t messages_delivered = 0;
  std::int64_t messages_dropped = 0;
  double min_pairwise_distance = std::numeric_limits<double>::infinity();
  std::int64_t collision_events = 0;
  std::optional<double> max_rigid_edge_error;
  std::vector<double> energy;
};

/// Per-frame state codes: worker modes as 0..2, guide phases as 10 + phase.
inline std::uint8_t state_code(const RobotState &r) {
  if (r.guide) return static_cast<std::uint8_t>(10 + static_cast<int>(r.guide->fsm.phase));
  return static_cast<std::uint8_t>(r.worker_params.mode);
}

inline const char *state_name(std::uint8_t code) {
  if (code >= 10) return to_string(static_cast<GuidePhase>(code - 10));
  return to_string(static_cast<WorkerMode>(code));
}

struct World {
  ScenarioConfig config;
  ShapingPlan shaping;     // targets and waypoints resolved
  MovementPlan movement;
  std::vector<RobotState> robots;  // index == robot id; workers first
  std::vector<std::uint32_t> roster;
  std::int64_t tick = 0;
  Rng rng{0};
  WorldLog log;

  bool completed = false;
  bool aborted = false;
  std::string diagnostic;
  Vec2 start_com;
  std::optional<std::int64_t> shaping_tick;  // Shaping -> Movement release
  std::optional<std::int64_t> final_tick;    // every guide done
  Snapshot at_shaping;
  Snapshot at_final;

  // Neighbor indices within d_com, sorted, from the last completed tick.
  std::vector<std::vector<std::uint32_t>> neighbors;
  // Snapshots broadcast at the end of the last tick.
  std::vector<std::shared_ptr<const StigmergyStore>> store_out;
  std::vector<std::shared_ptr<const BidTable>> bids_out;
  std::vector<std::uint64_t> store_out_rev;
  std::vector<std::size_t> bids_out_size;

  std::size_t n_workers() const { return static_cast<std::size_t>(config.n_workers); }
};

namespace detail {

inline Vec2 worker_com(const World &w) {
  Vec2 sum;
  for (std::size_t i = 0; i < w.n_workers(); ++i) sum += w.robots[i].position;
  return w.n_workers() ? sum / static_cast<double>(w.n_workers()) : Vec2{};
}

inline Snapshot worker_snapshot(const World &w) {
  Snapshot s;
  for (std::size_t i = 0; i < w.n_workers(); ++i)
    s.emplace(w.robots[i].id.id, w.robots[i].position);
  return s;
}

/// Neighbor lists within `radius` via a uniform grid. Each list is sorted by
/// index so downstream iteration order is fixed.
inline std::vector<std::vector<std::uint32_t>> neighbor_lists(
    const std::vector<RobotState> &robots, double radius) {
  const std::size_t n = robots.size();
  std::vector<std::vector<std::uint32_t>> out(n);
  if (n == 0) return out;
  struct Cell {
    std::int64_t cx, cy;
    std::uint32_t idx;
    auto operator<=>(const Cell &) const = default;
  };
  std::vector<Cell> cells(n);
  for (std::size_t i = 0; i < n; ++i)
    cells[i] = {static_cast<std::int64_t>(std::floor(robots[i].position.x / radius)),
                static_cast<std::int64_t>(std::floor(robots[i].position.y / radius)),
                static_cast<std::uint32_t>(i)};
  std::vector<Cell> sorted = cells;
  std::sort(sorted.begin(), sorted.end());
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < n; ++i) {
    const Cell &c = cells[i];
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = std::lower_bound(sorted.begin(), sorted.end(), Cell{c.cx + dx, c.cy + dy, 0});
        for (; it != sorted.end() && it->cx == c.cx + dx && it->cy == c.cy + dy; ++it) {
          if (it->idx == i) continue;
          if (norm_sq(robots[it->idx].position - robots[i].position) <= r2)
            out[i].push_back(it->idx);
        }
      }
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

inline void snapshot_outboxes(World &w) {
  for (std::size_t i = 0; i < w.robots.size(); ++i) {
    const RobotState &r = w.robots[i];
    if (!w.store_out[i] || w.store_out_rev[i] != r.store.revision()) {
      w.store_out[i] = std::make_shared<const StigmergyStore>(r.store);
      w.store_out_rev[i] = r.store.revision();
    }
    if (!w.bids_out[i] || w.bids_out_size[i] != r.bids.size()) {
      w.bids_out[i] = std::make_shared<const BidTable>(r.bids);
      w.bids_out_size[i] = r.bids.size();
    }
  }
}

inline void log_frame(World &w) {
  Frame f;
  f.tick = w.tick;
  f.positions.reserve(w.robots.size());
  f.states.reserve(w.robots.size());
  for (const auto &r : w.robots) {
    f.positions.push_back(r.position);
    f.states.push_back(state_code(r));
  }
  w.log.frames.push_back(std::move(f));
}

}  // namespace detail

/// Places robots and resolves plans. Workers are drawn uniformly from the
/// init region. With a guide band, guides are drawn outside that region at a
/// distance in [inner, outer] from the nearest worker; otherwise from the
/// region itself. No pair starts closer than 2r.
inline World init_world(const ScenarioConfig &config) {
  config.validate();
  World w;
  w.config = config;
  w.rng = Rng(config.seed);
  w.shaping = config.shaping;
  w.shaping.targets = config.resolved_targets();
  if (static_cast<int>(w.shaping.targets.size()) != config.n_guides)
    throw ConfigError("shape produced " + std::to_string(w.shaping.targets.size()) +
                      " targets for " + std::to_string(config.n_guides) + " guides");
  w.movement = config.movement;

  const InitRegion region = config.resolved_init_region();
  const double min_d2 = 4.0 * config.robot_radius * config.robot_radius;
  const std::size_t total = static_cast<std::size_t>(config.n_workers + config.n_guides);
  std::vector<Vec2> placed;
  placed.reserve(total);
  auto fits = [&](Vec2 p) {
    for (const auto &q : placed)
      if (norm_sq(p - q) < min_d2) return false;
    return true;
  };
  auto place = [&](auto draw, const char *what) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const Vec2 p = draw();
      if (fits(p)) {
        placed.push_back(p);
        return;
      }
    }
    throw ConfigError(std::string("cannot place ") + what +
                      " after 10000 attempts; region too dense");
  };
  auto in_region = [&] {
    const double x = w.rng.uniform(region.b, region.a);
    return Vec2{x, w.rng.uniform(region.b, region.a)};
  };
  for (int i = 0; i < config.n_workers; ++i) place(in_region, "worker");
  for (int i = 0; i < config.n_guides; ++i) {
    if (config.guide_band) {
      const GuideBand band = *config.guide_band;
      const double lo = region.b - band.outer;
      const double hi = region.a + band.outer;
      place(
          [&] {
            for (int tries = 0;; ++tries) {
              const Vec2 p{w.rng.uniform(lo, hi), w.rng.uniform(lo, hi)};
              const bool inside = p.x >= region.b && p.x <= region.a && p.y >= region.b &&
                                  p.y <= region.a;
              double nearest = std::numeric_limits<double>::infinity();
              for (std::size_t k = 0; k < w.n_workers(); ++k)
                nearest = std::min(nearest, norm(p - placed[k]));
              const bool in_band =
                  w.n_workers() == 0 || (nearest >= band.inner && nearest <= band.outer);
              if ((!inside && in_band) || tries >= 10000) return p;
            }
          },
          "guide");
    } else {
      place(in_region, "guide");
    }
  }

  w.robots.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    RobotState &r = w.robots[i];
    r.id = {static_cast<std::uint32_t>(i), i < w.n_workers() ? Role::Worker : Role::Guide};
    r.position = placed[i];
    r.worker_params = config.shaping.worker;
    if (r.id.role == Role::Guide) {
      r.guide.emplace();
      r.guide->efs.follow_distance = config.guide.follow_distance;
      w.roster.push_back(r.id.id);
    }
  }
  w.start_com = detail::worker_com(w);
  if (config.waypoints_relative)
    for (auto &p : w.movement.waypoints) p += w.start_com;

  w.neighbors = detail::neighbor_lists(w.robots, config.d_com);
  w.store_out.resize(total);
  w.bids_out.resize(total);
  w.store_out_rev.assign(total, 0);
  w.bids_out_size.assign(total, 0);
  detail::snapshot_outboxes(w);
  return w;
}

/// Applies guide-written worker parameters and returns the neighbor sets
/// filtered with the updated d_FoV/d_RFoV.
inline NeighborSets apply_worker_params(RobotState &r, const std::vector<NeighborRecord> &seen,
                                        double d_com, std::int64_t tick) {
  WorkerParams p = r.worker_params;
  if (auto v = r.store.get(keys::rho)) p.rho = *v;
  if (auto v = r.store.get(keys::fov)) p.fov = *v;
  if (auto v = r.store.get(keys::rfov)) p.rfov = *v;
  WorkerMode mode = p.mode;
  if (auto v = r.store.get(keys::mode))
    mode = static_cast<WorkerMode>(std::clamp(static_cast<int>(std::lround(*v)), 0, 2));
  if (!p.valid(d_com)) p = r.worker_params;  // ignore an inconsistent set

  const NeighborSets ns = build_neighbor_sets(seen, p.fov, p.rfov);
  ModeTransition t = transition_mode(p, mode, ns, std::move(r.lock), tick);
  r.worker_params = t.params;
  r.lock = std::move(t.lock);
  if (r.lock) r.lock = prune_lock(*r.lock, ns, r.worker_params, d_com);
  return ns;
}

/// Advances the world by one tick.
inline void step(World &w) {
  const ScenarioConfig &cfg = w.config;
  const std::size_t n = w.robots.size();
  const std::int64_t tick = w.tick + 1;

  // 1. Deliver last tick's broadcasts to robots that were in range.
  for (std::size_t r = 0; r < n; ++r) {
    RobotState &rx = w.robots[r];
    for (std::uint32_t s : w.neighbors[r]) {
      const bool dropped = cfg.loss_rate > 0.0 && w.rng.bernoulli(cfg.loss_rate);
      if (cfg.log_messages)
        w.log.messages.push_back({tick, s, static_cast<std::uint32_t>(r), dropped});
      if (dropped) {
        ++w.log.messages_dropped;
        continue;
      }
      ++w.log.messages_delivered;
      rx.store.merge(*w.store_out[s]);
      // A table holding every guide's row cannot grow any further.
      if (rx.bids.size() < w.roster.size() && !w.bids_out[s]->empty())
        merge_bids(rx.bids, *w.bids_out[s]);
    }
  }

  // 2. Neighbor lists from the current (pre-move) positions.
  w.neighbors = detail::neighbor_lists(w.robots, cfg.d_com);

  // 3. Controllers, each reading only pre-tick positions and its own state.
  // Guides may perceive further than they communicate.
  const double guide_range = cfg.guide_range > 0.0 ? cfg.guide_range : cfg.d_com;
  std::vector<NeighborRecord> seen;
  for (std::size_t i = 0; i < n; ++i) {
    RobotState &self = w.robots[i];
    seen.clear();
    auto sense = [&](std::uint32_t j) {
      const RobotState &other = w.robots[j];
      Vec2 rel = other.position - self.position;
      if (cfg.sensing_noise > 0.0)
        rel += Vec2{cfg.sensing_noise * w.rng.normal(), cfg.sensing_noise * w.rng.normal()};
      seen.push_back(make_neighbor(other.id, rel, other.velocity - self.velocity));
    };
    if (self.guide && guide_range > cfg.d_com) {
      const double r2 = guide_range * guide_range;
      for (std::uint32_t j = 0; j < n; ++j)
        if (j != i && norm_sq(w.robots[j].position - self.position) <= r2) sense(j);
    } else {
      for (std::uint32_t j : w.neighbors[i]) sense(j);
    }

    if (!self.guide) {
      const NeighborSets ns = apply_worker_params(self, seen, cfg.d_com, tick);
      self.control = worker_control(ns, self.worker_params, cfg.gains,
                                    self.lock ? &*self.lock : nullptr, cfg.potential,
                                    cfg.worker_options);
      continue;
    }

    const NeighborSets ns = build_neighbor_sets(seen, w.shaping.worker.fov, w.shaping.worker.rfov);
    GuideMemory &mem = *self.guide;
    merge_bids(mem.alloc.bids, self.bids);
    const GuidePhase before = mem.fsm.phase;
    GuideContext ctx{tick, self.id.id, self.position, &ns, &self.store, w.roster,
                     &w.shaping, &w.movement, &cfg.guide, &cfg.potential};
    GuideStep gs = fsm_tick(ctx, mem);
    merge_bids(self.bids, mem.alloc.bids);
    self.control = gs.command;
    for (auto &e : gs.events) w.log.events.push_back(std::move(e));
    if (gs.aborted && !w.aborted) {
      w.aborted = true;
      w.diagnostic = gs.diagnostic + " at tick " + std::to_string(tick);
    }
    if (before == GuidePhase::Shaping && mem.fsm.phase == GuidePhase::Movement && !w.shaping_tick)
      w.shaping_tick = tick;
  }

  // 4. Clamp and check.
  for (auto &r : w.robots) {
    if (!is_finite(r.control)) {
      if (!w.aborted) {
        w.aborted = true;
        w.diagnostic = std::string("non-finite control from ") + to_string(r.id.role) + " " +
                       std::to_string(r.id.id) + " at tick " + std::to_string(tick);
      }
      r.velocity = {};
      continue;
    }
    r.velocity = clamp_norm(r.control, cfg.v_max);
  }

  // 5. Integrate.
  for (auto &r : w.robots) r.position += r.velocity * cfg.tick_seconds;
  w.tick = tick;

  // 6. Logs and audits. Any pair now closer than 2r was within d_com before
  // the move, so the pre-move neighbor lists cover the collision scan.
  const double limit = 2.0 * cfg.robot_radius;
  bool collided = false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::uint32_t j : w.neighbors[i]) {
      if (j <= i) continue;
      const double d = norm(w.robots[i].position - w.robots[j].position);
      w.log.min_pairwise_distance = std::min(w.log.min_pairwise_distance, d);
      collided |= d < limit;
    }
  if (collided) ++w.log.collision_events;

  if (w.shaping_tick && !w.final_tick) {
    double worst = w.log.max_rigid_edge_error.value_or(0.0);
    for (std::size_t i = 0; i < w.n_workers(); ++i) {
      const RobotState &r = w.robots[i];
      if (r.worker_params.mode != WorkerMode::Rigid || !r.lock) continue;
      for (const auto &[j, rest] : r.lock->entries) {
        const double d = norm(w.robots[j].position - r.position);
        if (d < cfg.d_com) worst = std::max(worst, std::fabs(d - rest));
      }
    }
    w.log.max_rigid_edge_error = worst;
  }

  if (cfg.energy_trace) {
    std::vector<Vec2> pos, vel;
    for (std::size_t i = 0; i < w.n_workers(); ++i) {
      pos.push_back(w.robots[i].position);
      vel.push_back(w.robots[i].velocity);
    }
    w.log.energy.push_back(system_energy(pos, vel, w.shaping.worker, cfg.potential));
  }

  if (w.shaping_tick == tick) w.at_shaping = detail::worker_snapshot(w);
  if (!w.roster.empty() && !w.final_tick &&
      std::all_of(w.roster.begin(), w.roster.end(), [&](std::uint32_t g) {
        return w.robots[g].guide->fsm.phase == GuidePhase::Done;
      })) {
    w.final_tick = tick;
    w.at_final = detail::worker_snapshot(w);
    w.completed = true;
  }

  if (tick % cfg.log_every == 0 || w.completed || w.aborted) detail::log_frame(w);

  // 7. Broadcast snapshots for the next tick.
  detail::snapshot_outboxes(w);
}

/// Builds the metrics report from a finished (or stopped) world.
inline MetricsReport make_report(const World &w) {
  MetricsReport m;
  m.ticks = w.tick;
  m.completed = w.completed;
  m.aborted = w.aborted;
  m.diagnostic = w.diagnostic;
  m.shaping_tick = w.shaping_tick;
  m.final_tick = w.final_tick;
  m.state_durations = state_durations(w.log.events);
  m.min_pairwise_distance = w.log.min_pairwise_distance;
  m.collision_events = w.log.collision_events;
  m.max_rigid_edge_error = w.log.max_rigid_edge_error;
  m.energy_trace = w.log.energy;
  m.messages_delivered = w.log.messages_delivered;
  m.messages_dropped = w.log.messages_dropped;
  if (w.shaping_tick && w.final_tick && w.n_workers() >= 2) {
    m.distortion_raw = distortion(w.at_shaping, w.at_final);
    const double raw = *m.distortion_raw;
    m.distortion_normalized = normalize_distortions(std::span<const double>(&raw, 1))[0];
  }
  if (w.final_tick && !w.movement.waypoints.empty())
    m.final_com_error = detail::worker_com(w) - w.movement.waypoints.back();
  return m;
}

using ProgressFn = std::function<void(const World &)>;

/// Steps until every guide is done, the run aborts, or max_ticks is reached.
/// `progress` is called every 1000 ticks.
inline void run_world(World &w, const ProgressFn &progress = {}) {
  while (w.tick < w.config.max_ticks && !w.completed && !w.aborted) {
    step(w);
    if (progress && w.tick % 1000 == 0) progress(w);
  }
}

struct RunResult {
  World world;
  MetricsReport report;
};

inline RunResult run(const ScenarioConfig &config, const ProgressFn &progress = {}) {
  RunResult r{init_world(config), {}};
  run_world(r.world, progress);
  r.report = make_report(r.world);
  return r;
}

}  // namespace hswarm
