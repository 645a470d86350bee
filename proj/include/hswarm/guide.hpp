#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hswarm/allocation.hpp"
#include "hswarm/comms.hpp"
#include "hswarm/geometry.hpp"
#include "hswarm/potential.hpp"
#include "hswarm/worker.hpp"

namespace hswarm {

struct ShapingPlan {
  std::vector<ShapingTarget> targets;  // one (theta^s, d^s) per guide
  double d_sp = 0.6;
  double d_ss = 1.0;
  double v_s = 0.05;
  double theta_tol = 0.01;
  double dist_tol = 0.45;
  WorkerParams worker;  // broadcast to the workers at start
};

struct MovementPlan {
  std::vector<Vec2> waypoints;
  double arrival_tol = 0.5;
  double alpha_g = 1.0;
  double beta_g = 2.0;
  double gamma_g = 1.0;
  double com_standoff = 0.6;
  // Cap on the waypoint-attraction term.
  double cruise_speed = 0.05;
};

/// Tunables for the guide behaviours that the mission plans do not cover.
struct GuideParams {
  double follow_distance = 0.95;  // d^e
  double edge_speed = 0.1;
  double edge_min_speed = 0.01;
  double edge_slow_zone = 0.3;  // rad; edge speed ramps down inside this error
  double approach_speed = 0.05;
  double separation_gain = 50.0;
  double separation_min_speed = 0.02;
  double clearance = 0.5;  // guide-guide repulsion radius outside Separate
  double yield_radius = 1.0;  // edge following only yields to guides this close
  int yield_patience = 50;
  int pass_ticks = 60;
  int quorum_rounds = 3;
  std::int64_t barrier_settle = 20;
  std::int64_t barrier_timeout = 30000;
};

/// Fixed-capacity ring of recently followed neighbor ids.
template <class T, std::size_t N>
class RingBuffer {
 public:
  void push_back(const T &v) {
    data_[(head_ + size_) % N] = v;
    if (size_ < N) {
      ++size_;
    } else {
      head_ = (head_ + 1) % N;
    }
  }
  bool contains(const T &v) const {
    for (std::size_t i = 0; i < size_; ++i)
      if (data_[(head_ + i) % N] == v) return true;
    return false;
  }
  std::size_t size() const { return size_; }
  static constexpr std::size_t capacity() { return N; }
  const T &operator[](std::size_t i) const { return data_[(head_ + i) % N]; }

  friend bool operator==(const RingBuffer &a, const RingBuffer &b) {
    if (a.size_ != b.size_) return false;
    for (std::size_t i = 0; i < a.size_; ++i)
      if (!(a[i] == b[i])) return false;
    return true;
  }

 private:
  std::array<T, N> data_{};
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

struct EdgeFollowState {
  RingBuffer<std::uint32_t, 10> last_seen;
  std::optional<std::uint32_t> current_neighbor;
  std::optional<std::uint32_t> old_neighbor;
  double follow_distance = 0.95;
  // +1 circles clockwise around the cluster, -1 counter-clockwise.
  int direction = +1;
  std::optional<double> heading;
  std::optional<Vec2> last_com;
  int yield_ticks = 0;
  int pass_ticks = 0;
};

struct EdgeFollowResult {
  Vec2 move;  // un-normalised move vector
  EdgeFollowState state;
  bool yielded = false;
  bool lost = false;
};

/// One step of edge following around the worker cluster.
///
/// Yields (zero move) when a guide closer than yield_radius lies within pi/4
/// of the heading. Otherwise
/// follows the closest worker not followed recently; the neighbor currently
/// followed stays eligible until a fresh one is closer.
inline EdgeFollowResult edge_follow_step(const NeighborSets &neighbors, EdgeFollowState efs,
                                         const GuideParams &gp = {}) {
  EdgeFollowResult r;
  if (neighbors.workers.empty()) {
    r.lost = true;
    if (efs.last_com && norm_sq(*efs.last_com) > 0.0) r.move = normalized(*efs.last_com);
    r.state = efs;
    return r;
  }

  bool yield = false;
  if (efs.heading && efs.pass_ticks == 0) {
    for (const auto &g : neighbors.guides) {
      if (g.distance <= 0.0 || g.distance >= gp.yield_radius) continue;
      if (std::fabs(wrapped_angle_diff(g.bearing, *efs.heading)) < std::numbers::pi / 4) {
        yield = true;
        break;
      }
    }
  }

  const NeighborRecord *best = nullptr;
  const NeighborRecord *closest = nullptr;
  for (const auto &w : neighbors.workers) {
    if (closest == nullptr || w.distance < closest->distance) closest = &w;
    const bool eligible = !efs.last_seen.contains(w.id.id) || efs.current_neighbor == w.id.id;
    if (eligible && (best == nullptr || w.distance < best->distance)) best = &w;
  }
  if (best == nullptr) best = closest;

  efs.old_neighbor = efs.current_neighbor;
  efs.current_neighbor = best->id.id;
  if (efs.old_neighbor != efs.current_neighbor) efs.last_seen.push_back(best->id.id);

  if (efs.pass_ticks > 0) --efs.pass_ticks;
  if (yield) {
    if (++efs.yield_ticks >= gp.yield_patience) {
      efs.yield_ticks = 0;
      efs.pass_ticks = gp.pass_ticks;
    }
    r.yielded = true;
    r.state = efs;
    return r;
  }
  efs.yield_ticks = 0;

  const Vec2 x = best->relative_position;
  r.move = static_cast<double>(efs.direction) * perpendicular(x) +
           (best->distance - efs.follow_distance) * x;
  if (norm_sq(r.move) > 0.0) efs.heading = angle_of(r.move);
  r.state = efs;
  return r;
}

/// Repulsion away from guides closer than `radius`, with a minimum speed while
/// any are inside.
inline Vec2 guide_separation(const NeighborSets &neighbors, double radius, double gain,
                             double min_speed, const PotentialParams &pot) {
  Vec2 push;
  bool inside = false;
  for (const auto &g : neighbors.guides) {
    if (g.distance >= radius || g.distance <= 0.0) continue;
    inside = true;
    push += phi_plus(g.distance - radius, pot) * g.away();
  }
  push *= gain;
  if (inside) {
    const double n = norm(push);
    if (n > 0.0 && n < min_speed) push *= min_speed / n;
  }
  return push;
}

/// Drops the part of `command` that closes in on any guide nearer than `radius`.
inline Vec2 keep_clear(Vec2 command, const NeighborSets &neighbors, double radius) {
  for (const auto &g : neighbors.guides) {
    if (g.distance >= radius || g.distance <= 0.0) continue;
    const Vec2 toward = g.relative_position / g.distance;
    const double closing = dot(command, toward);
    if (closing > 0.0) command -= closing * toward;
  }
  return command;
}

enum class SetupStage : std::uint8_t { Separate, EdgeFollow, RadialApproach };

inline const char *to_string(SetupStage s) {
  switch (s) {
    case SetupStage::Separate: return "separate";
    case SetupStage::EdgeFollow: return "edge_follow";
    case SetupStage::RadialApproach: return "radial_approach";
  }
  return "?";
}

struct PhaseStep {
  Vec2 command;
  bool done = false;
  bool com_undefined = false;
};

/// Bearing of the guide about the worker COM, from the local COM estimate.
inline double bearing_about_com(const CenterOfMassEstimate &com) { return angle_of(-com.offset); }

/// Shaping setup: separate from the other guides to d_ss, edge-follow to the
/// assigned bearing, then move radially to the assigned COM distance.
/// Advances `stage` in place and falls through completed stages in one call.
inline PhaseStep shaping_setup_step(const NeighborSets &neighbors, const ShapingPlan &plan,
                                    const ShapingTarget &assigned, SetupStage &stage,
                                    EdgeFollowState &efs, const PotentialParams &pot,
                                    const GuideParams &gp = {}) {
  PhaseStep out;
  const CenterOfMassEstimate com = center_of_mass(neighbors.workers);

  if (stage == SetupStage::Separate) {
    const Vec2 push =
        guide_separation(neighbors, plan.d_ss, gp.separation_gain, gp.separation_min_speed, pot);
    if (norm_sq(push) > 0.0) {
      out.command = clamp_norm(push, gp.edge_speed);
      return out;
    }
    stage = SetupStage::EdgeFollow;
    efs.heading.reset();
  }

  if (!com.defined() || norm_sq(com.offset) == 0.0) {
    out.com_undefined = true;
    if (stage == SetupStage::EdgeFollow) {
      auto r = edge_follow_step(neighbors, efs, gp);
      efs = r.state;
      if (norm_sq(r.move) > 0.0) out.command = normalized(r.move) * gp.edge_speed;
    }
    return out;
  }
  efs.last_com = com.offset;
  const Vec2 clearance =
      guide_separation(neighbors, gp.clearance, gp.separation_gain, 0.0, pot);

  if (stage == SetupStage::EdgeFollow) {
    const double err = wrapped_angle_diff(bearing_about_com(com), assigned.bearing);
    if (std::fabs(err) >= plan.theta_tol) {
      // Reverse after an overshoot; moving clockwise (+1) lowers the bearing.
      efs.direction = err > 0.0 ? +1 : -1;
      auto r = edge_follow_step(neighbors, efs, gp);
      efs = r.state;
      if (norm_sq(r.move) > 0.0) {
        const double ramp = std::min(1.0, std::fabs(err) / gp.edge_slow_zone);
        const double speed = std::max(gp.edge_min_speed, gp.edge_speed * ramp);
        out.command = normalized(r.move) * speed + clearance;
      }
      return out;
    }
    stage = SetupStage::RadialApproach;
  }

  const double dist = norm(com.offset);
  const double derr = dist - assigned.radius;
  if (std::fabs(derr) >= plan.dist_tol) {
    const Vec2 inward = com.offset / dist;
    out.command = (derr > 0.0 ? inward : -inward) * gp.approach_speed + clearance;
    return out;
  }
  out.done = true;
  return out;
}

/// Shaping: move radially at speed v_s until the COM distance is within
/// dist_tol of d_sp.
inline PhaseStep shaping_step(const NeighborSets &neighbors, const ShapingPlan &plan) {
  PhaseStep out;
  const CenterOfMassEstimate com = center_of_mass(neighbors.workers);
  if (!com.defined() || norm_sq(com.offset) == 0.0) {
    out.com_undefined = true;
    return out;
  }
  const double dist = norm(com.offset);
  const double err = dist - plan.d_sp;
  if (std::fabs(err) < plan.dist_tol) {
    out.done = true;
    return out;
  }
  const Vec2 inward = com.offset / dist;
  out.command = (err > 0.0 ? inward : -inward) * plan.v_s;
  return out;
}

/// Angle of the guide about the worker COM measured from the COM->target axis.
/// nullopt when the axis or the COM is degenerate.
inline std::optional<double> station_bearing(const CenterOfMassEstimate &com, Vec2 self_position,
                                             Vec2 target) {
  if (!com.defined() || norm_sq(com.offset) == 0.0) return std::nullopt;
  const Vec2 axis = target - (self_position + com.offset);
  if (norm_sq(axis) == 0.0) return std::nullopt;
  return wrapped_angle_diff(angle_of(-com.offset), angle_of(axis));
}

struct MovementTerms {
  Vec2 to_target;   // g
  Vec2 com_keep;    // c
  Vec2 alignment;   // a
  Vec2 command;     // alpha_g*g + beta_g*c + gamma_g*a
};

/// Movement law u = alpha_g*g + beta_g*c + gamma_g*a.
///
/// g pulls along the COM->waypoint vector (the guide's own position when no
/// COM is in view) with magnitude |phi(distance)| capped at the cruise speed,
/// so all guides share one translation; c regulates the COM distance to
/// com_standoff; a is a unit tangent whose sign drives the station bearing
/// back to `assigned_station`.
inline MovementTerms movement_step(const NeighborSets &neighbors, const MovementPlan &plan,
                                   Vec2 self_position, Vec2 target,
                                   std::optional<double> assigned_station,
                                   const PotentialParams &pot) {
  MovementTerms t;
  const CenterOfMassEstimate com = center_of_mass(neighbors.workers);
  const Vec2 from = com.defined() ? self_position + com.offset : self_position;
  const Vec2 to_target = target - from;
  const double dist = norm(to_target);
  if (dist > 0.0)
    t.to_target = to_target / dist * std::min(std::fabs(phi(dist, pot)), plan.cruise_speed);

  if (com.defined() && norm_sq(com.offset) > 0.0) {
    const double cd = norm(com.offset);
    t.com_keep = phi(cd - plan.com_standoff, pot) * (-com.offset / cd);
    if (assigned_station) {
      if (auto now = station_bearing(com, self_position, target)) {
        const double err = wrapped_angle_diff(*now, *assigned_station);
        const double p = err > 0.0 ? 1.0 : (err < 0.0 ? -1.0 : 0.0);
        t.alignment = p * perpendicular(com.offset / cd);
      }
    }
  }
  t.command = plan.alpha_g * t.to_target + plan.beta_g * t.com_keep + plan.gamma_g * t.alignment;
  return t;
}

enum class GuidePhase : std::uint8_t { TaskAllocation, ShapingSetup, Shaping, Movement, Done };

inline const char *to_string(GuidePhase p) {
  switch (p) {
    case GuidePhase::TaskAllocation: return "task_allocation";
    case GuidePhase::ShapingSetup: return "shaping_setup";
    case GuidePhase::Shaping: return "shaping";
    case GuidePhase::Movement: return "movement";
    case GuidePhase::Done: return "done";
  }
  return "?";
}

struct GuideFsmState {
  GuidePhase phase = GuidePhase::TaskAllocation;
  SetupStage setup = SetupStage::Separate;
  int waypoint_index = 0;
  bool barrier_pending = false;
  std::int64_t pending_since = 0;
  std::int64_t entered_at = 0;
};

/// Barrier tag for the state a guide is completing.
inline std::string barrier_tag(const GuideFsmState &s) {
  if (s.phase == GuidePhase::Movement) return "movement_" + std::to_string(s.waypoint_index);
  return to_string(s.phase);
}

struct GuideMemory {
  GuideFsmState fsm;
  AllocationState alloc;
  bool bid_published = false;
  int task = -1;
  EdgeFollowState efs;
  std::optional<double> station;
  bool started = false;
};

struct GuideContext {
  std::int64_t tick = 0;
  std::uint32_t self_id = 0;
  Vec2 position;
  const NeighborSets *neighbors = nullptr;
  StigmergyStore *store = nullptr;
  std::span<const std::uint32_t> roster;
  const ShapingPlan *shaping = nullptr;
  const MovementPlan *movement = nullptr;
  const GuideParams *params = nullptr;
  const PotentialParams *potential = nullptr;
};

struct GuideEvent {
  std::int64_t tick = 0;
  std::uint32_t guide = 0;
  std::string kind;    // "transition", "barrier_post", "lost", ...
  std::string detail;
};

struct GuideStep {
  Vec2 command;
  bool aborted = false;
  std::string diagnostic;
  std::vector<GuideEvent> events;
};

namespace detail {

inline void enter_phase(GuideMemory &mem, GuidePhase next, const GuideContext &ctx,
                        GuideStep &out) {
  out.events.push_back({ctx.tick, ctx.self_id, "transition",
                        std::string(to_string(mem.fsm.phase)) + "->" + to_string(next)});
  mem.fsm.phase = next;
  mem.fsm.entered_at = ctx.tick;
  mem.fsm.barrier_pending = false;
  switch (next) {
    case GuidePhase::ShapingSetup:
      mem.fsm.setup = SetupStage::Separate;
      mem.efs = EdgeFollowState{};
      mem.efs.follow_distance = ctx.params->follow_distance;
      break;
    case GuidePhase::Shaping:
      ctx.store->put(keys::mode, static_cast<double>(WorkerMode::Shape), ctx.self_id, ctx.tick);
      break;
    case GuidePhase::Movement:
      ctx.store->put(keys::mode, static_cast<double>(WorkerMode::Rigid), ctx.self_id, ctx.tick);
      mem.fsm.waypoint_index = 0;
      mem.station.reset();
      break;
    default:
      break;
  }
}

inline void post(GuideMemory &mem, const GuideContext &ctx, GuideStep &out) {
  const std::string tag = barrier_tag(mem.fsm);
  barrier_post(*ctx.store, tag, ctx.self_id, ctx.tick);
  mem.fsm.barrier_pending = true;
  mem.fsm.pending_since = ctx.tick;
  out.events.push_back({ctx.tick, ctx.self_id, "barrier_post", tag});
}

}  // namespace detail

/// One FSM step for a guide. Mutates only the guide's own memory and its own
/// stigmergy replica.
inline GuideStep fsm_tick(const GuideContext &ctx, GuideMemory &mem) {
  GuideStep out;
  const NeighborSets &nb = *ctx.neighbors;
  const GuideParams &gp = *ctx.params;
  const ShapingPlan &shaping = *ctx.shaping;
  const MovementPlan &movement = *ctx.movement;

  if (!mem.started) {
    mem.started = true;
    mem.fsm.entered_at = ctx.tick;
    ctx.store->put(keys::rho, shaping.worker.rho, ctx.self_id, ctx.tick);
    ctx.store->put(keys::fov, shaping.worker.fov, ctx.self_id, ctx.tick);
    ctx.store->put(keys::rfov, shaping.worker.rfov, ctx.self_id, ctx.tick);
    ctx.store->put(keys::mode, static_cast<double>(WorkerMode::Loose), ctx.self_id, ctx.tick);
  }

  if (mem.fsm.phase == GuidePhase::Done) return out;

  if (mem.fsm.barrier_pending) {
    const std::string tag = barrier_tag(mem.fsm);
    const auto effective = barrier_effective_tick(*ctx.store, tag, ctx.roster, gp.barrier_settle);
    if (effective && ctx.tick >= *effective) {
      out.events.push_back({ctx.tick, ctx.self_id, "barrier_release", tag});
      switch (mem.fsm.phase) {
        case GuidePhase::TaskAllocation:
          detail::enter_phase(mem, GuidePhase::ShapingSetup, ctx, out);
          break;
        case GuidePhase::ShapingSetup:
          detail::enter_phase(mem, GuidePhase::Shaping, ctx, out);
          break;
        case GuidePhase::Shaping:
          detail::enter_phase(mem, GuidePhase::Movement, ctx, out);
          break;
        case GuidePhase::Movement:
          mem.fsm.barrier_pending = false;
          if (++mem.fsm.waypoint_index >= static_cast<int>(movement.waypoints.size()))
            detail::enter_phase(mem, GuidePhase::Done, ctx, out);
          break;
        case GuidePhase::Done:
          break;
      }
      return out;
    }
    if (ctx.tick - mem.fsm.pending_since > gp.barrier_timeout) {
      out.aborted = true;
      out.diagnostic = "barrier '" + tag + "' timed out for guide " + std::to_string(ctx.self_id);
      return out;
    }
    // Standby. During movement the guide keeps regulating around the cluster.
    if (mem.fsm.phase != GuidePhase::Movement) return out;
  }

  switch (mem.fsm.phase) {
    case GuidePhase::TaskAllocation: {
      const int n_tasks = static_cast<int>(shaping.targets.size());
      if (!mem.bid_published) {
        const auto com = center_of_mass(nb.workers);
        if (com.defined()) {
          mem.alloc.bids[ctx.self_id] = compute_costs(com, shaping.targets);
          mem.bid_published = true;
        } else if (!nb.all.empty()) {
          // No worker in sight: close in on the nearest robot until one shows up.
          const NeighborRecord *near = &nb.all.front();
          for (const auto &n : nb.all)
            if (n.distance < near->distance) near = &n;
          if (near->distance > gp.clearance)
            out.command = normalized(near->relative_position) * gp.approach_speed;
        }
      }
      mem.alloc = consensus_round(mem.alloc, std::span<const BidTable>{}, n_tasks).state;
      if (!mem.fsm.barrier_pending &&
          allocation_done(mem.alloc, static_cast<int>(ctx.roster.size()), gp.quorum_rounds)) {
        mem.task = mem.alloc.assignment.at(ctx.self_id);
        out.events.push_back(
            {ctx.tick, ctx.self_id, "assigned", "task " + std::to_string(mem.task)});
        detail::post(mem, ctx, out);
      }
      break;
    }
    case GuidePhase::ShapingSetup: {
      const ShapingTarget &target = shaping.targets.at(static_cast<std::size_t>(mem.task));
      const SetupStage before = mem.fsm.setup;
      PhaseStep s = shaping_setup_step(nb, shaping, target, mem.fsm.setup, mem.efs,
                                       *ctx.potential, gp);
      if (mem.fsm.setup != before)
        out.events.push_back({ctx.tick, ctx.self_id, "setup_stage", to_string(mem.fsm.setup)});
      out.command = s.command;
      if (s.done) {
        out.command = {};
        detail::post(mem, ctx, out);
      }
      break;
    }
    case GuidePhase::Shaping: {
      PhaseStep s = shaping_step(nb, shaping);
      out.command = s.command;
      if (s.done) detail::post(mem, ctx, out);
      break;
    }
    case GuidePhase::Movement: {
      const Vec2 target = movement.waypoints.at(static_cast<std::size_t>(mem.fsm.waypoint_index));
      const auto com = center_of_mass(nb.workers);
      if (!mem.station) mem.station = station_bearing(com, ctx.position, target);
      MovementTerms m = movement_step(nb, movement, ctx.position, target, mem.station,
                                      *ctx.potential);
      out.command = m.command +
                    guide_separation(nb, gp.clearance, gp.separation_gain, 0.0, *ctx.potential);
      if (!mem.fsm.barrier_pending && com.defined() &&
          norm(ctx.position + com.offset - target) < movement.arrival_tol)
        detail::post(mem, ctx, out);
      break;
    }
    case GuidePhase::Done:
      break;
  }
  out.command = keep_clear(out.command, nb, gp.clearance);
  return out;
}

}  // namespace hswarm
