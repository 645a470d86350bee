#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hswarm/guide.hpp"
#include "hswarm/potential.hpp"
#include "hswarm/shapes.hpp"
#include "hswarm/worker.hpp"

namespace hswarm {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Square [b, a]^2 used for initial placement.
struct InitRegion {
  double a = 0.0;
  double b = 0.0;
};

/// Guides start outside the worker region, between `inner` and `outer`
/// meters from the nearest worker.
struct GuideBand {
  double inner = 0.5;
  double outer = 1.5;
};

/// Half-width of the default placement square for N robots.
inline double default_init_half_width(int n) {
  return std::sqrt(0.9155 * static_cast<double>(n) / 0.1) / 2.0 + 4.0;
}

struct ScenarioConfig {
  std::string name = "scenario";
  int n_workers = 50;
  int n_guides = 4;

  // "clover", "dumbbell", "circle" or "explicit" (then shaping.targets is used)
  std::string shape = "clover";
  double shape_radius = 2.0;

  ShapingPlan shaping;
  MovementPlan movement{{Vec2{10.0, 0.0}}};
  // Waypoints are offsets from the initial worker COM when true.
  bool waypoints_relative = true;

  PotentialParams potential;
  WorkerGains gains{1000.0, 1000.0};
  WorkerOptions worker_options;
  GuideParams guide;

  double d_com = 2.0;
  // Guide perception radius for worker/guide positions; 0 means d_com.
  double guide_range = 0.0;
  double v_max = 0.5;
  double tick_seconds = 0.1;
  double robot_radius = 0.07;
  std::int64_t max_ticks = 60000;
  std::uint64_t seed = 0;

  std::optional<InitRegion> init_region;
  std::optional<GuideBand> guide_band;

  double loss_rate = 0.0;
  double sensing_noise = 0.0;  // std-dev of Gaussian noise on relative positions

  int log_every = 1;
  bool log_messages = false;
  bool energy_trace = false;

  InitRegion resolved_init_region() const {
    if (init_region) return *init_region;
    const double a = default_init_half_width(n_workers);
    return {a, -a};
  }

  /// The per-guide targets, generated from `shape` unless it is "explicit".
  std::vector<ShapingTarget> resolved_targets() const {
    if (shape == "explicit") return shaping.targets;
    return named_shape(shape, n_guides, shape_radius);
  }

  void validate() const {
    auto fail = [](const std::string &m) { throw ConfigError(m); };
    if (n_workers < 0) fail("n_workers must be >= 0");
    if (n_guides < 0) fail("n_guides must be >= 0");
    if (shape != "explicit" && shape != "clover" && shape != "dumbbell" && shape != "circle")
      fail("unknown shape '" + shape + "'");
    if (shape == "explicit" && static_cast<int>(shaping.targets.size()) != n_guides)
      fail("explicit shape needs one target per guide");
    if (!(potential.k > 0.0)) fail("potential.k must be > 0");
    if (!(gains.alpha > 0.0) || !(gains.beta > 0.0)) fail("worker gains must be > 0");
    if (!shaping.worker.valid(d_com)) fail("worker params violate 0 < rho < fov <= d_com, rfov > 0");
    if (!(shaping.theta_tol > 0.0) || !(shaping.dist_tol > 0.0))
      fail("shaping tolerances must be > 0");
    if (n_guides > 0 && movement.waypoints.empty()) fail("movement.waypoints must not be empty");
    if (!(movement.alpha_g > 0.0) || !(movement.beta_g > 0.0) || !(movement.gamma_g > 0.0))
      fail("movement gains must be > 0");
    if (!(guide.follow_distance > 0.0)) fail("guide.follow_distance must be > 0");
    if (!(d_com > 0.0) || !(v_max > 0.0) || !(tick_seconds > 0.0) || !(robot_radius >= 0.0))
      fail("d_com, v_max and tick_seconds must be > 0");
    if (guide_range < 0.0) fail("guide_range must be >= 0");
    if (max_ticks < 0) fail("max_ticks must be >= 0");
    if (init_region && !(init_region->a > init_region->b)) fail("init_region needs a > b");
    if (guide_band && !(guide_band->outer > guide_band->inner && guide_band->inner >= 0.0))
      fail("guide_band needs 0 <= inner < outer");
    if (loss_rate < 0.0 || loss_rate > 1.0) fail("loss_rate must lie in [0, 1]");
    if (sensing_noise < 0.0) fail("sensing_noise must be >= 0");
    if (log_every < 1) fail("log_every must be >= 1");
  }
};

}  // namespace hswarm
