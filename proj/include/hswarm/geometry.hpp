#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace hswarm {

struct GeometryError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Planar vector in meters (or m/s when used as a velocity/command).
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 &operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2 &operator-=(Vec2 o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2 &operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline constexpr double norm_sq(Vec2 v) { return v.x * v.x + v.y * v.y; }
inline bool is_finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

inline Vec2 normalized(Vec2 v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw GeometryError("degenerate direction");
  return v / n;
}

/// Scales v down so that its norm does not exceed max_norm.
inline Vec2 clamp_norm(Vec2 v, double max_norm) {
  const double n = norm(v);
  if (n > max_norm && n > 0.0) return v * (max_norm / n);
  return v;
}

inline Vec2 from_polar(double radius, double angle) {
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

/// Angle of v in (-pi, pi], counter-clockwise from +x.
inline double angle_of(Vec2 v) {
  if (v.x == 0.0 && v.y == 0.0) throw GeometryError("degenerate direction");
  const double a = std::atan2(v.y, v.x);
  // atan2 returns -pi for (-x, -0.0); fold onto the closed end.
  return a == -std::numbers::pi ? std::numbers::pi : a;
}

/// Signed difference a - b wrapped into (-pi, pi].
inline double wrapped_angle_diff(double a, double b) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double d = std::remainder(a - b, two_pi);
  if (d <= -std::numbers::pi) d += two_pi;
  return d;
}

/// v rotated by +90 degrees (counter-clockwise).
inline Vec2 perpendicular(Vec2 v) {
  if (v.x == 0.0 && v.y == 0.0) throw GeometryError("degenerate direction");
  return {-v.y, v.x};
}

enum class Role : std::uint8_t { Worker, Guide };

inline const char *to_string(Role r) { return r == Role::Worker ? "worker" : "guide"; }

struct RobotId {
  std::uint32_t id = 0;
  Role role = Role::Worker;

  friend constexpr bool operator==(RobotId, RobotId) = default;
};

/// One robot sensed within communication range. relative_position is the
/// neighbor's location as seen from the observer (x_j - x_i).
struct NeighborRecord {
  RobotId id;
  Vec2 relative_position;
  Vec2 relative_velocity;  // v_j - v_i
  double distance = 0.0;
  double bearing = 0.0;  // world-frame angle of relative_position

  /// Unit vector pointing from the neighbor towards the observer.
  Vec2 away() const { return relative_position * (-1.0 / distance); }
};

inline NeighborRecord make_neighbor(RobotId id, Vec2 relative_position,
                                    Vec2 relative_velocity = {}) {
  const double d = norm(relative_position);
  return {id, relative_position, relative_velocity, d,
          d > 0.0 ? angle_of(relative_position) : 0.0};
}

/// Neighbor partition of N_i. fov and rfov are filtered copies of workers and
/// guides respectively.
struct NeighborSets {
  std::vector<NeighborRecord> all;
  std::vector<NeighborRecord> workers;
  std::vector<NeighborRecord> guides;
  std::vector<NeighborRecord> fov;
  std::vector<NeighborRecord> rfov;

  void clear() {
    all.clear();
    workers.clear();
    guides.clear();
    fov.clear();
    rfov.clear();
  }

  void add(const NeighborRecord &rec, double d_fov, double d_rfov) {
    all.push_back(rec);
    if (rec.id.role == Role::Worker) {
      workers.push_back(rec);
      if (rec.distance <= d_fov) fov.push_back(rec);
    } else {
      guides.push_back(rec);
      if (rec.distance <= d_rfov) rfov.push_back(rec);
    }
  }

  const NeighborRecord *find_worker(std::uint32_t id) const {
    for (const auto &n : workers)
      if (n.id.id == id) return &n;
    return nullptr;
  }
};

/// Builds the partitioned sets from a flat list of in-range records.
inline NeighborSets build_neighbor_sets(const std::vector<NeighborRecord> &in_range,
                                        double d_fov, double d_rfov) {
  NeighborSets s;
  for (const auto &r : in_range) s.add(r, d_fov, d_rfov);
  return s;
}

/// Local estimate of the worker center of mass relative to the observer.
struct CenterOfMassEstimate {
  Vec2 offset;
  int count = 0;

  bool defined() const { return count > 0; }
};

inline CenterOfMassEstimate center_of_mass(const std::vector<NeighborRecord> &workers) {
  CenterOfMassEstimate c;
  if (workers.empty()) return c;
  Vec2 sum;
  for (const auto &w : workers) sum += w.relative_position;
  c.count = static_cast<int>(workers.size());
  c.offset = sum / static_cast<double>(c.count);
  return c;
}

}  // namespace hswarm
