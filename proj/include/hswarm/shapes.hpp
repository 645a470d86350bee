#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hswarm/allocation.hpp"

namespace hswarm {

// Named shaping-target generators. Bearings and radii are hand-picked to give
// recognisable shapes, nothing more.
//
//   clover   - four lobe roots on the diagonals; guides share the roots evenly
//   dumbbell - guides pinch the waist from above and below; the end caps are
//              left free
//   circle   - guides evenly spaced around the cluster

namespace detail {

// Spreads `count` bearings symmetrically around `center`, `step` apart.
inline void spread(std::vector<ShapingTarget> &out, double center, int count, double step,
                   double radius) {
  for (int j = 0; j < count; ++j) {
    const double offset = (static_cast<double>(j) - 0.5 * static_cast<double>(count - 1)) * step;
    out.push_back({std::remainder(center + offset, 2.0 * std::numbers::pi), radius});
  }
}

}  // namespace detail

inline std::vector<ShapingTarget> clover_targets(int n_guides, double radius,
                                                 double spread_step = 0.3) {
  std::vector<ShapingTarget> t;
  constexpr double pi = std::numbers::pi;
  for (int root = 0; root < 4; ++root) {
    const int count = n_guides / 4 + (root < n_guides % 4 ? 1 : 0);
    detail::spread(t, pi / 4 + root * pi / 2, count, spread_step, radius);
  }
  return t;
}

inline std::vector<ShapingTarget> dumbbell_targets(int n_guides, double radius,
                                                   double spread_step = 0.45) {
  std::vector<ShapingTarget> t;
  constexpr double pi = std::numbers::pi;
  const int top = (n_guides + 1) / 2;
  detail::spread(t, pi / 2, top, spread_step, radius);
  detail::spread(t, -pi / 2, n_guides - top, spread_step, radius);
  return t;
}

inline std::vector<ShapingTarget> circle_targets(int n_guides, double radius) {
  std::vector<ShapingTarget> t;
  for (int i = 0; i < n_guides; ++i)
    t.push_back({std::remainder(2.0 * std::numbers::pi * i / n_guides, 2.0 * std::numbers::pi),
                 radius});
  return t;
}

inline std::vector<ShapingTarget> named_shape(std::string_view name, int n_guides,
                                              double radius) {
  if (n_guides <= 0) return {};
  if (name == "clover") return clover_targets(n_guides, radius);
  if (name == "dumbbell") return dumbbell_targets(n_guides, radius);
  if (name == "circle") return circle_targets(n_guides, radius);
  throw std::invalid_argument("unknown shape '" + std::string(name) + "'");
}

}  // namespace hswarm
