#pragma once

#include <cmath>

namespace hswarm {

/// Harmonic bonding potential phi(d) = a0 - k*d*|d|/2.
///
/// The closed form is written so that phi(d) < 0 for d > 0 and phi(d) > 0 for
/// d < 0 when a0 = 0: applied along the unit vector from a neighbor to the
/// robot, positive displacements (too far) attract and negative ones repel.
/// Setting `printed_sign` flips to a0 + k*d*|d|/2 for experiments only.
struct PotentialParams {
  double k = 0.02;
  double a0 = 0.0;
  bool printed_sign = false;
};

inline double phi(double d, const PotentialParams &p) {
  if (d == 0.0) return p.a0;
  const double mag = 0.5 * p.k * d * std::fabs(d);
  return p.printed_sign ? p.a0 + mag : p.a0 - mag;
}

/// Repulsion-only branch: phi(d) for d < 0, zero otherwise.
inline double phi_plus(double d, const PotentialParams &p) {
  return d < 0.0 ? phi(d, p) : 0.0;
}

/// Trapezoidal integral of phi (or phi_plus) over [d_from, d_to], step <= 1e-3.
inline double potential_energy(double d_from, double d_to, const PotentialParams &p,
                               bool repulsive_only) {
  if (d_from == d_to) return 0.0;
  const double span = d_to - d_from;
  const auto steps = static_cast<long>(std::ceil(std::fabs(span) / 1e-3));
  const double h = span / static_cast<double>(steps);
  auto f = [&](double d) { return repulsive_only ? phi_plus(d, p) : phi(d, p); };
  double acc = 0.5 * (f(d_from) + f(d_to));
  for (long i = 1; i < steps; ++i) acc += f(d_from + h * static_cast<double>(i));
  return acc * h;
}

}  // namespace hswarm
