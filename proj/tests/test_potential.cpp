#include <gtest/gtest.h>

#include <cmath>

#include "hswarm/potential.hpp"

using namespace hswarm;

namespace {
const PotentialParams pot{};  // k = 0.02, a0 = 0
}

TEST(Phi, Examples) {
  EXPECT_EQ(phi(0.0, pot), 0.0);
  EXPECT_NEAR(phi(1.0, pot), -0.01, 1e-15);
  EXPECT_NEAR(phi(-1.0, pot), 0.01, 1e-15);
}

TEST(Phi, OddAndSignPattern) {
  for (int i = 1; i <= 1000; ++i) {
    const double d = 0.005 * i;
    ASSERT_LT(phi(d, pot), 0.0);
    ASSERT_GT(phi(-d, pot), 0.0);
    ASSERT_EQ(phi(d, pot), -phi(-d, pot));
  }
}

TEST(Phi, PrintedSignFlips) {
  PotentialParams p;
  p.printed_sign = true;
  EXPECT_NEAR(phi(1.0, p), 0.01, 1e-15);
}

TEST(Phi, LipschitzOnBoundedInterval) {
  // |phi'(d)| = k|d| <= 5k on [-5, 5]
  const double bound = 5.0 * pot.k;
  for (int i = 0; i < 10000; ++i) {
    const double a = -5.0 + 10.0 * i / 10000.0;
    const double b = a + 1e-3;
    ASSERT_LE(std::fabs(phi(b, pot) - phi(a, pot)), bound * 1e-3 * (1 + 1e-9) + 1e-18);
  }
}

TEST(PhiPlus, Examples) {
  EXPECT_EQ(phi_plus(0.5, pot), 0.0);
  EXPECT_NEAR(phi_plus(-0.5, pot), 0.0025, 1e-15);
  EXPECT_EQ(phi_plus(0.0, pot), 0.0);
}

TEST(PotentialEnergy, Examples) {
  EXPECT_EQ(potential_energy(0.3, 0.3, pot, false), 0.0);
  EXPECT_NEAR(potential_energy(0.0, 1.0, pot, false), -pot.k / 6.0, 1e-6);
  EXPECT_EQ(potential_energy(0.2, 3.0, pot, true), 0.0);
}

TEST(PotentialEnergy, MatchesClosedForm) {
  // integral of -k d|d|/2 from a to b is -k/6 (b^2|b| - a^2|a|)
  auto closed = [](double a, double b) {
    return -pot.k / 6.0 * (b * b * std::fabs(b) - a * a * std::fabs(a));
  };
  for (double a : {-2.0, -0.7, 0.0, 0.4})
    for (double b : {-1.1, 0.3, 1.7})
      EXPECT_NEAR(potential_energy(a, b, pot, false), closed(a, b), 1e-6) << a << " " << b;
}
