#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ap/model.hpp"
#include "ap/timemap.hpp"

using namespace ap;
using namespace ap::timemap;

namespace {
const double kPi = M_PI;
const double kSqrt2 = std::sqrt(2.0);

// Crude independent quadrature for the left-branch transit of f = |s| at
// k = 2, rho = 0, where 2(rho - phi(s)) = s^2 + 4s: midpoint rule in the
// substituted variable s = x_* - sigma^2. Oracle for the closed form.
double oracle_tau_v_abs(double r) {
  const double x_star = -4.0;
  const double smax = std::sqrt(x_star - r);
  const int n = 200000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sig = smax * (i + 0.5) / n;
    const double s = x_star - sig * sig;
    acc += 2.0 * sig / std::sqrt(s * s + 4.0 * s) * (smax / n);
  }
  return 2.0 * acc;
}
}  // namespace

TEST_CASE("outer-line golden value pi/2 and its half") {
  const EnergyFrame fr(Nonlinearity::abs_value(), 0.0);
  const TimeResult full = outer_branch_time(fr, 8.0, 2.0 * kSqrt2);
  REQUIRE(!full.divergent);
  CHECK(full.value == doctest::Approx(kPi / 2.0).epsilon(1e-9));
  CHECK(std::abs(full.value - kPi / 2.0) < 1e-8);

  const TimeResult half = arc_time(fr, 8.0, 2.0 * kSqrt2, 4.0);
  REQUIRE(!half.divergent);
  CHECK(std::abs(half.value - kPi / 4.0) < 1e-8);
}

TEST_CASE("degenerate and divergent queries") {
  const EnergyFrame fr2(Nonlinearity::abs_value(), 2.0);
  CHECK(arc_time(fr2, 1.0, 0.5, 0.5).value == 0.0);

  // Lower limit is the saddle at its own level: logarithmic divergence.
  const TimeResult div = arc_time(fr2, 2.0, -2.0, 0.0);
  CHECK(div.divergent);

  // Interior zero of rho - phi.
  CHECK_THROWS_AS(arc_time(fr2, 0.0, -1.0, 1.0), std::domain_error);
}

TEST_CASE("isochronous closed orbits of f = |s| in the right half plane") {
  const EnergyFrame fr(Nonlinearity::abs_value(), 2.0);
  // rho = -1: orbit through 2 +- sqrt(2), entirely in x > 0.
  const TimeResult p = orbit_period(fr, -1.0);
  REQUIRE(!p.divergent);
  CHECK(std::abs(p.value - 2.0 * kPi) < 1e-8);

  for (double k : {1.0, 2.0, 3.5}) {
    const EnergyFrame frk(Nonlinearity::abs_value(), k);
    for (double frac : {0.15, 0.5, 0.85}) {
      // Levels whose left turning point stays in x > 0: rho in
      // (phi(x_s), phi(0)) = (-k^2/2, 0).
      const double rho = frk.phi_at_xs() * frac;
      const TimeResult pk = orbit_period(frk, rho);
      CHECK(pk.value == doctest::Approx(2.0 * kPi).epsilon(1e-8));
    }
  }
}

TEST_CASE("center limit of the period for sqrt1p") {
  const EnergyFrame fr(Nonlinearity::sqrt1p(), 2.0);
  // Linearization at the center: period -> 2 pi / sqrt(f'(x_s)).
  const double expected = 2.0 * kPi / std::sqrt(fr.f().derivative(fr.x_s()));
  CHECK(expected == doctest::Approx(6.47).epsilon(1e-2));
  const double rho = fr.phi_at_xs() + 1e-7;
  const TimeResult p = orbit_period(fr, rho);
  CHECK(p.value == doctest::Approx(expected).epsilon(1e-3));
}

TEST_CASE("period diverges toward the saddle level") {
  const EnergyFrame fr(Nonlinearity::sqrt1p(), 2.0);
  double prev = 0.0;
  for (int n = 2; n <= 8; ++n) {
    const double rho = fr.phi_at_xu() - std::pow(10.0, -n);
    const TimeResult p = orbit_period(fr, rho);
    REQUIRE(!p.divergent);
    CHECK(p.value > prev);
    prev = p.value;
  }
  CHECK(prev > 20.0);
}

TEST_CASE("left-branch transit against the closed form") {
  const EnergyFrame fr(Nonlinearity::abs_value(), 2.0);
  // 2 int_{-5}^{-4} ds / sqrt(s^2 + 4 s) = 2 ln((3 + sqrt 5)/2).
  const double closed = 2.0 * std::log((3.0 + std::sqrt(5.0)) / 2.0);
  const TimeResult t = left_branch_time(fr, 0.0, -5.0);
  REQUIRE(!t.divergent);
  CHECK(t.value == doctest::Approx(closed).epsilon(1e-9));
  CHECK(t.value == doctest::Approx(oracle_tau_v_abs(-5.0)).epsilon(1e-6));

  // Degenerate doubling at the turning point.
  CHECK(left_branch_time(fr, 0.0, -4.0).value == doctest::Approx(0.0));
  CHECK_THROWS_AS(left_branch_time(fr, 0.0, -3.5), std::domain_error);

  // Saddle-level branch: flagged divergent, never a large number.
  CHECK(left_branch_time(fr, fr.phi_at_xu(), -5.0).divergent);

  // Center-tangent level of sqrt1p: the left root sits near -6.5, so the
  // start point must lie further left than that.
  const EnergyFrame fsq(Nonlinearity::sqrt1p(), 2.0);
  const TimeResult tv = left_branch_time(fsq, fsq.phi_at_xs(), -7.5);
  CHECK(!tv.divergent);
  CHECK(tv.value > 0.0);
}

TEST_CASE("outer-branch preconditions and positivity") {
  const EnergyFrame fsq(Nonlinearity::sqrt1p(), 2.0);
  const double r = Nonlinearity::sqrt1p().inverse_left(4.0);
  const TimeResult t = outer_branch_time(fsq, fsq.phi_at_xu() + 1.0, r);
  CHECK(!t.divergent);
  CHECK(t.value > 0.0);
  CHECK_THROWS_AS(outer_branch_time(fsq, fsq.phi_at_xs(), -1.0),
                  std::domain_error);
  // r at the turning point: zero transit.
  const LevelClassification lc =
      classify_level(fsq, fsq.phi_at_xu() + 1.0);
  CHECK(outer_branch_time(fsq, fsq.phi_at_xu() + 1.0,
                          *lc.root(RootKind::kStarRight))
            .value == doctest::Approx(0.0));
}

TEST_CASE("additivity of the arc time") {
  std::mt19937_64 rng(4242);
  const EnergyFrame fr(Nonlinearity::sqrt1p(), 2.0);
  std::uniform_real_distribution<double> rho_u(fr.phi_at_xs() + 0.3,
                                               fr.phi_at_xu() - 0.3);
  for (int i = 0; i < 10; ++i) {
    const double rho = rho_u(rng);
    const LevelClassification lc = classify_level(fr, rho);
    const double xm = *lc.root(RootKind::kMinus);
    const double xp = *lc.root(RootKind::kPlus);
    const double mid = 0.5 * (xm + xp);
    const double whole = arc_time(fr, rho, xm, xp).value;
    const double a = arc_time(fr, rho, xm, mid).value;
    const double b = arc_time(fr, rho, mid, xp).value;
    CHECK(whole == doctest::Approx(a + b).epsilon(2e-10));
  }
}

TEST_CASE("orbit arc preconditions") {
  const EnergyFrame fr(Nonlinearity::abs_value(), 2.0);
  CHECK_THROWS_AS(orbit_arc_time(fr, 10.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(orbit_arc_time(fr, -1.0, -5.0), std::domain_error);
  const EnergyFrame fr0(Nonlinearity::abs_value(), 0.0);
  CHECK_THROWS_AS(orbit_period(fr0, -1.0), std::domain_error);
}
