#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ap/model.hpp"

using namespace ap;

namespace {
const double kSqrt2 = std::sqrt(2.0);

// Independent high-precision bisection for phi_k(x) = target on a monotone
// bracket, used as the oracle for homoclinic intercepts.
double bisect_phi(const Nonlinearity& f, double k, double target, double lo,
                  double hi) {
  auto phi = [&](double x) { return f.potential(x) - k * x; };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (phi(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}
}  // namespace

TEST_CASE("equilibria of the catalog nonlinearities") {
  const Nonlinearity fabs = Nonlinearity::abs_value();
  const Nonlinearity fsq = Nonlinearity::sqrt1p();

  const Equilibria e1 = equilibria(fabs, 2.0);
  CHECK(e1.x_u == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(e1.x_s == doctest::Approx(2.0).epsilon(1e-12));

  const Equilibria e0 = equilibria(fabs, 0.0);
  CHECK(e0.x_u == 0.0);
  CHECK(e0.x_s == 0.0);

  const Equilibria e2 = equilibria(fsq, 2.0);
  CHECK(e2.x_u == doctest::Approx(-2.0 * kSqrt2).epsilon(1e-12));
  CHECK(e2.x_s == doctest::Approx(2.0 * kSqrt2).epsilon(1e-12));

  CHECK_THROWS_AS(equilibria(fabs, -1.0), std::domain_error);

  // Residuals: f(x_u) = k = f(x_s).
  CHECK(fsq(e2.x_u) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fsq(e2.x_s) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("phi and energy") {
  const EnergyFrame fr2(Nonlinearity::abs_value(), 2.0);
  CHECK(fr2.phi(-2.0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(fr2.phi(0.0) == 0.0);

  const EnergyFrame fr0(Nonlinearity::abs_value(), 0.0);
  CHECK(fr0.phi(4.0) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(fr0.energy(0.0, 4.0) == doctest::Approx(8.0).epsilon(1e-14));

  CHECK(fr2.energy(-2.0, 0.0) == doctest::Approx(2.0).epsilon(1e-14));

  // energy(x, 0) == phi(x) exactly.
  for (double x : {-3.0, -1.0, 0.5, 2.7, 6.0}) {
    CHECK(fr2.energy(x, 0.0) == fr2.phi(x));
  }

  // Saddle/center signs for k > 0.
  CHECK(fr2.x_u() < 0.0);
  CHECK(fr2.x_s() > 0.0);
  CHECK(fr2.phi_at_xu() > 0.0);
  CHECK(fr2.phi_at_xs() < 0.0);
}

TEST_CASE("level classification") {
  const EnergyFrame fr0(Nonlinearity::abs_value(), 0.0);
  const LevelClassification deg = classify_level(fr0, 0.0);
  CHECK(deg.kind == LevelKind::kDegenerateSingle);
  CHECK(*deg.root(RootKind::kOrigin) == doctest::Approx(0.0));

  const LevelClassification out8 = classify_level(fr0, 8.0);
  CHECK(out8.kind == LevelKind::kOuterU);
  CHECK(*out8.root(RootKind::kStarRight) == doctest::Approx(4.0).epsilon(1e-12));

  const EnergyFrame fr2(Nonlinearity::abs_value(), 2.0);
  const LevelClassification three = classify_level(fr2, 0.0);
  CHECK(three.kind == LevelKind::kThreeRoots);
  CHECK(*three.root(RootKind::kStarLeft) == doctest::Approx(-4.0).epsilon(1e-11));
  CHECK(*three.root(RootKind::kMinus) == doctest::Approx(0.0).epsilon(1e-11));
  CHECK(*three.root(RootKind::kPlus) == doctest::Approx(4.0).epsilon(1e-11));

  const LevelClassification loop = classify_level(fr2, 2.0);
  CHECK(loop.kind == LevelKind::kSaddleLoop);
  CHECK(*loop.root(RootKind::kSaddle) == doctest::Approx(-2.0));
  CHECK(*loop.root(RootKind::kHomoclinic) ==
        doctest::Approx(2.0 + 2.0 * kSqrt2).epsilon(1e-11));

  // All returned roots satisfy |phi(r) - rho| < tol.
  for (double rho : {-1.5, -0.3, 0.7, 1.9, 2.5, 5.0}) {
    const LevelClassification lc = classify_level(fr2, rho);
    for (const LevelRoot& r : lc.roots) {
      CHECK(std::abs(fr2.phi(r.x) - rho) < 1e-10);
    }
  }
}

TEST_CASE("three-root band ordering and out-of-band sides") {
  std::mt19937_64 rng(20250810);
  const Nonlinearity fsq = Nonlinearity::sqrt1p();
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_real_distribution<double> ku(0.2, 6.0);
    const EnergyFrame fr(fsq, ku(rng));
    std::uniform_real_distribution<double> rho_in(fr.phi_at_xs() + 1e-6,
                                                  fr.phi_at_xu() - 1e-6);
    const LevelClassification lc = classify_level(fr, rho_in(rng));
    REQUIRE(lc.kind == LevelKind::kThreeRoots);
    const double xs = *lc.root(RootKind::kStarLeft);
    const double xm = *lc.root(RootKind::kMinus);
    const double xp = *lc.root(RootKind::kPlus);
    CHECK(xs < fr.x_u());
    CHECK(fr.x_u() < xm);
    CHECK(xm < fr.x_s());
    CHECK(fr.x_s() < xp);

    const LevelClassification above =
        classify_level(fr, fr.phi_at_xu() + 0.5);
    CHECK(above.kind == LevelKind::kOuterU);
    CHECK(*above.root(RootKind::kStarRight) > fr.x_h());
    const LevelClassification below =
        classify_level(fr, fr.phi_at_xs() - 0.5);
    CHECK(below.kind == LevelKind::kInnerV);
    CHECK(*below.root(RootKind::kStarLeft) < fr.x_u());
  }
}

TEST_CASE("phi monotonicity on and off the saddle-center interval") {
  std::mt19937_64 rng(7);
  const EnergyFrame fr(Nonlinearity::sqrt1p(), 3.0);
  std::uniform_real_distribution<double> inside(fr.x_u(), fr.x_s());
  for (int i = 0; i < 50; ++i) {
    double x1 = inside(rng), x2 = inside(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (x2 - x1 < 1e-9) continue;
    CHECK(fr.phi(x1) > fr.phi(x2));
  }
  std::uniform_real_distribution<double> right(fr.x_s(), fr.x_s() + 10.0);
  for (int i = 0; i < 50; ++i) {
    double x1 = right(rng), x2 = right(rng);
    if (x1 > x2) std::swap(x1, x2);
    if (x2 - x1 < 1e-9) continue;
    CHECK(fr.phi(x1) < fr.phi(x2));
  }
}

TEST_CASE("homoclinic intercepts") {
  const Nonlinearity fabs = Nonlinearity::abs_value();
  CHECK(homoclinic_intercept(fabs, 2.0) ==
        doctest::Approx(2.0 + 2.0 * kSqrt2).epsilon(1e-12));
  CHECK_THROWS_AS(homoclinic_intercept(fabs, 0.0), std::domain_error);

  const Nonlinearity fsq = Nonlinearity::sqrt1p();
  const double xh = homoclinic_intercept(fsq, 2.0);
  // Independent bisection oracle on the increasing branch.
  const EnergyFrame fr(fsq, 2.0);
  const double oracle =
      bisect_phi(fsq, 2.0, fr.phi_at_xu(), fr.x_s(), 20.0);
  CHECK(xh == doctest::Approx(oracle).epsilon(1e-10));
  CHECK(xh == doctest::Approx(6.556).epsilon(1e-3));

  // Frame invariants: x_s < x_h, level residual small.
  CHECK(fr.x_s() < fr.x_h());
  CHECK(std::abs(fr.phi(fr.x_h()) - fr.phi_at_xu()) < 1e-10);
}

TEST_CASE("saddle-loop nesting order") {
  const Nonlinearity fabs = Nonlinearity::abs_value();
  const OrderingReport r = ordering_check(fabs, 2.0, 4.0);
  CHECK(r.holds);
  CHECK(r.x_u_k2 == doctest::Approx(-4.0));
  CHECK(r.x_u_k1 == doctest::Approx(-2.0));
  CHECK(r.x_h_k1 == doctest::Approx(2.0 + 2.0 * kSqrt2).epsilon(1e-11));
  CHECK(r.x_h_k2 == doctest::Approx(4.0 + 4.0 * kSqrt2).epsilon(1e-11));

  CHECK(ordering_check(Nonlinearity::sqrt1p(), 2.0, 4.0).holds);
  CHECK_THROWS_AS(ordering_check(fabs, 2.0, 2.0), std::domain_error);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ku(0.0, 10.0);
  for (const char* name : {"abs", "sqrt1p"}) {
    const Nonlinearity f = Nonlinearity::from_name(name);
    for (int i = 0; i < 100; ++i) {
      double k1 = ku(rng), k2 = ku(rng);
      if (k1 > k2) std::swap(k1, k2);
      if (k2 - k1 < 1e-6) continue;
      CHECK(ordering_check(f, k1, k2).holds);
    }
  }
}

TEST_CASE("one-well shape validation rejects bad nonlinearities") {
  // Monotone increasing through zero: not decreasing on the negatives.
  CHECK_THROWS_AS(
      Nonlinearity("linear", [](double s) { return s; },
                   [](double s) { return 0.5 * s * s; },
                   [](double) { return 1.0; }, {}, Smoothness::kC2Plus),
      std::invalid_argument);
  // Potential inconsistent with f.
  CHECK_THROWS_AS(
      Nonlinearity("badF", [](double s) { return std::abs(s); },
                   [](double s) { return s * s; },
                   [](double s) { return s < 0 ? -1.0 : 1.0; }, {0.0},
                   Smoothness::kLipschitz),
      std::invalid_argument);
}
