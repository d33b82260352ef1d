#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ap/flow.hpp"
#include "ap/melnikov.hpp"
#include "ap/model.hpp"
#include "ap/quadrature.hpp"

using namespace ap;
using namespace ap::melnikov;

namespace {
const double kPi = M_PI;
const double kSqrt2 = std::sqrt(2.0);

const HomoclinicOrbit& orbit_sqrt1p_k2() {
  static const HomoclinicOrbit q =
      HomoclinicOrbit::build(Nonlinearity::sqrt1p(), 2.0);
  return q;
}

// Independent route for int_0^inf q_tilde dt: change variables t -> x on the
// level set, int (x - x_u) / sqrt(2 (phi(x_u) - phi(x))) dx with the turning
// point absorbed by x = x_h - sigma^2.
double q_tilde_integral_x_route(const EnergyFrame& fr) {
  const double x_u = fr.x_u(), x_h = fr.x_h();
  auto integrand = [&](double sig) {
    const double x = x_h - sig * sig;
    const double gap = std::max(fr.saddle_gap(x), 1e-300);
    return 2.0 * sig * (x - x_u) / std::sqrt(2.0 * gap);
  };
  return integrate_gauss(integrand, 0.0, std::sqrt(x_h - x_u),
                         QuadOptions{1e-12, 1e-14})
      .value;
}

Waveform zero_waveform() {
  Waveform w;
  w.name = "zero";
  w.value = [](double) { return 0.0; };
  w.d1 = [](double) { return 0.0; };
  w.d2 = [](double) { return 0.0; };
  w.period = 2.0 * kPi;
  return w;
}
}  // namespace

TEST_CASE("eligibility and construction") {
  CHECK_THROWS_AS(HomoclinicOrbit::build(Nonlinearity::abs_value(), 2.0),
                  std::domain_error);
  CHECK_THROWS_AS(HomoclinicOrbit::build(Nonlinearity::sqrt1p(), 0.0),
                  std::domain_error);

  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  CHECK(q.q(0.0) == doctest::Approx(q.frame().x_h()).epsilon(1e-12));
  CHECK(q.dq(0.0) == 0.0);
  CHECK(q.lambda() ==
        doctest::Approx(std::sqrt(2.0 * kSqrt2 / 3.0)).epsilon(1e-12));
  // Even in t.
  for (double t : {0.3, 1.7, 5.0, 20.0}) {
    CHECK(q.q(-t) == q.q(t));
    CHECK(q.dq(-t) == -q.dq(t));
  }
}

TEST_CASE("energy pinned to the saddle level along the orbit") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const EnergyFrame& fr = q.frame();
  double worst = 0.0;
  for (double t = 0.0; t < q.t_tail(); t += 0.0713) {
    const double e = 0.5 * q.dq(t) * q.dq(t) + fr.phi(q.q(t));
    worst = std::max(worst, std::abs(e - fr.phi_at_xu()));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("orbit is monotone with an exponential envelope") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const double x_u = q.frame().x_u();
  double prev = q.q(0.0);
  for (double t = 0.13; t < q.t_tail() + 5.0; t += 0.13) {
    const double cur = q.q(t);
    CHECK(cur < prev);
    CHECK(cur > x_u);
    prev = cur;
  }
  const double C = q.tail_coefficient();
  for (double t : {1.0, 3.0, 7.0, 15.0}) {
    CHECK(q.q_tilde(t) <= 1.02 * C * std::exp(-q.lambda() * t));
  }
}

TEST_CASE("orbit agrees with direct integration of the flow") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Nonlinearity f = Nonlinearity::sqrt1p();
  IntegratorOptions opt;
  opt.rtol = 1e-12;
  opt.atol = 1e-14;
  const Trajectory traj = integrate(f, Forcing::constant(2.0),
                                    {q.frame().x_h(), 0.0}, 0.0, 6.0, opt);
  REQUIRE(traj.status() == TrajectoryStatus::kOk);
  for (double t = 0.0; t <= 6.0; t += 0.37) {
    const PhasePoint z = traj.eval(t);
    CHECK(std::abs(z.x - q.q(t)) < 1e-7);
    CHECK(std::abs(z.y - q.dq(t)) < 1e-6);
  }
}

TEST_CASE("q-tilde integral: table route equals the x-integral route") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const double i_table = q.q_tilde_integral();
  const double i_x = q_tilde_integral_x_route(q.frame());
  CHECK(i_table == doctest::Approx(i_x).epsilon(1e-8));
}

TEST_CASE("melnikov function: zero forcing and closed form for sine") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();

  const Waveform zero = zero_waveform();
  CHECK(delta(q, zero, 1.0, 0.7) == doctest::Approx(0.0));

  const Waveform sine = Waveform::sine();
  for (double omega : {0.5, 1.0, 2.0}) {
    const double eta_v = eta(q, omega);
    const double scale = 2.0 * omega * std::abs(eta_v);
    const double T = 2.0 * kPi / omega;
    for (int i = 0; i < 32; ++i) {
      const double alpha = T * i / 32.0;
      const double closed = -2.0 * omega * std::cos(omega * alpha) * eta_v;
      const double numeric = delta(q, sine, omega, alpha);
      CHECK(std::abs(numeric - closed) < 1e-6 * scale);
    }
  }
}

TEST_CASE("melnikov mean over a period vanishes") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Waveform sine = Waveform::sine();
  const double omega = 1.3;
  const double T = 2.0 * kPi / omega;
  const int n = 64;
  double mean = 0.0, scale = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = delta(q, sine, omega, T * i / n);
    mean += v / n;
    scale = std::max(scale, std::abs(v));
  }
  CHECK(std::abs(mean) < 1e-8 * scale);
}

TEST_CASE("damping shifts the melnikov function by c0 times the loop area") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Waveform sine = Waveform::sine();
  const double c0 = 0.37;
  const double undamped = delta(q, sine, 1.0, 0.9);
  const double damped = delta(q, sine, 1.0, 0.9, c0);
  CHECK(damped == doctest::Approx(undamped - c0 * q.dq_squared_integral())
                      .epsilon(1e-10));
  // The q'^2 integral is the area enclosed by the saddle loop.
  CHECK(q.dq_squared_integral() ==
        doctest::Approx(loop_area(Nonlinearity::sqrt1p(), 2.0)).epsilon(1e-9));
}

TEST_CASE("eta: limits, low-frequency monotonicity, high-frequency decay") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const double i0 = q.q_tilde_integral();
  CHECK(eta(q, 1e-3) == doctest::Approx(i0).epsilon(1e-4));
  CHECK(std::abs(eta(q, 100.0)) < eta(q, 1.0) / 100.0);

  // Positive and strictly decreasing up to the first zero crossing
  // (near omega ~ 2.12 for this orbit).
  double prev = 1e300;
  for (int i = 1; i <= 21; ++i) {
    const double om = 0.1 * i;
    const double e = eta(q, om);
    CHECK(e > 0.0);
    CHECK(e < prev);
    prev = e;
  }
  // Beyond it the transform oscillates in sign: this orbit's cosine
  // transform is not one-signed (the envelope still decays).
  CHECK(eta(q, 3.0) < 0.0);
  CHECK(eta(q, 4.0) > 0.0);
  CHECK(eta(q, 5.0) < 0.0);
  CHECK(std::abs(eta(q, 10.0)) < std::abs(eta(q, 5.0)));
}

TEST_CASE("alternating partial sums bracket the sine series") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const auto xi = xi_partial_sums(q, 1.0, 10);
  REQUIRE(xi.size() == 11);
  for (std::size_t j = 0; j < xi.size(); ++j) {
    CHECK(xi[j] > 0.0);
    if (j > 0) CHECK(xi[j] < xi[j - 1]);
  }
  // The Xi_j are the terms of the alternating series for
  // omega int q~ sin(omega t) dt, so the first partial sums bracket it.
  const double s = eta_sine_series(q, 1.0);
  CHECK(s <= xi[0] + 1e-5);
  CHECK(s >= xi[0] - xi[1] - 1e-5);
}

TEST_CASE("tail honesty: doubling the cutoff moves delta less than the bound") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Waveform sine = Waveform::sine();
  const double bound = delta_tail_bound(q, sine);
  for (double alpha : {0.0, 1.1, 3.9}) {
    const double v1 = delta(q, sine, 1.0, alpha, 0.0, q.t_tail());
    const double v2 = delta(q, sine, 1.0, alpha, 0.0, 2.0 * q.t_tail());
    CHECK(std::abs(v2 - v1) <= bound + 1e-15);
  }
}

TEST_CASE("zero detection for sine forcing") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Waveform sine = Waveform::sine();
  const ZeroReport rep = detect_zeros(q, sine, 1.0, 256);
  CHECK(!rep.identically_zero);
  CHECK(rep.sign_change);
  CHECK(rep.evidence_simple_zero);
  REQUIRE(rep.simple_zeros.size() == 2);
  CHECK(rep.simple_zeros[0].alpha == doctest::Approx(kPi / 2.0).epsilon(1e-6));
  CHECK(rep.simple_zeros[1].alpha ==
        doctest::Approx(3.0 * kPi / 2.0).epsilon(1e-6));
  CHECK(rep.simple_zeros[0].slope * rep.simple_zeros[1].slope < 0.0);

  // Nondegenerate critical points of p0 at the same abscissas.
  REQUIRE(rep.p0_nondegenerate_critical_points.size() == 2);
  CHECK(rep.p0_nondegenerate_critical_points[0] ==
        doctest::Approx(kPi / 2.0).epsilon(1e-9));
  CHECK(rep.p0_nondegenerate_critical_points[1] ==
        doctest::Approx(3.0 * kPi / 2.0).epsilon(1e-9));

  const ZeroReport zrep = detect_zeros(q, zero_waveform(), 1.0, 64);
  CHECK(zrep.identically_zero);
  CHECK(!zrep.evidence_simple_zero);
  CHECK_THROWS_AS(detect_zeros(q, sine, 1.0, 32), std::domain_error);
}

TEST_CASE("slow-forcing threshold with witnesses") {
  const HomoclinicOrbit& q = orbit_sqrt1p_k2();
  const Waveform sine = Waveform::sine();
  const OmegaThreshold th = omega_threshold(q, sine);
  CHECK(th.omega0 > 0.0);
  CHECK(std::isfinite(th.omega0));
  CHECK(th.delta_up > 0.0);
  CHECK(th.r_up > 0.0);
  CHECK(th.delta_down > 0.0);

  // The defining inequality is an equality at the branch threshold and
  // strict on either side.
  const double i0 = q.q_tilde_integral();
  auto g = [&](double om) {
    const double head = q.q_tilde_integral(th.r_up / om);
    return head - (th.p0_d1_max / th.delta_up) * (i0 - head);
  };
  CHECK(std::abs(g(th.omega_up)) < 1e-8 * i0);
  CHECK(g(th.omega_up / 2.0) > 0.0);
  CHECK(g(th.omega_up * 2.0) < 0.0);

  // Scaling the waveform keeps the construction valid and finite.
  Waveform sin2;
  sin2.name = "sin2";
  sin2.value = [](double s) { return 2.0 * std::sin(s); };
  sin2.d1 = [](double s) { return 2.0 * std::cos(s); };
  sin2.d2 = [](double s) { return -2.0 * std::sin(s); };
  sin2.period = 2.0 * kPi;
  const OmegaThreshold th2 = omega_threshold(q, sin2);
  CHECK(std::isfinite(th2.omega0));
  CHECK(th2.omega0 > 0.0);

  Waveform flat;
  flat.name = "one";
  flat.value = [](double) { return 1.0; };
  flat.d1 = [](double) { return 0.0; };
  flat.d2 = [](double) { return 0.0; };
  flat.period = 2.0 * kPi;
  CHECK_THROWS_AS(omega_threshold(q, flat), std::domain_error);
}

TEST_CASE("loop area closed form for f = |s|") {
  // Piecewise integral: S(k) = k^2 (2 + 3 pi / 2).
  const Nonlinearity f = Nonlinearity::abs_value();
  const double c = 2.0 + 1.5 * kPi;
  CHECK(loop_area(f, 2.0) == doctest::Approx(4.0 * c).epsilon(1e-9));
  CHECK(loop_area(f, 4.0) == doctest::Approx(16.0 * c).epsilon(1e-9));
  CHECK(loop_area(f, 4.0) > loop_area(f, 2.0));
}

TEST_CASE("area scan and interval proposal") {
  const Nonlinearity f = Nonlinearity::abs_value();

  // S(k) strictly increasing on the sampled range.
  double prev = 0.0;
  for (double k = 0.5; k <= 3.5; k += 0.25) {
    const double s = loop_area(f, k);
    CHECK(s > prev);
    prev = s;
  }

  SUBCASE("constant forcing: no intervals") {
    const AreaScan scan =
        loop_area_scan(f, [](double) { return 2.0; }, 20.0 * kPi, 64);
    CHECK(propose_intervals(scan).empty());
  }

  SUBCASE("slow sine forcing: alternating max/min intervals") {
    auto p = [](double th) { return 2.0 + 1.5 * std::sin(0.1 * th); };
    const AreaScan scan = loop_area_scan(f, p, 20.0 * kPi, 256);
    const auto intervals = propose_intervals(scan);
    REQUIRE(intervals.size() == 2);
    CHECK(intervals[0].contains_max);
    CHECK(intervals[0].index % 2 == 1);
    CHECK(intervals[0].theta_star == doctest::Approx(5.0 * kPi).epsilon(1e-2));
    CHECK(!intervals[1].contains_max);
    CHECK(intervals[1].index % 2 == 0);
    CHECK(intervals[1].theta_star ==
          doctest::Approx(15.0 * kPi).epsilon(1e-2));

    // Derivative sign pattern at the interval ends (S' > 0 entering a max,
    // < 0 leaving it; reversed at a min).
    auto S = [&](double th) { return loop_area(f, p(th)); };
    const double h = 1e-3;
    auto dS = [&](double th) { return (S(th + h) - S(th - h)) / (2.0 * h); };
    CHECK(dS(intervals[0].lo) > 0.0);
    CHECK(dS(intervals[0].hi) < 0.0);
    CHECK(dS(intervals[1].lo) < 0.0);
    CHECK(dS(intervals[1].hi) > 0.0);
  }

  SUBCASE("nonpositive forcing rejected") {
    CHECK_THROWS_AS(
        loop_area_scan(f, [](double th) { return std::sin(th); },
                       2.0 * kPi, 64),
        std::domain_error);
  }
}
