#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "ap/flow.hpp"
#include "ap/model.hpp"
#include "ap/timemap.hpp"

using namespace ap;

namespace {
const double kPi = M_PI;
const double kSqrt2 = std::sqrt(2.0);

double dist(PhasePoint a, PhasePoint b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}
}  // namespace

TEST_CASE("forcing construction and evaluation") {
  const Forcing c = Forcing::constant(2.0);
  CHECK(c(17.3) == 2.0);
  CHECK(!c.period().has_value());

  const Forcing st = Forcing::step(0.0, 2.0, 1.5, 2.5);
  CHECK(st(0.0) == 0.0);
  CHECK(st(1.4999) == 0.0);
  CHECK(st(1.5) == 2.0);
  CHECK(st(3.9999) == 2.0);
  CHECK(st(4.0) == 0.0);
  CHECK(*st.period() == doctest::Approx(4.0));
  const auto switches = st.switch_times(0.0, 8.0);
  REQUIRE(switches.size() == 3);
  CHECK(switches[0] == doctest::Approx(1.5));
  CHECK(switches[1] == doctest::Approx(4.0));
  CHECK(switches[2] == doctest::Approx(5.5));

  CHECK_THROWS_AS(Forcing::step(2.0, 2.0, 1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(Forcing::step(0.0, 2.0, 0.0, 1.0), std::domain_error);

  const Forcing p = Forcing::periodic(2.0, 0.5, 3.0, Waveform::sine());
  CHECK(*p.period() == doctest::Approx(2.0 * kPi / 3.0));
  CHECK(p(0.0) == doctest::Approx(2.0));
}

TEST_CASE("autonomous energy conservation over t = 50") {
  std::mt19937_64 rng(1234);
  for (const char* name : {"abs", "sqrt1p"}) {
    const Nonlinearity f = Nonlinearity::from_name(name);
    const EnergyFrame fr(f, 2.0);
    std::uniform_real_distribution<double> ux(fr.x_u() + 0.3, fr.x_h() - 0.3);
    for (int i = 0; i < 20; ++i) {
      const PhasePoint z0{ux(rng), 0.0};
      const double e0 = fr.energy(z0.x, z0.y);
      const Trajectory traj =
          integrate(f, Forcing::constant(2.0), z0, 0.0, 50.0);
      REQUIRE(traj.status() == TrajectoryStatus::kOk);
      double max_drift = 0.0;
      for (const PhasePoint& z : traj.states()) {
        max_drift = std::max(max_drift, std::abs(fr.energy(z.x, z.y) - e0));
      }
      CHECK(max_drift < 1e-7 * (1.0 + std::abs(e0)));
    }
  }
}

TEST_CASE("isochronous return of the right-half-plane orbit") {
  const Nonlinearity f = Nonlinearity::abs_value();
  const PhasePoint z0{2.0 + kSqrt2, 0.0};
  const FlowResult r = advance(f, Forcing::constant(2.0), z0, 0.0, 2.0 * kPi);
  REQUIRE(r.status == TrajectoryStatus::kOk);
  CHECK(dist(r.z, z0) < 1e-6);
}

TEST_CASE("switched integration agrees with chained constant pieces") {
  const Nonlinearity f = Nonlinearity::abs_value();
  const double t1 = 1.3, t2 = 2.1;
  const Forcing st = Forcing::step(0.0, 2.0, t1, t2);
  const PhasePoint z0{1.0, 0.4};

  const FlowResult whole = advance(f, st, z0, 0.0, t1 + t2);
  const FlowResult half1 = advance(f, Forcing::constant(0.0), z0, 0.0, t1);
  const FlowResult half2 =
      advance(f, Forcing::constant(2.0), half1.z, 0.0, t2);
  REQUIRE(whole.status == TrajectoryStatus::kOk);
  CHECK(dist(whole.z, half2.z) < 1e-9);

  // The period map is exactly the composition.
  const FlowResult pmap = poincare_map(f, st, z0);
  CHECK(dist(pmap.z, half2.z) < 1e-9);
}

TEST_CASE("trajectory samples align with events") {
  const Nonlinearity f = Nonlinearity::abs_value();
  const Forcing st = Forcing::step(0.0, 2.0, 1.5, 2.5);
  const Trajectory traj = integrate(f, st, {0.5, 1.0}, 0.0, 4.0);
  REQUIRE(traj.status() == TrajectoryStatus::kOk);
  bool has_switch_sample = false;
  for (double t : traj.times()) {
    if (t == 1.5) has_switch_sample = true;
  }
  CHECK(has_switch_sample);
  bool has_switch_event = false;
  for (const TrajectoryEvent& e : traj.events()) {
    if (e.kind == EventKind::kForcingSwitch && e.t == 1.5) {
      has_switch_event = true;
    }
  }
  CHECK(has_switch_event);
}

TEST_CASE("breakpoint crossings are located and sampled") {
  const Nonlinearity f = Nonlinearity::abs_value();
  // Orbit around the center of k = 2 that dips into x < 0.
  const Trajectory traj =
      integrate(f, Forcing::constant(2.0), {-1.0, 0.0}, 0.0, 10.0);
  REQUIRE(traj.status() == TrajectoryStatus::kOk);
  int crossings = 0;
  for (const TrajectoryEvent& e : traj.events()) {
    if (e.kind == EventKind::kBreakpointCrossing) {
      ++crossings;
      CHECK(std::abs(traj.eval(e.t).x) < 1e-9);
    }
  }
  CHECK(crossings >= 2);
}

TEST_CASE("reversibility via the time-reversal symmetry") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const PhasePoint z0{1.2, 0.7};
  const double T = 7.0;
  const FlowResult fwd = advance(f, Forcing::constant(2.0), z0, 0.0, T);
  REQUIRE(fwd.status == TrajectoryStatus::kOk);
  // Flip velocity, integrate forward again, flip back: must return to z0.
  const FlowResult back =
      advance(f, Forcing::constant(2.0), {fwd.z.x, -fwd.z.y}, 0.0, T);
  REQUIRE(back.status == TrajectoryStatus::kOk);
  CHECK(dist({back.z.x, -back.z.y}, z0) < 1e-8);
}

TEST_CASE("blow-up terminates with a flag") {
  const Nonlinearity f = Nonlinearity::abs_value();
  IntegratorOptions opt;
  opt.blowup_bound = 100.0;
  const Trajectory traj =
      integrate(f, Forcing::constant(2.0), {0.0, 60.0}, 0.0, 100.0, opt);
  CHECK(traj.status() == TrajectoryStatus::kBlowUp);
  CHECK(std::abs(traj.back().x) + std::abs(traj.back().y) > 100.0);

  const Forcing per = Forcing::periodic(2.0, 0.01, 10.0, Waveform::sine());
  const IterateResult it = iterate(f, per, {0.0, 60.0}, 10, opt);
  CHECK(it.truncated);
  CHECK(it.points.size() < 10);
}

TEST_CASE("poincare iterates stay bounded in the stability region") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const Forcing per = Forcing::periodic(2.0, 0.01, 10.0, Waveform::sine());
  const IterateResult it = iterate(f, per, {0.0, 0.0}, 1000);
  CHECK(!it.truncated);
  REQUIRE(it.points.size() == 1000);
  for (const PhasePoint& z : it.points) {
    CHECK(std::abs(z.x) < 10.0);
    CHECK(std::abs(z.y) < 10.0);
  }
}

TEST_CASE("autonomous poincare map preserves energy") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const EnergyFrame fr(f, 2.0);
  const Forcing per = Forcing::periodic(2.0, 0.0, 10.0, Waveform::sine());
  const PhasePoint z0{1.0, 0.5};
  const double e0 = fr.energy(z0.x, z0.y);
  PhasePoint z = z0;
  for (int i = 0; i < 50; ++i) {
    const FlowResult r = poincare_map(f, per, z);
    REQUIRE(r.status == TrajectoryStatus::kOk);
    z = r.z;
  }
  CHECK(std::abs(fr.energy(z.x, z.y) - e0) < 1e-7);
}

TEST_CASE("scatter rows are deterministic and ordered") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const Forcing per = Forcing::periodic(2.0, 0.01, 10.0, Waveform::sine());
  const ICLine ic{-2.0, 4.0, 12, 0.0};

  setenv("HORSESHOE_THREADS", "1", 1);
  const auto rows1 = scatter(f, per, ic, 5);
  setenv("HORSESHOE_THREADS", "4", 1);
  const auto rows4 = scatter(f, per, ic, 5);
  unsetenv("HORSESHOE_THREADS");

  REQUIRE(rows1.size() == rows4.size());
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    CHECK(rows1[i].ic_index == rows4[i].ic_index);
    CHECK(rows1[i].iter == rows4[i].iter);
    CHECK(rows1[i].x == rows4[i].x);
    CHECK(rows1[i].y == rows4[i].y);
  }
  // iter 0 is the initial condition itself.
  CHECK(rows1[0].iter == 0);
  CHECK(rows1[0].x == doctest::Approx(-2.0));

  const auto single = scatter(f, per, ICLine{1.0, 1.0, 1, 0.5}, 0);
  REQUIRE(single.size() == 1);
  CHECK(single[0].x == doctest::Approx(1.0));
  CHECK(single[0].y == doctest::Approx(0.5));
}

TEST_CASE("poincare map is injective on samples") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const Forcing per = Forcing::periodic(2.0, 0.01, 10.0, Waveform::sine());
  std::vector<PhasePoint> images;
  for (double x0 : {0.0, 0.5, 1.0, 1.5, 2.0, 2.5}) {
    const FlowResult r = poincare_map(f, per, {x0, 0.0});
    REQUIRE(r.status == TrajectoryStatus::kOk);
    images.push_back(r.z);
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      CHECK(dist(images[i], images[j]) > 1e-9);
    }
  }
}

TEST_CASE("fixed points of the period map near the equilibria") {
  const Nonlinearity f = Nonlinearity::sqrt1p();
  const double xs = 2.0 * kSqrt2;
  const Rect window{-6.0, 8.0, -3.0, 3.0};
  const GridSpec grid{10, 6};

  SUBCASE("small periodic forcing: exactly two") {
    const Forcing per = Forcing::periodic(2.0, 0.01, 10.0, Waveform::sine());
    const auto hits = fixed_point_scan(f, per, window, grid);
    REQUIRE(hits.size() == 2);
    CHECK(std::abs(hits[0].z.x + xs) < 0.05);
    CHECK(std::abs(hits[1].z.x - xs) < 0.05);
    for (const auto& h : hits) CHECK(h.residual < 1e-9);
  }

  SUBCASE("autonomous limit: the equilibria are among the results") {
    const Forcing per = Forcing::periodic(2.0, 0.0, 10.0, Waveform::sine());
    const auto hits = fixed_point_scan(f, per, window, grid);
    bool saddle = false, center = false;
    for (const auto& h : hits) {
      if (dist(h.z, {-xs, 0.0}) < 1e-6) saddle = true;
      if (dist(h.z, {xs, 0.0}) < 1e-6) center = true;
    }
    CHECK(saddle);
    CHECK(center);
  }

  SUBCASE("forcing below the well: none") {
    const Forcing per = Forcing::periodic(-0.5, 0.01, 10.0, Waveform::sine());
    IntegratorOptions opt;
    opt.blowup_bound = 1e4;
    const auto hits = fixed_point_scan(f, per, window, grid, opt);
    CHECK(hits.empty());
  }
}

TEST_CASE("winding counts around a fixed center") {
  const Nonlinearity f = Nonlinearity::abs_value();
  // Closed orbit entirely in x > 0: period 2 pi; one clockwise turn per
  // period around the center (2, 0).
  const Trajectory traj = integrate(f, Forcing::constant(2.0),
                                    {2.0 + kSqrt2, 0.0}, 0.0, 4.0 * kPi);
  auto center = [](double) { return 2.0; };
  const auto counts =
      oscillation_count(traj, center, {{0.0, 2.0 * kPi}, {0.0, 4.0 * kPi}});
  REQUIRE(counts.size() == 2);
  CHECK(!counts[0].indeterminate);
  CHECK(counts[0].count == 1);
  CHECK(counts[1].count == 2);

  // Left-branch segment never encircles the center.
  const Trajectory vee =
      integrate(f, Forcing::constant(2.0), {-5.0, -1.0}, 0.0, 1.0);
  const auto vcounts = oscillation_count(vee, center, {{0.0, 1.0}});
  CHECK(vcounts[0].count == 0);
}
