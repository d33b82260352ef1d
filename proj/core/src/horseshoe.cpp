#include "ap/horseshoe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ap/detail/parallel.hpp"
#include "ap/rootfind.hpp"

namespace ap::horseshoe {

namespace {

double wrap_pi(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

// Unwrapped clockwise angle around (cx, 0) reached at the end of the
// trajectory, measured from the half-line {(r, 0): r < cx} with the region
// N starting in (-pi/2, 0).
double final_clockwise_angle(const Trajectory& traj, double cx) {
  const PhasePoint z0 = traj.front();
  const double theta0 = std::atan2(z0.y, z0.x - cx);
  double acc = 0.0;
  double prev = theta0;
  const double t0 = traj.t_begin(), t1 = traj.t_end();
  double t = t0;
  double dt = (t1 - t0) / 512.0;
  while (t < t1) {
    double step = std::min(dt, t1 - t);
    for (;;) {
      const PhasePoint z = traj.eval(t + step);
      const double th = std::atan2(z.y, z.x - cx);
      const double d = wrap_pi(th - prev);
      if (std::abs(d) < 0.4 || step < 1e-12 * (t1 - t0)) {
        acc += d;
        prev = th;
        t += step;
        break;
      }
      step *= 0.5;
    }
  }
  return wrap_pi(M_PI - theta0) - acc;
}

}  // namespace

// ---------------------------------------------------------------------------
// RegionGeometry
// ---------------------------------------------------------------------------

RegionGeometry::RegionGeometry(Nonlinearity f, double k1, double k2,
                               Levels levels)
    : f_(f), f1_(f, k1), f2_(std::move(f), k2), lv_(levels) {
  if (!(k1 >= 0.0) || !(k1 < k2)) {
    throw std::domain_error("build_regions: requires 0 <= k1 < k2");
  }
  const double phi1u = f1_.phi_at_xu();
  const double scale1 = 1.0 + std::abs(phi1u);
  left_degenerate_ = std::abs(lv_.A - phi1u) <= 1e-12 * scale1;
  if (!left_degenerate_ && lv_.A > phi1u) {
    throw std::domain_error(
        "build_regions: constraint A <= phi_k1(x_u(k1)) violated");
  }

  // a = x_*(A) on the increasing branch left of the saddle.
  if (left_degenerate_) {
    a_ = f1_.x_u();
  } else {
    const LevelClassification lc = classify_level(f1_, lv_.A);
    const auto root = lc.root(RootKind::kStarLeft);
    if (!root) {
      throw std::domain_error("build_regions: no x_*(A) root (A too low?)");
    }
    a_ = *root;
  }

  if (!(lv_.D > f2_.phi_at_xs() && lv_.D < f2_.phi_at_xu())) {
    throw std::domain_error(
        "build_regions: constraint phi_k2(x_s) < D < phi_k2(x_u) violated");
  }
  const LevelClassification lcD = classify_level(f2_, lv_.D);
  d_ = *lcD.root(RootKind::kMinus);
  x_plus_ = *lcD.root(RootKind::kPlus);

  if (!(lv_.B > phi1u)) {
    throw std::domain_error(
        "build_regions: constraint B > phi_k1(x_u(k1)) violated");
  }
  const LevelClassification lcB = classify_level(f1_, lv_.B);
  b_ = *lcB.root(RootKind::kStarRight);
  x_h1_ = k1 > 0.0 ? f1_.x_h() : 0.0;

  validate();

  // Diameter estimate from the boundary arcs.
  double xmin = 1e300, xmax = -1e300, ymax = 0.0;
  for (const char* side : {"M_left", "M_right", "M_bottom", "M_top"}) {
    for (const PhasePoint& z : sample_side(side, 33)) {
      xmin = std::min(xmin, z.x);
      xmax = std::max(xmax, z.x);
      ymax = std::max(ymax, std::abs(z.y));
    }
  }
  diam_ = std::hypot(xmax - xmin, ymax);
}

void RegionGeometry::validate() const {
  const double x_u1 = f1_.x_u(), x_u2 = f2_.x_u();
  auto fail = [](const std::string& name) {
    throw std::domain_error("build_regions: constraint " + name +
                            " violated");
  };
  if (!(x_u2 < a_)) fail("x_u(k2) < a = x_*(A)");
  if (!(x_u2 < d_)) fail("x_u(k2) < d = x_-(D)");
  if (!(x_h1_ < b_)) fail("x_h(k1) < b = x^*(B)");
  if (!(d_ < b_)) fail("d < b (b inside the O_D disc)");
  if (!left_degenerate_) {
    if (!(a_ < x_u1)) fail("a = x_*(A) < x_u(k1)");
    if (!(d_ < a_)) fail("d = x_-(D) < a = x_*(A)");
    if (!(b_ < x_plus_)) fail("b = x^*(B) < x_+(D)");
  } else {
    // Strip-with-no-hole variant: the left band is gone and the inner-orbit
    // dip is supplied by the outer swings instead; the hole only needs to be
    // reachable within the strip's energy range.
    if (!(f1_.phi(d_) < lv_.B)) fail("phi_k1(d) < B (hole reachable)");
  }
  // Rectangle corners: the left side must clear the saddle of frame 2.
  const double x_H = (lv_.A - f2_.phi_at_xu()) / (f2_.k() - f1_.k());
  if (!(x_H > x_u2)) fail("A > phi_k1(x_u(k2)) (left corner above saddle)");
}

bool RegionGeometry::in_strip(PhasePoint z) const {
  const double e = e1(z);
  const double phi1u = f1_.phi_at_xu();
  const double tol = 1e-9 * (1.0 + std::abs(lv_.A) + std::abs(lv_.B));
  const double tolx = 1e-9 * (1.0 + diam_);
  if (e >= phi1u - tol && e <= lv_.B + tol) return true;
  return e >= lv_.A - tol && e <= phi1u + tol && z.x <= f1_.x_u() + tolx;
}

bool RegionGeometry::in_annulus(PhasePoint z) const {
  const double e = e2(z);
  const double tol =
      1e-9 * (1.0 + std::abs(lv_.D) + std::abs(f2_.phi_at_xu()));
  const double tolx = 1e-9 * (1.0 + diam_);
  return e >= lv_.D - tol && e <= f2_.phi_at_xu() + tol &&
         z.x >= f2_.x_u() - tolx;
}

bool RegionGeometry::in_M(PhasePoint z) const {
  const double toly = 1e-9 * (1.0 + diam_);
  return z.y >= -toly && in_annulus(z) && in_strip(z);
}

bool RegionGeometry::in_N(PhasePoint z) const {
  const double toly = 1e-9 * (1.0 + diam_);
  return z.y <= toly && in_annulus(z) && in_strip(z);
}

std::optional<PhasePoint> RegionGeometry::from_energies(double e1v, double e2v,
                                                        bool upper_half) const {
  const double x = (e1v - e2v) / (f2_.k() - f1_.k());
  const double y2 = 2.0 * (e1v - f1_.phi(x));
  if (y2 < -1e-12 * (1.0 + std::abs(e1v))) return std::nullopt;
  const double y = std::sqrt(std::max(y2, 0.0));
  return PhasePoint{x, upper_half ? y : -y};
}

std::vector<PhasePoint> RegionGeometry::sample_side(const std::string& side,
                                                    int n) const {
  const double dk = f2_.k() - f1_.k();
  const double phi2u = f2_.phi_at_xu();
  const double A = lv_.A, B = lv_.B, D = lv_.D;
  double x0 = 0.0, x1 = 0.0;
  enum { kOnFrame1, kOnFrame2 } which = kOnFrame1;
  double level = 0.0;
  bool upper = true;

  const std::string base = side.substr(2);
  const bool is_N = side.rfind("N_", 0) == 0;
  // The N rectangle is the y-mirror of M; the bottom/top of M play the
  // left/right roles of N and vice versa.
  std::string arc = base;
  if (is_N) {
    if (base == "left") arc = "bottom";        // on O_D
    else if (base == "right") arc = "top";     // on the k2 homoclinic
    else if (base == "bottom") arc = "left";   // on V_A
    else if (base == "top") arc = "right";     // on U_B
    upper = false;
  }

  if (arc == "left") {
    which = kOnFrame1;
    level = A;
    x0 = (A - phi2u) / dk;
    x1 = std::min((A - D) / dk, a_);
  } else if (arc == "right") {
    which = kOnFrame1;
    level = B;
    x0 = (B - phi2u) / dk;
    x1 = std::min((B - D) / dk, b_);
  } else if (arc == "bottom") {
    which = kOnFrame2;
    level = D;
    x0 = std::min((A - D) / dk, a_);
    x1 = std::min((B - D) / dk, b_);
  } else if (arc == "top") {
    which = kOnFrame2;
    level = phi2u;
    x0 = (A - phi2u) / dk;
    x1 = (B - phi2u) / dk;
  } else {
    throw std::invalid_argument("sample_side: unknown side " + side);
  }

  std::vector<PhasePoint> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = x0 + (x1 - x0) * i / (n - 1);
    const double g = which == kOnFrame1 ? level - f1_.phi(x)
                                        : level - f2_.phi(x);
    const double y = std::sqrt(std::max(2.0 * g, 0.0));
    out.push_back({x, upper ? y : -y});
  }
  return out;
}

RegionGeometry build_regions(const Nonlinearity& f, double k1, double k2,
                             std::optional<Levels> levels) {
  if (levels) return RegionGeometry(f, k1, k2, *levels);
  // Automatic levels at fixed fractions of the admissible ranges; D is
  // nudged toward the saddle level until the ordering d < a holds.
  const EnergyFrame f1(f, k1), f2(f, k2);
  const double phi1u = f1.phi_at_xu();
  const double phi1_at_xu2 = f1.phi(f2.x_u());
  Levels lv;
  lv.A = phi1u - 0.25 * (phi1u - phi1_at_xu2);
  double D = 0.5 * (f2.phi_at_xs() + f2.phi_at_xu());
  std::string last_error;
  for (int attempt = 0; attempt < 48; ++attempt) {
    lv.D = D;
    const LevelClassification lcD = classify_level(f2, D);
    const double x_plus = *lcD.root(RootKind::kPlus);
    lv.B = phi1u + 0.25 * (f1.phi(x_plus) - phi1u);
    try {
      return RegionGeometry(f, k1, k2, lv);
    } catch (const std::domain_error& e) {
      last_error = e.what();
      D = 0.5 * (D + f2.phi_at_xu());
    }
  }
  throw std::domain_error("build_regions: automatic level selection failed: " +
                          last_error);
}

// ---------------------------------------------------------------------------
// Transit-time thresholds
// ---------------------------------------------------------------------------

TransitTimes tau_stars(const RegionGeometry& geom, int m) {
  if (m < 1) throw std::domain_error("tau_stars: requires m >= 1");
  TransitTimes out;
  out.m = m;
  const EnergyFrame& f1 = geom.frame1();
  const EnergyFrame& f2 = geom.frame2();
  const double x_u2 = f2.x_u();
  const double dk = f2.k() - f1.k();

  if (geom.left_band_degenerate()) {
    // The level-A branch is the stable manifold; its transit is infinite and
    // the U_B leg is measured from the abscissa where U_B leaves the
    // annulus.
    out.left_leg = timemap::TimeResult{0.0, 0.0, true};
    const double x_exit = (geom.levels().B - f2.phi_at_xu()) / dk;
    out.outer_leg = timemap::outer_branch_time(f1, geom.levels().B, x_exit);
    out.tau1 = out.outer_leg.value;
  } else {
    out.left_leg = timemap::left_branch_time(f1, geom.levels().A, x_u2);
    out.outer_leg = timemap::outer_branch_time(f1, geom.levels().B, x_u2);
    if (out.left_leg.divergent) {
      throw std::domain_error("tau_stars: V_A transit diverges (A at the "
                              "saddle level)");
    }
    out.tau1 = std::max(out.left_leg.value, out.outer_leg.value);
  }

  // Gap transit: from (b, -y_b) through (x_-(D), 0) to (b, +y_b).
  const timemap::TimeResult half =
      timemap::orbit_arc_time(f2, geom.levels().D, geom.b());
  out.gap_transit = {2.0 * half.value, 2.0 * half.error, half.divergent};
  out.period_D = timemap::orbit_period(f2, geom.levels().D);
  if (out.gap_transit.divergent || out.period_D.divergent) {
    throw std::domain_error("tau_stars: O_D transit diverges (D at the "
                            "saddle level)");
  }
  out.tau2 = out.gap_transit.value + (m - 1) * out.period_D.value;
  return out;
}

// ---------------------------------------------------------------------------
// Stretching verification
// ---------------------------------------------------------------------------

namespace {

struct Node {
  double s = 0.0;
  PhasePoint z{};
  PhasePoint image{};
  double angle = 0.0;
  bool ok = false;
};

struct PathDef {
  double level = 0.0;
  double x_from = 0.0, x_to = 0.0;
  bool feasible = false;
};

struct LegContext {
  const RegionGeometry* g;
  Leg leg;
  double duration;
  StretchOptions opt;
  double delta_E;
  double diam;

  const EnergyFrame& frame_flow() const {
    return leg == Leg::kFirst ? g->frame1() : g->frame2();
  }

  Node eval(const PathDef& p, double s) const {
    Node n;
    n.s = s;
    const double x = p.x_from + s * (p.x_to - p.x_from);
    const EnergyFrame& path_frame =
        leg == Leg::kFirst ? g->frame2() : g->frame1();
    const double y2 = 2.0 * (p.level - path_frame.phi(x));
    const double y = std::sqrt(std::max(y2, 0.0));
    n.z = {x, leg == Leg::kFirst ? y : -y};
    const Forcing forcing = Forcing::constant(frame_flow().k());
    if (leg == Leg::kFirst) {
      const FlowResult r =
          advance(g->frame1().f(), forcing, n.z, 0.0, duration, opt.integ);
      n.image = r.z;
      n.ok = r.status == TrajectoryStatus::kOk;
    } else {
      const Trajectory traj =
          integrate(g->frame2().f(), forcing, n.z, 0.0, duration, opt.integ);
      n.image = traj.back();
      n.ok = traj.status() == TrajectoryStatus::kOk;
      if (n.ok) n.angle = final_clockwise_angle(traj, g->b());
    }
    return n;
  }

  bool needs_split(const Node& a, const Node& b) const {
    if (b.s - a.s < 1e-13) return false;
    if (!a.ok || !b.ok) return false;
    const double spacing = std::hypot(a.image.x - b.image.x,
                                      a.image.y - b.image.y);
    if (spacing > opt.image_spacing_frac * diam) return true;
    if (leg == Leg::kSecond &&
        std::abs(a.angle - b.angle) > opt.angle_resolution) {
      return true;
    }
    return false;
  }
};

// Labels for the crossing scan.
enum class Code { kInside, kLeft, kRight, kElsewhere };

struct Margin {
  double distance = 0.0;
};

Code classify_image(const LegContext& cx, PhasePoint w, double* clearance) {
  const RegionGeometry& g = *cx.g;
  const double ytol = 0.05 * cx.diam;
  if (cx.leg == Leg::kFirst) {
    if (g.in_N(w)) return Code::kInside;
    const double e = g.e2(w);
    const double lo = g.levels().D, hi = g.frame2().phi_at_xu();
    const double grad = std::hypot(g.frame2().dphi(w.x), w.y);
    if (e < lo && w.y <= ytol) {
      *clearance = (lo - e) / std::max(grad, 1e-12);
      return Code::kLeft;
    }
    if (e > hi && w.y <= ytol) {
      *clearance = (e - hi) / std::max(grad, 1e-12);
      return Code::kRight;
    }
    return Code::kElsewhere;
  }
  if (g.in_M(w)) return Code::kInside;
  const double e = g.e1(w);
  const double lo = g.levels().A, hi = g.levels().B;
  const double grad = std::hypot(g.frame1().dphi(w.x), w.y);
  if (e < lo && w.y >= -ytol) {
    *clearance = (lo - e) / std::max(grad, 1e-12);
    return Code::kLeft;
  }
  if (e > hi && w.y >= -ytol) {
    *clearance = (e - hi) / std::max(grad, 1e-12);
    return Code::kRight;
  }
  return Code::kElsewhere;
}

// Scans one contiguous run of nodes for side-to-side crossings of the
// target rectangle.
void scan_crossings(const LegContext& cx, const std::vector<Node>& nodes,
                    std::size_t lo, std::size_t hi, int k_index,
                    std::vector<CrossingRecord>* out) {
  std::vector<Code> codes(nodes.size());
  std::vector<double> clear(nodes.size(), 0.0);
  for (std::size_t i = lo; i <= hi; ++i) {
    codes[i] = classify_image(cx, nodes[i].image, &clear[i]);
  }
  std::size_t i = lo;
  while (i <= hi) {
    if (codes[i] != Code::kInside) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < hi && codes[j + 1] == Code::kInside) ++j;
    if (i > lo && j < hi) {
      const Code before = codes[i - 1];
      const Code after = codes[j + 1];
      const bool lr = before == Code::kLeft && after == Code::kRight;
      const bool rl = before == Code::kRight && after == Code::kLeft;
      if (lr || rl) {
        CrossingRecord rec;
        rec.k_index = k_index;
        rec.s_lo = nodes[i - 1].s;
        rec.s_hi = nodes[j + 1].s;
        rec.margin = std::min(clear[i - 1], clear[j + 1]);
        rec.enters_from_left = lr;
        out->push_back(rec);
      }
    }
    i = j + 1;
  }
}

std::vector<PathDef> make_paths(const LegContext& cx) {
  const RegionGeometry& g = *cx.g;
  const double dk = g.frame2().k() - g.frame1().k();
  const double A = g.levels().A, B = g.levels().B, D = g.levels().D;
  const double phi2u = g.frame2().phi_at_xu();
  const int P = cx.opt.n_paths;
  std::vector<PathDef> out;
  out.reserve(P);

  if (cx.leg == Leg::kFirst) {
    // E2-level arcs across M, from the V_A side to the U_B side.
    const double x_lD = std::min((A - D) / dk, g.a());
    const double v_lo_exact = A - dk * x_lD;
    const bool degenerate_bottom = v_lo_exact > D + 1e-12 * (1.0 + std::abs(D));
    for (int j = 0; j < P; ++j) {
      PathDef p;
      if (degenerate_bottom) {
        p.level = v_lo_exact + (phi2u - v_lo_exact) * (j + 1) / P;
      } else {
        p.level = D + (phi2u - D) * j / (P - 1);
      }
      p.x_from = (A - p.level) / dk;
      p.x_to = (B - p.level) / dk;
      p.feasible = true;
      out.push_back(p);
    }
  } else {
    // E1-level arcs across N, from the homoclinic side to the O_D side.
    for (int j = 0; j < P; ++j) {
      PathDef p;
      p.level = A + (B - A) * j / (P - 1);
      const double nudge = 0.25 * (B - A) / P;
      const double dir = j < P / 2 ? 1.0 : -1.0;
      for (int tries = 0; tries < 8; ++tries) {
        p.x_from = (p.level - phi2u) / dk;
        p.x_to = (p.level - D) / dk;
        bool ok = true;
        for (int i = 0; i <= 64; ++i) {
          const double x = p.x_from + (p.x_to - p.x_from) * i / 64.0;
          if (g.frame1().phi(x) > p.level + 1e-12 * (1.0 + std::abs(p.level))) {
            ok = false;
            break;
          }
        }
        if (ok) {
          p.feasible = true;
          break;
        }
        p.level += dir * nudge;
      }
      out.push_back(p);
    }
  }
  return out;
}

PathRecord run_path(const LegContext& cx, const PathDef& def, int index,
                    int m_windows) {
  PathRecord rec;
  rec.path_index = index;
  rec.level = def.level;
  if (!def.feasible) {
    rec.budget_exhausted = true;
    return rec;
  }

  // Initial uniform sampling, then refinement rounds driven by image
  // spacing (and winding-angle resolution on the second leg).
  const int n0 = 65;
  std::vector<Node> nodes(n0);
  detail::parallel_for(n0, [&](int i) {
    nodes[i] = cx.eval(def, static_cast<double>(i) / (n0 - 1));
  });
  for (int round = 0; round < cx.opt.max_rounds; ++round) {
    std::vector<double> mids;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      if (cx.needs_split(nodes[i], nodes[i + 1])) {
        mids.push_back(0.5 * (nodes[i].s + nodes[i + 1].s));
      }
    }
    rec.rounds = round;
    if (mids.empty()) break;
    if (static_cast<int>(nodes.size() + mids.size()) >
        cx.opt.max_nodes_per_path) {
      rec.budget_exhausted = true;
      break;
    }
    std::vector<Node> fresh(mids.size());
    detail::parallel_for(static_cast<int>(mids.size()),
                         [&](int i) { fresh[i] = cx.eval(def, mids[i]); });
    nodes.insert(nodes.end(), fresh.begin(), fresh.end());
    std::sort(nodes.begin(), nodes.end(),
              [](const Node& a, const Node& b) { return a.s < b.s; });
  }
  rec.nodes = static_cast<int>(nodes.size());

  if (cx.leg == Leg::kFirst) {
    // K_{1,0/1}: energy bands below/above the frame-1 saddle level, margin
    // delta_E (the stable-manifold exclusion zone).
    const double phi1u = cx.g->frame1().phi_at_xu();
    const auto e1_of = [&](const Node& n) { return cx.g->e1(n.z); };
    int found = 0;
    for (int k = 0; k < 2; ++k) {
      const double lo = k == 0 ? -1e300 : phi1u + cx.delta_E;
      const double hi = k == 0 ? phi1u - cx.delta_E : 1e300;
      // Contiguous run (E1 is monotone along the path).
      std::size_t first = nodes.size(), last = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double e = e1_of(nodes[i]);
        if (e >= lo && e <= hi) {
          first = std::min(first, i);
          last = std::max(last, i);
        }
      }
      if (first >= nodes.size() || last <= first) continue;
      const std::size_t before = rec.crossings.size();
      scan_crossings(cx, nodes, first, last, k, &rec.crossings);
      if (rec.crossings.size() > before) ++found;
    }
    rec.k_sets_crossed = found;
  } else {
    // K_{2,i}: winding-angle windows [2 i pi, 2 i pi + pi/2].
    double max_angle = -1e300;
    for (const Node& n : nodes) max_angle = std::max(max_angle, n.angle);
    const int i_max =
        std::max(m_windows - 1,
                 static_cast<int>(std::floor(max_angle / (2.0 * M_PI))));
    int consecutive = 0;
    bool chain = true;
    for (int i = 0; i <= i_max; ++i) {
      const double wlo = 2.0 * M_PI * i;
      const double whi = wlo + 0.5 * M_PI;
      bool any = false;
      std::size_t run_start = nodes.size();
      for (std::size_t idx = 0; idx <= nodes.size(); ++idx) {
        const bool inside =
            idx < nodes.size() && nodes[idx].angle >= wlo &&
            nodes[idx].angle <= whi;
        if (inside && run_start >= nodes.size()) run_start = idx;
        if (!inside && run_start < nodes.size()) {
          const std::size_t before = rec.crossings.size();
          scan_crossings(cx, nodes, run_start, idx - 1, i, &rec.crossings);
          if (rec.crossings.size() > before) any = true;
          run_start = nodes.size();
        }
      }
      if (any && chain) {
        ++consecutive;
        rec.max_window_reached = i;
      } else if (!any) {
        chain = false;
      }
    }
    rec.k_sets_crossed = consecutive;
  }

  if (cx.opt.keep_nodes) {
    rec.node_data.reserve(nodes.size());
    for (const Node& n : nodes) {
      rec.node_data.push_back({n.s, n.z, n.image, n.angle});
    }
  }
  return rec;
}

}  // namespace

StretchCertificate verify_stretch(const RegionGeometry& geom, Leg leg,
                                  double duration, int m,
                                  const StretchOptions& opt) {
  if (duration < 0.0) {
    throw std::domain_error("verify_stretch: negative duration");
  }
  LegContext cx{&geom, leg, duration, opt,
                opt.energy_margin_frac * (geom.levels().B - geom.levels().A),
                leg == Leg::kFirst ? geom.diameter_N() : geom.diameter_M()};

  StretchCertificate cert;
  cert.leg = leg;
  cert.duration = duration;
  if (leg == Leg::kFirst) {
    cert.expected_crossings = geom.left_band_degenerate() ? 1 : 2;
  } else {
    cert.expected_crossings = m;
  }

  const std::vector<PathDef> defs = make_paths(cx);
  cert.paths.reserve(defs.size());
  int min_cross = 1 << 20;
  double min_margin = 1e300;
  for (std::size_t i = 0; i < defs.size(); ++i) {
    cert.paths.push_back(
        run_path(cx, defs[i], static_cast<int>(i), cert.expected_crossings));
    const PathRecord& rec = cert.paths.back();
    min_cross = std::min(min_cross, rec.k_sets_crossed);
    for (const CrossingRecord& cr : rec.crossings) {
      // Leg 1 labels crossings by band identity (0 below / 1 above the
      // saddle level), so every crossing counts toward the claim; leg 2
      // windows beyond the requested m are bonus turns and excluded.
      if (leg == Leg::kFirst || cr.k_index < cert.expected_crossings) {
        min_margin = std::min(min_margin, cr.margin);
      }
    }
  }
  cert.achieved_crossings = min_cross == (1 << 20) ? 0 : min_cross;
  cert.min_margin = min_margin == 1e300 ? 0.0 : min_margin;

  cert.verdict = Verdict::kCertified;
  for (const PathRecord& rec : cert.paths) {
    if (rec.k_sets_crossed >= cert.expected_crossings) continue;
    if (rec.budget_exhausted) {
      if (cert.verdict == Verdict::kCertified) {
        cert.verdict = Verdict::kInconclusive;
        cert.witness_path = rec.path_index;
      }
    } else {
      cert.verdict = Verdict::kFailed;
      cert.witness_path = rec.path_index;
      break;
    }
  }
  return cert;
}

HorseshoeCertificate certify_horseshoe(const Nonlinearity& f,
                                       const Forcing& step_forcing,
                                       std::optional<Levels> levels, int m,
                                       const StretchOptions& opt) {
  if (step_forcing.kind() != Forcing::Kind::kStep) {
    throw std::domain_error("certify_horseshoe: requires stepwise forcing");
  }
  if (!(step_forcing.k() < step_forcing.k2())) {
    throw std::domain_error("certify_horseshoe: requires k1 < k2");
  }
  if (m < 1) throw std::domain_error("certify_horseshoe: requires m >= 1");

  HorseshoeCertificate cert;
  cert.k1 = step_forcing.k();
  cert.k2 = step_forcing.k2();
  cert.t1 = step_forcing.t1();
  cert.t2 = step_forcing.t2();

  const RegionGeometry geom = build_regions(f, cert.k1, cert.k2, levels);
  cert.levels = geom.levels();
  cert.taus = tau_stars(geom, m);

  if (!(cert.t1 > cert.taus.tau1)) {
    cert.verdict = Verdict::kFailed;
    cert.decline_reason =
        "threshold unmet: t1 = " + std::to_string(cert.t1) +
        " <= tau1* = " + std::to_string(cert.taus.tau1) +
        " (tau1* = max of the V_A and U_B transits)";
    return cert;
  }
  if (!(cert.t2 > cert.taus.tau2)) {
    cert.verdict = Verdict::kFailed;
    cert.decline_reason =
        "threshold unmet: t2 = " + std::to_string(cert.t2) +
        " <= tau2* = " + std::to_string(cert.taus.tau2) +
        " (tau2* = O_D gap transit + (m-1) O_D periods)";
    return cert;
  }

  cert.leg1 = verify_stretch(geom, Leg::kFirst, cert.t1, m, opt);
  cert.leg2 = verify_stretch(geom, Leg::kSecond, cert.t2, m, opt);

  if (cert.leg1.verdict == Verdict::kCertified &&
      cert.leg2.verdict == Verdict::kCertified) {
    cert.verdict = Verdict::kCertified;
    cert.symbols_n = cert.leg1.achieved_crossings;
    cert.symbols_m = cert.leg2.achieved_crossings;
  } else if (cert.leg1.verdict == Verdict::kFailed ||
             cert.leg2.verdict == Verdict::kFailed) {
    cert.verdict = Verdict::kFailed;
    const bool first = cert.leg1.verdict == Verdict::kFailed;
    cert.decline_reason =
        std::string("stretching not verified on leg ") + (first ? "1" : "2") +
        ", witness path " +
        std::to_string(first ? cert.leg1.witness_path
                             : cert.leg2.witness_path);
  } else {
    cert.verdict = Verdict::kInconclusive;
    cert.decline_reason = "refinement budget exhausted before verification";
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Periodic orbits with prescribed itineraries
// ---------------------------------------------------------------------------

namespace {

// Scan resolution for the symmetry-section search; seed_grid is kept as a
// coarse knob (the default of 14 maps to ~2800 samples).
int densify_hint(int seed_grid) { return 200 * std::max(seed_grid, 1); }

struct ItineraryChecker {
  const Nonlinearity* f;
  const RegionGeometry* g;
  double t1, t2;
  int n, m;
  double delta_E;
  IntegratorOptions integ;

  // Symbol of one period step starting at z, or -1 when the point escapes
  // the certified structure.
  int symbol(PhasePoint z, PhasePoint* z_next) const {
    if (!g->in_M(z)) return -1;
    int i = -1;
    const double e1 = g->e1(z);
    const double phi1u = g->frame1().phi_at_xu();
    if (n == 1) {
      i = 0;
    } else if (e1 <= phi1u - 0.5 * delta_E) {
      i = 0;
    } else if (e1 >= phi1u + 0.5 * delta_E) {
      i = 1;
    } else {
      return -1;
    }
    const Forcing fc1 = Forcing::constant(g->frame1().k());
    const FlowResult mid = advance(*f, fc1, z, 0.0, t1, integ);
    if (mid.status != TrajectoryStatus::kOk || !g->in_N(mid.z)) return -1;
    const Forcing fc2 = Forcing::constant(g->frame2().k());
    const Trajectory traj = integrate(*f, fc2, mid.z, 0.0, t2, integ);
    if (traj.status() != TrajectoryStatus::kOk) return -1;
    const double ang = final_clockwise_angle(traj, g->b());
    int j = -1;
    for (int w = 0; w < m; ++w) {
      if (ang >= 2.0 * M_PI * w && ang <= 2.0 * M_PI * w + 0.5 * M_PI) {
        j = w;
        break;
      }
    }
    if (j < 0) return -1;
    *z_next = traj.back();
    return i * m + j;
  }
};

}  // namespace

PeriodicOrbitResult find_periodic_orbit(const Nonlinearity& f,
                                        const HorseshoeCertificate& cert,
                                        const std::vector<int>& itinerary,
                                        int seed_grid) {
  if (cert.verdict != Verdict::kCertified) {
    throw std::domain_error(
        "find_periodic_orbit: requires a granted certificate");
  }
  if (itinerary.empty()) {
    throw std::domain_error("find_periodic_orbit: empty itinerary");
  }
  const int n = cert.symbols_n, m = cert.symbols_m;
  for (int s : itinerary) {
    if (s < 0 || s >= n * m) {
      throw std::domain_error("find_periodic_orbit: symbol out of alphabet");
    }
  }
  const RegionGeometry geom = build_regions(f, cert.k1, cert.k2, cert.levels);
  const int L = static_cast<int>(itinerary.size());
  const double T = cert.t1 + cert.t2;
  const Forcing forcing = Forcing::step(cert.k1, cert.k2, cert.t1, cert.t2);

  // Coarse tolerance for the section scan; the polish and the residual
  // evaluation run much tighter because the unstable multiplier of the
  // target orbits amplifies per-step integration error into the residual.
  IntegratorOptions integ;
  integ.rtol = 1e-11;
  integ.atol = 1e-13;
  IntegratorOptions integ_tight;
  integ_tight.rtol = 1e-13;
  integ_tight.atol = 1e-15;
  const double delta_E = 1e-3 * (cert.levels.B - cert.levels.A);
  ItineraryChecker checker{&f, &geom, cert.t1, cert.t2, n, m, delta_E, integ};

  auto map_L = [&](PhasePoint z) -> std::optional<PhasePoint> {
    const FlowResult r = advance(f, forcing, z, 0.0, L * T, integ_tight);
    if (r.status != TrajectoryStatus::kOk) return std::nullopt;
    return r.z;
  };
  auto residual = [&](PhasePoint z) -> std::optional<double> {
    const auto w = map_L(z);
    if (!w) return std::nullopt;
    return std::hypot(w->x - z.x, w->y - z.y);
  };

  // The step forcing is even about the mid-plateau instants, so the flow is
  // reversible under (x, y, t) -> (x, -y, t_c - t) for either center t_c.
  // A trajectory that starts on {y = 0} at a symmetry phase and returns to
  // {y = 0} half a period later is periodic: the search reduces to sign
  // changes of one scalar function of the section abscissa. (Only symmetric
  // orbits are found this way; a miss reports search incompleteness, not
  // nonexistence.)
  const double half = 0.5 * L * T;
  const double x_lo = geom.frame2().x_u() - 0.5;
  const double x_hi = geom.frame2().x_h() + 0.5;
  const int scan_n = std::max(densify_hint(seed_grid), 512);

  struct SectionRoot {
    double phase;
    double x0;
  };
  std::vector<SectionRoot> section_roots;
  for (const double phase0 : {0.5 * cert.t1, cert.t1 + 0.5 * cert.t2}) {
    auto section_y = [&](double x0) -> std::optional<double> {
      const FlowResult r =
          advance(f, forcing, {x0, 0.0}, phase0, phase0 + half, integ);
      if (r.status != TrajectoryStatus::kOk) return std::nullopt;
      return r.z.y;
    };
    std::vector<std::optional<double>> vals(scan_n + 1);
    detail::parallel_for(scan_n + 1, [&](int i) {
      vals[i] = section_y(x_lo + (x_hi - x_lo) * i / scan_n);
    });
    for (int i = 0; i < scan_n; ++i) {
      if (!vals[i] || !vals[i + 1]) continue;
      if (*vals[i] == 0.0) {
        section_roots.push_back({phase0, x_lo + (x_hi - x_lo) * i / scan_n});
        continue;
      }
      if (*vals[i] * *vals[i + 1] >= 0.0) continue;
      double lo = x_lo + (x_hi - x_lo) * i / scan_n;
      double hi = x_lo + (x_hi - x_lo) * (i + 1) / scan_n;
      double flo = *vals[i];
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto fm = section_y(mid);
        if (!fm) break;
        if (flo * *fm <= 0.0) {
          hi = mid;
        } else {
          lo = mid;
          flo = *fm;
        }
        if (hi - lo < 1e-14 * (1.0 + std::abs(mid))) break;
      }
      section_roots.push_back({phase0, 0.5 * (lo + hi)});
    }
  }

  // Re-refinement of a section root under the tight integrator: the coarse
  // and tight maps differ by more than the root's width once the orbit's
  // unstable multiplier amplifies it.
  auto refine_root_tight =
      [&](const SectionRoot& root) -> std::optional<double> {
    auto section_y_tight = [&](double x0) -> std::optional<double> {
      const FlowResult r = advance(f, forcing, {x0, 0.0}, root.phase,
                                   root.phase + half, integ_tight);
      if (r.status != TrajectoryStatus::kOk) return std::nullopt;
      return r.z.y;
    };
    double w = (x_hi - x_lo) / scan_n;
    for (int widen = 0; widen < 3; ++widen, w *= 4.0) {
      double lo = root.x0 - w, hi = root.x0 + w;
      auto flo = section_y_tight(lo);
      auto fhi = section_y_tight(hi);
      if (!flo || !fhi || *flo * *fhi > 0.0) continue;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto fm = section_y_tight(mid);
        if (!fm) return std::nullopt;
        if (*flo * *fm <= 0.0) {
          hi = mid;
        } else {
          lo = mid;
          flo = fm;
        }
        if (hi - lo < 1e-15 * (1.0 + std::abs(mid))) break;
      }
      return 0.5 * (lo + hi);
    }
    return std::nullopt;
  };

  PeriodicOrbitResult out;
  for (const SectionRoot& root : section_roots) {
    const auto x0_refined = refine_root_tight(root);
    if (!x0_refined) continue;
    const double x0 = *x0_refined;
    // Phase-0 point of the symmetric orbit: continue from the section to the
    // end of the L-period window.
    const FlowResult to_phase0 =
        advance(f, forcing, {x0, 0.0}, root.phase, L * T, integ_tight);
    if (to_phase0.status != TrajectoryStatus::kOk) continue;
    PhasePoint z = to_phase0.z;
    auto r0 = residual(z);
    if (!r0) continue;

    // A few damped Newton steps to polish the periodicity residual. The
    // map expands strongly near the invariant set, so the finite-difference
    // step shrinks until the probe stays within the linear response regime.
    for (int it = 0; it < 12 && *r0 >= 1e-9; ++it) {
      const auto w = map_L(z);
      if (!w) break;
      const double gx = w->x - z.x, gy = w->y - z.y;
      const double h = 1e-9 * (1.0 + std::abs(z.x) + std::abs(z.y));
      const auto wx = map_L({z.x + h, z.y});
      const auto wy = map_L({z.x, z.y + h});
      if (!wx || !wy) break;
      const double j11 = (wx->x - z.x - h - gx) / h;
      const double j12 = (wy->x - z.x - gx) / h;
      const double j21 = (wx->y - z.y - gy) / h;
      const double j22 = (wy->y - z.y - h - gy) / h;
      const double det = j11 * j22 - j12 * j21;
      if (std::abs(det) < 1e-14) break;
      const double sx = -(j22 * gx - j12 * gy) / det;
      const double sy = -(-j21 * gx + j11 * gy) / det;
      bool moved = false;
      for (double lam = 1.0; lam > 1e-3; lam *= 0.5) {
        const PhasePoint trial{z.x + lam * sx, z.y + lam * sy};
        const auto rt = residual(trial);
        if (rt && *rt < *r0) {
          z = trial;
          r0 = rt;
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    if (*r0 >= 1e-8) continue;

    // Verify the itinerary under fresh, tighter integration; accept any
    // cyclic rotation (the section phase need not align with symbol 0).
    ItineraryChecker tight = checker;
    tight.integ = integ_tight;
    PhasePoint zt = z;
    std::vector<int> observed;
    bool ok = true;
    for (int step = 0; step < L; ++step) {
      PhasePoint znext;
      const int sym = tight.symbol(zt, &znext);
      if (sym < 0) {
        ok = false;
        break;
      }
      observed.push_back(sym);
      zt = znext;
    }
    if (!ok) continue;
    int match_rot = -1;
    for (int rot = 0; rot < L && match_rot < 0; ++rot) {
      bool match = true;
      for (int step = 0; step < L; ++step) {
        if (observed[(step + rot) % L] != itinerary[step]) {
          match = false;
          break;
        }
      }
      if (match) match_rot = rot;
    }
    if (match_rot < 0) continue;
    // Advance to the rotation that realizes the requested word.
    PhasePoint zz = z;
    for (int r = 0; r < match_rot; ++r) {
      const FlowResult adv = advance(f, forcing, zz, 0.0, T, integ_tight);
      if (adv.status != TrajectoryStatus::kOk) break;
      zz = adv.z;
    }
    const auto rfinal = residual(zz);
    if (!rfinal || *rfinal >= 1e-8) continue;
    out.found = true;
    out.z = zz;
    out.residual = *rfinal;
    out.itinerary = itinerary;
    out.verified = true;
    break;
  }
  return out;
}

}  // namespace ap::horseshoe
