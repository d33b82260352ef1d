#include "ap/timemap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ap::timemap {

namespace {

constexpr double kTurnEps = 1e-9;

struct Endpoint {
  bool turning = false;
  bool at_saddle = false;
};

Endpoint inspect_endpoint(const EnergyFrame& fr, double rho, double x,
                          double scale) {
  Endpoint e;
  const double gap = rho - fr.phi(x);
  if (gap <= kTurnEps * scale) {
    if (gap < -1e-6 * scale) {
      throw std::domain_error("arc_time: endpoint lies outside the level set");
    }
    e.turning = true;
    e.at_saddle = std::abs(x - fr.x_u()) <= 1e-7 * (1.0 + std::abs(fr.x_u()));
  }
  return e;
}

// Newton-polish a turning point onto the exact level. Root residuals from the
// classification (~1e-12) would otherwise leak negative gaps into the deepest
// quadrature panels after the sqrt substitution.
double refine_turning(const EnergyFrame& fr, double rho, double x) {
  for (int it = 0; it < 4; ++it) {
    const double g = fr.phi(x) - rho;
    const double d = fr.dphi(x);
    if (std::abs(d) < 1e-14) break;
    const double step = g / d;
    x -= step;
    if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
  }
  return x;
}

// sigma-breaks corresponding to f-breakpoints inside a substituted leg.
std::vector<double> sigma_breaks(const EnergyFrame& fr, double turn, double far,
                                 bool turn_is_right) {
  std::vector<double> out;
  for (double b : fr.f().breakpoints()) {
    const bool inside = turn_is_right ? (b > far && b < turn)
                                      : (b > turn && b < far);
    if (inside) out.push_back(std::sqrt(std::abs(turn - b)));
  }
  return out;
}

// Leg with a single turning endpoint. turn_is_right: integration runs from
// `far` up to the turning point. The gap rho - phi(s) is evaluated relative
// to the turning point via phi_diff, which stays accurate where the direct
// difference cancels.
QuadResult turning_leg(const EnergyFrame& fr, double rho, double turn,
                       double far, bool turn_is_right, const QuadOptions& opt) {
  const double width = std::abs(turn - far);
  if (width == 0.0) return {0.0, 0.0};
  const double sigma_max = std::sqrt(width);
  // The refined turning point is taken as the exact root: phi_diff relative
  // to it is positive and relatively accurate down to machine scale, which a
  // residual term of order 1e-16 would destroy. Where sigma^2 underflows the
  // spacing of doubles around `turn`, fall back to the first-order model of
  // the gap (simple turning point: gap ~ |phi'(turn)| sigma^2).
  (void)rho;
  const double slope = std::abs(fr.dphi(turn));
  const double ulp_zone = 256.0 * 2.3e-16 * (1.0 + std::abs(turn));
  auto integrand = [&](double sigma) {
    const double s = turn_is_right ? turn - sigma * sigma : turn + sigma * sigma;
    double gap;
    if (sigma * sigma < ulp_zone) {
      gap = std::max(slope * sigma * sigma, 1e-300);
    } else {
      gap = std::max(fr.phi_diff(turn, s), 1e-300);
    }
    return 2.0 * sigma / std::sqrt(2.0 * gap);
  };
  const std::vector<double> cuts = sigma_breaks(fr, turn, far, turn_is_right);
  if (cuts.empty()) return integrate_gauss(integrand, 0.0, sigma_max, opt);
  std::vector<double> edges{0.0};
  edges.insert(edges.end(), cuts.begin(), cuts.end());
  edges.push_back(sigma_max);
  std::sort(edges.begin(), edges.end());
  QuadResult total;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const QuadResult part =
        integrate_gauss(integrand, edges[i], edges[i + 1], opt);
    total.value += part.value;
    total.error += part.error;
  }
  return total;
}

QuadResult smooth_leg(const EnergyFrame& fr, double rho, double a, double b,
                      const QuadOptions& opt) {
  auto integrand = [&](double s) {
    double gap = rho - fr.phi(s);
    if (gap < 1e-300) gap = 1e-300;
    return 1.0 / std::sqrt(2.0 * gap);
  };
  return integrate_adaptive(integrand, a, b, opt, fr.f().breakpoints());
}

}  // namespace

TimeResult arc_time(const EnergyFrame& frame, double rho, double x1, double x2,
                    const QuadOptions& opt) {
  if (x1 == x2) return {0.0, 0.0, false};
  double a = x1, b = x2;
  if (a > b) std::swap(a, b);
  const double scale =
      1.0 + std::abs(rho) + std::abs(frame.phi(a)) + std::abs(frame.phi(b));

  const Endpoint left = inspect_endpoint(frame, rho, a, scale);
  const Endpoint right = inspect_endpoint(frame, rho, b, scale);
  if ((left.turning && left.at_saddle) || (right.turning && right.at_saddle)) {
    return {0.0, 0.0, true};
  }
  if (left.turning) a = refine_turning(frame, rho, a);
  if (right.turning) b = refine_turning(frame, rho, b);
  if (b - a <= 1e-12 * (1.0 + std::abs(a) + std::abs(b))) {
    return {0.0, 0.0, false};
  }

  // Interior positivity: a zero of rho - phi strictly inside makes the query
  // ill-posed (the orbit never traverses the interval).
  const int n_probe = 129;
  for (int i = 1; i < n_probe; ++i) {
    const double s = a + (b - a) * i / n_probe;
    if (rho - frame.phi(s) <= 0.0) {
      throw std::domain_error("arc_time: rho - phi vanishes inside [x1, x2]");
    }
  }

  QuadResult total{0.0, 0.0};
  if (left.turning && right.turning) {
    // One simple turning point at each end: split where the gap is largest.
    double best = a, best_gap = -1.0;
    for (int i = 1; i < n_probe; ++i) {
      const double s = a + (b - a) * i / n_probe;
      const double gap = rho - frame.phi(s);
      if (gap > best_gap) {
        best_gap = gap;
        best = s;
      }
    }
    const QuadResult l = turning_leg(frame, rho, a, best, false, opt);
    const QuadResult r = turning_leg(frame, rho, b, best, true, opt);
    total.value = l.value + r.value;
    total.error = l.error + r.error;
  } else if (left.turning) {
    total = turning_leg(frame, rho, a, b, false, opt);
  } else if (right.turning) {
    total = turning_leg(frame, rho, b, a, true, opt);
  } else {
    total = smooth_leg(frame, rho, a, b, opt);
  }
  return {total.value, total.error, false};
}

TimeResult orbit_arc_time(const EnergyFrame& frame, double rho, double r,
                          const QuadOptions& opt) {
  if (frame.k() <= 0.0) {
    throw std::domain_error("orbit_arc_time: no closed orbits for k == 0");
  }
  if (!(rho > frame.phi_at_xs() && rho < frame.phi_at_xu())) {
    throw std::domain_error(
        "orbit_arc_time: rho outside the closed-orbit band");
  }
  const LevelClassification lc = classify_level(frame, rho);
  const double x_minus = *lc.root(RootKind::kMinus);
  const double x_plus = *lc.root(RootKind::kPlus);
  const double pad = 1e-9 * (1.0 + std::abs(x_plus));
  if (!(r > x_minus && r <= x_plus + pad)) {
    throw std::domain_error("orbit_arc_time: r outside (x_-(rho), x_+(rho)]");
  }
  return arc_time(frame, rho, x_minus, std::min(r, x_plus), opt);
}

TimeResult orbit_period(const EnergyFrame& frame, double rho,
                        const QuadOptions& opt) {
  if (frame.k() <= 0.0) {
    throw std::domain_error("orbit_period: no closed orbits for k == 0");
  }
  if (!(rho > frame.phi_at_xs() && rho < frame.phi_at_xu())) {
    throw std::domain_error("orbit_period: rho outside the closed-orbit band");
  }
  const LevelClassification lc = classify_level(frame, rho);
  TimeResult half = arc_time(frame, rho, *lc.root(RootKind::kMinus),
                             *lc.root(RootKind::kPlus), opt);
  half.value *= 2.0;
  half.error *= 2.0;
  return half;
}

TimeResult left_branch_time(const EnergyFrame& frame, double rho, double r,
                            const QuadOptions& opt) {
  const double scale = 1.0 + std::abs(rho) + std::abs(frame.phi_at_xu());
  if (std::abs(rho - frame.phi_at_xu()) <= kTurnEps * scale) {
    // The branch terminates at the saddle itself; transit time is infinite.
    return {0.0, 0.0, true};
  }
  if (rho > frame.phi_at_xu()) {
    throw std::domain_error(
        "left_branch_time: rho above the saddle level (branch absent)");
  }
  const LevelClassification lc = classify_level(frame, rho);
  const auto x_star = lc.root(RootKind::kStarLeft);
  if (!x_star) {
    throw std::domain_error("left_branch_time: no left root at this level");
  }
  const double pad = 1e-9 * (1.0 + std::abs(*x_star));
  if (r > *x_star + pad) {
    throw std::domain_error("left_branch_time: requires r < x_*(rho)");
  }
  TimeResult t = arc_time(frame, rho, std::min(r, *x_star), *x_star, opt);
  t.value *= 2.0;
  t.error *= 2.0;
  return t;
}

TimeResult outer_branch_time(const EnergyFrame& frame, double rho, double r,
                             const QuadOptions& opt) {
  const double scale = 1.0 + std::abs(rho) + std::abs(frame.phi_at_xu());
  if (rho - frame.phi_at_xu() <= kTurnEps * scale) {
    throw std::domain_error(
        "outer_branch_time: requires rho > phi(x_u) (outer line absent)");
  }
  const LevelClassification lc = classify_level(frame, rho);
  const auto x_star = lc.root(RootKind::kStarRight);
  if (!x_star) {
    throw std::domain_error("outer_branch_time: no outer root at this level");
  }
  const double pad = 1e-9 * (1.0 + std::abs(*x_star));
  if (r > *x_star + pad) {
    throw std::domain_error("outer_branch_time: requires r < x^*(rho)");
  }
  TimeResult t = arc_time(frame, rho, std::min(r, *x_star), *x_star, opt);
  t.value *= 2.0;
  t.error *= 2.0;
  return t;
}

}  // namespace ap::timemap
