#include "ap/model.hpp"

#include <cmath>
#include <stdexcept>

#include "ap/rootfind.hpp"

namespace ap {

Nonlinearity::Nonlinearity(std::string name, Fn f, Fn potential, Fn derivative,
                           std::vector<double> breakpoints,
                           Smoothness smoothness)
    : name_(std::move(name)),
      f_(std::move(f)),
      potential_(std::move(potential)),
      derivative_(std::move(derivative)),
      breakpoints_(std::move(breakpoints)),
      smoothness_(smoothness) {
  validate();
}

void Nonlinearity::validate() const {
  if (std::abs(f_(0.0)) > 1e-12) {
    throw std::invalid_argument("nonlinearity: f(0) != 0");
  }
  // Monotonicity on a log-spaced grid on both sides.
  double prev = f_(0.0);
  for (double s = 1e-3; s <= 10.0; s *= 1.7783) {
    const double v = f_(s);
    if (v <= prev) {
      throw std::invalid_argument(
          "nonlinearity: not strictly increasing on [0, inf)");
    }
    prev = v;
  }
  prev = f_(0.0);
  for (double s = -1e-3; s >= -10.0; s *= 1.7783) {
    const double v = f_(s);
    if (v <= prev) {
      throw std::invalid_argument(
          "nonlinearity: not strictly decreasing on (-inf, 0]");
    }
    prev = v;
  }
  // Growth probe; coercivity is assumed beyond it.
  if (f_(1e6) <= f_(10.0) || f_(-1e6) <= f_(-10.0)) {
    throw std::invalid_argument("nonlinearity: growth probe failed at +-1e6");
  }
  // F' = f spot check away from breakpoints (central difference).
  for (double s : {-3.1, -0.7, 0.9, 2.3}) {
    const double h = 1e-6 * (1.0 + std::abs(s));
    const double fd = (potential_(s + h) - potential_(s - h)) / (2.0 * h);
    if (std::abs(fd - f_(s)) > 1e-5 * (1.0 + std::abs(f_(s)))) {
      throw std::invalid_argument("nonlinearity: potential does not match f");
    }
  }
  if (std::abs(potential_(0.0)) > 1e-12) {
    throw std::invalid_argument("nonlinearity: F(0) != 0");
  }
}

Nonlinearity Nonlinearity::abs_value() {
  return Nonlinearity(
      "abs", [](double s) { return std::abs(s); },
      [](double s) { return 0.5 * s * std::abs(s); },
      [](double s) { return s < 0.0 ? -1.0 : 1.0; }, {0.0},
      Smoothness::kLipschitz);
}

Nonlinearity Nonlinearity::sqrt1p() {
  return Nonlinearity(
      "sqrt1p", [](double s) { return std::sqrt(1.0 + s * s) - 1.0; },
      [](double s) {
        return 0.5 * (s * std::sqrt(1.0 + s * s) + std::asinh(s)) - s;
      },
      [](double s) { return s / std::sqrt(1.0 + s * s); }, {},
      Smoothness::kC2Plus);
}

Nonlinearity Nonlinearity::from_name(const std::string& name) {
  if (name == "abs") return abs_value();
  if (name == "sqrt1p") return sqrt1p();
  throw std::invalid_argument("unknown nonlinearity: " + name);
}

double Nonlinearity::inverse_left(double k) const {
  if (k < 0.0) throw std::domain_error("inverse_left: k < 0");
  if (name_ == "abs") return -k;
  if (name_ == "sqrt1p") return -std::sqrt(k * (k + 2.0));
  if (k == 0.0) return 0.0;
  return find_root_expand([this, k](double s) { return f_(s) - k; }, 0.0,
                          1.0 + k, -1);
}

double Nonlinearity::inverse_right(double k) const {
  if (k < 0.0) throw std::domain_error("inverse_right: k < 0");
  if (name_ == "abs") return k;
  if (name_ == "sqrt1p") return std::sqrt(k * (k + 2.0));
  if (k == 0.0) return 0.0;
  return find_root_expand([this, k](double s) { return f_(s) - k; }, 0.0,
                          1.0 + k, +1);
}

Equilibria equilibria(const Nonlinearity& f, double k) {
  if (k < 0.0) throw std::domain_error("equilibria: requires k >= 0");
  return {f.inverse_left(k), f.inverse_right(k)};
}

EnergyFrame::EnergyFrame(Nonlinearity f, double k) : f_(std::move(f)), k_(k) {
  if (k < 0.0) throw std::domain_error("EnergyFrame: requires k >= 0");
  const Equilibria eq = equilibria(f_, k_);
  x_u_ = eq.x_u;
  x_s_ = eq.x_s;
  phi_xu_ = phi(x_u_);
  phi_xs_ = phi(x_s_);
  if (k_ > 0.0) {
    x_h_ = homoclinic_intercept(f_, k_);
  }
}

double EnergyFrame::x_h() const {
  if (!x_h_) {
    throw std::domain_error("x_h: homoclinic intercept undefined for k == 0");
  }
  return *x_h_;
}

double EnergyFrame::phi_diff(double x_ref, double s) const {
  const double d = s - x_ref;
  const double span = 1.0 + std::abs(x_ref);
  if (std::abs(d) > 1e-2 * span) {
    return phi(x_ref) - phi(s);
  }
  // Integrate phi' = f - k with a 3-point Gauss rule (exact through degree
  // 5); the direct difference cancels catastrophically in the near field.
  // Split at breakpoints so the rule only ever sees a smooth branch of f.
  static const double nodes[3] = {-0.7745966692414834, 0.0,
                                  0.7745966692414834};
  static const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  auto piece = [&](double from, double to) {
    // Signed integral of (f - k) from `from` to `to`.
    const double c = 0.5 * (from + to);
    const double r = 0.5 * (to - from);
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
      acc += weights[i] * (f_(c + r * nodes[i]) - k_);
    }
    return acc * r;
  };
  // phi(x_ref) - phi(s) = integral of (f - k) from s to x_ref, split at the
  // breakpoints in between.
  std::vector<double> cuts;
  const double leg_lo = std::min(s, x_ref), leg_hi = std::max(s, x_ref);
  for (double b : f_.breakpoints()) {
    if (b > leg_lo && b < leg_hi) cuts.push_back(b);
  }
  if (s > x_ref) std::reverse(cuts.begin(), cuts.end());
  double total = 0.0;
  double cur = s;
  for (double b : cuts) {
    total += piece(cur, b);
    cur = b;
  }
  total += piece(cur, x_ref);
  return total;
}

double EnergyFrame::saddle_gap(double s) const { return phi_diff(x_u_, s); }

double homoclinic_intercept(const Nonlinearity& f, double k) {
  if (k <= 0.0) {
    throw std::domain_error(
        "homoclinic_intercept: saddle loop degenerates for k <= 0");
  }
  const double x_u = f.inverse_left(k);
  const double x_s = f.inverse_right(k);
  const double target = f.potential(x_u) - k * x_u;
  auto g = [&](double x) { return f.potential(x) - k * x - target; };
  // phi is strictly increasing on [x_s, inf) from phi(x_s) < 0 < target.
  return find_root_expand(g, x_s, 1.0 + std::abs(x_s), +1);
}

namespace {

double solve_branch(const EnergyFrame& fr, double rho, double lo, double hi,
                    double tol) {
  auto g = [&](double x) { return fr.phi(x) - rho; };
  RootOptions opt;
  opt.f_tol = tol;
  return find_root(g, lo, hi, opt);
}

// Left endpoint for the increasing branch (-inf, x_u]: expand until
// phi < rho.
double left_bracket(const EnergyFrame& fr, double rho) {
  double step = 1.0 + std::abs(fr.x_u());
  double x = fr.x_u() - step;
  for (int it = 0; it < 200 && fr.phi(x) >= rho; ++it) {
    step *= 2.0;
    x = fr.x_u() - step;
  }
  return x;
}

double right_bracket(const EnergyFrame& fr, double rho) {
  double step = 1.0 + std::abs(fr.x_s());
  double x = fr.x_s() + step;
  for (int it = 0; it < 200 && fr.phi(x) <= rho; ++it) {
    step *= 2.0;
    x = fr.x_s() + step;
  }
  return x;
}

}  // namespace

std::optional<double> LevelClassification::root(RootKind kind) const {
  for (const auto& r : roots) {
    if (r.kind == kind) return r.x;
  }
  return std::nullopt;
}

LevelClassification classify_level(const EnergyFrame& frame, double rho,
                                   double tol) {
  LevelClassification out;
  out.rho = rho;
  const double phi_u = frame.phi_at_xu();
  const double phi_s = frame.phi_at_xs();
  const double scale = 1.0 + std::abs(phi_u) + std::abs(phi_s);

  if (frame.k() == 0.0) {
    if (std::abs(rho) <= tol * scale) {
      out.kind = LevelKind::kDegenerateSingle;
      out.roots.push_back({RootKind::kOrigin, 0.0});
    } else if (rho > 0.0) {
      out.kind = LevelKind::kOuterU;
      out.roots.push_back(
          {RootKind::kStarRight,
           solve_branch(frame, rho, 0.0, right_bracket(frame, rho), tol)});
    } else {
      out.kind = LevelKind::kInnerV;
      out.roots.push_back(
          {RootKind::kStarLeft,
           solve_branch(frame, rho, left_bracket(frame, rho), 0.0, tol)});
    }
    return out;
  }

  if (std::abs(rho - phi_u) <= tol * scale) {
    out.kind = LevelKind::kSaddleLoop;
    out.roots.push_back({RootKind::kSaddle, frame.x_u()});
    out.roots.push_back({RootKind::kHomoclinic, frame.x_h()});
  } else if (std::abs(rho - phi_s) <= tol * scale) {
    out.kind = LevelKind::kCenterTangent;
    out.roots.push_back(
        {RootKind::kStarLeft,
         solve_branch(frame, rho, left_bracket(frame, rho), frame.x_u(), tol)});
    out.roots.push_back({RootKind::kCenter, frame.x_s()});
  } else if (rho > phi_u) {
    out.kind = LevelKind::kOuterU;
    out.roots.push_back(
        {RootKind::kStarRight,
         solve_branch(frame, rho, frame.x_s(), right_bracket(frame, rho),
                      tol)});
  } else if (rho < phi_s) {
    out.kind = LevelKind::kInnerV;
    out.roots.push_back(
        {RootKind::kStarLeft,
         solve_branch(frame, rho, left_bracket(frame, rho), frame.x_u(), tol)});
  } else {
    out.kind = LevelKind::kThreeRoots;
    out.roots.push_back(
        {RootKind::kStarLeft,
         solve_branch(frame, rho, left_bracket(frame, rho), frame.x_u(), tol)});
    out.roots.push_back(
        {RootKind::kMinus,
         solve_branch(frame, rho, frame.x_u(), frame.x_s(), tol)});
    out.roots.push_back(
        {RootKind::kPlus,
         solve_branch(frame, rho, frame.x_s(), right_bracket(frame, rho),
                      tol)});
  }
  return out;
}

OrderingReport ordering_check(const Nonlinearity& f, double k1, double k2) {
  if (!(k1 >= 0.0) || !(k1 < k2)) {
    throw std::domain_error("ordering_check: requires 0 <= k1 < k2");
  }
  OrderingReport r{};
  r.x_u_k1 = f.inverse_left(k1);
  r.x_u_k2 = f.inverse_left(k2);
  r.x_h_k1 = k1 > 0.0 ? homoclinic_intercept(f, k1) : 0.0;
  r.x_h_k2 = homoclinic_intercept(f, k2);
  // For k1 == 0 the inner loop degenerates to the origin and the middle link
  // collapses to equality.
  const bool middle =
      k1 > 0.0 ? r.x_u_k1 < r.x_h_k1 : r.x_u_k1 <= r.x_h_k1;
  r.holds = r.x_u_k2 < r.x_u_k1 && middle && r.x_h_k1 < r.x_h_k2;
  return r;
}

}  // namespace ap
