#include "ap/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace ap {

namespace {

struct SimpsonState {
  const std::function<double(double)>* f;
  double rel_tol;
  double abs_tol;
  int max_depth;
};

double simpson(double fa, double fm, double fb, double h) {
  return h / 6.0 * (fa + 4.0 * fm + fb);
}

// Returns the refined estimate over [a, b]; accumulates the error estimate.
double adapt(const SimpsonState& st, double a, double b, double fa, double fm,
             double fb, double whole, int depth, double* err_acc) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = (*st.f)(lm);
  const double frm = (*st.f)(rm);
  const double left = simpson(fa, flm, fm, m - a);
  const double right = simpson(fm, frm, fb, b - m);
  const double delta = left + right - whole;
  const double tol =
      std::max(st.abs_tol, st.rel_tol * std::abs(left + right));
  if (depth >= st.max_depth || std::abs(delta) <= 15.0 * tol) {
    *err_acc += std::abs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  const double vl =
      adapt(st, a, m, fa, flm, fm, left, depth + 1, err_acc);
  const double vr =
      adapt(st, m, b, fm, frm, fb, right, depth + 1, err_acc);
  return vl + vr;
}

}  // namespace

QuadResult integrate_adaptive(const std::function<double(double)>& f, double a,
                              double b, const QuadOptions& opt,
                              const std::vector<double>& breaks) {
  if (a == b) return {0.0, 0.0};
  double sign = 1.0;
  double lo = a, hi = b;
  if (lo > hi) {
    std::swap(lo, hi);
    sign = -1.0;
  }
  std::vector<double> cuts;
  cuts.push_back(lo);
  for (double c : breaks) {
    if (c > lo && c < hi) cuts.push_back(c);
  }
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());

  SimpsonState st{&f, opt.rel_tol, opt.abs_tol, opt.max_depth};
  KahanSum total;
  double err = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double x0 = cuts[i], x1 = cuts[i + 1];
    if (x1 <= x0) continue;
    const double xm = 0.5 * (x0 + x1);
    const double f0 = f(x0), fm = f(xm), f1 = f(x1);
    const double whole = simpson(f0, fm, f1, x1 - x0);
    total.add(adapt(st, x0, x1, f0, fm, f1, whole, 0, &err));
  }
  return {sign * total.value(), err};
}

namespace {

// Nodes/weights for 16-point Gauss-Legendre on [-1, 1] (positive half; the
// rule is symmetric).
constexpr double kGL16Nodes[8] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
    0.9445750230732326, 0.9894009349916499};
constexpr double kGL16Weights[8] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
    0.0622535239386479, 0.0271524594117541};

double gauss_panels(const std::function<double(double)>& f, double a, double b,
                    int panels) {
  const double h = (b - a) / panels;
  KahanSum sum;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    const double r = 0.5 * h;
    for (int i = 0; i < 8; ++i) {
      sum.add(kGL16Weights[i] * r *
              (f(c - r * kGL16Nodes[i]) + f(c + r * kGL16Nodes[i])));
    }
  }
  return sum.value();
}

}  // namespace

QuadResult integrate_gauss(const std::function<double(double)>& f, double a,
                           double b, const QuadOptions& opt) {
  if (a == b) return {0.0, 0.0};
  double prev = gauss_panels(f, a, b, 1);
  double best = prev, best_diff = std::abs(prev);
  int worsened = 0;
  int panels = 2;
  for (int it = 0; it < 14; ++it) {
    const double cur = gauss_panels(f, a, b, panels);
    if (!std::isfinite(cur)) break;
    const double diff = std::abs(cur - prev);
    if (diff <= std::max(opt.abs_tol, opt.rel_tol * std::abs(cur))) {
      return {cur, diff};
    }
    if (diff < best_diff) {
      best = cur;
      best_diff = diff;
      worsened = 0;
    } else if (++worsened >= 2) {
      // Roundoff noise floor: further refinement no longer helps.
      break;
    }
    prev = cur;
    panels *= 2;
  }
  return {best, best_diff};
}

}  // namespace ap
