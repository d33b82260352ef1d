#include "ap/rootfind.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ap {

double find_root(const std::function<double(double)>& g, double lo, double hi,
                 const RootOptions& opt) {
  double flo = g(lo);
  double fhi = g(hi);
  if (std::abs(flo) <= opt.f_tol) return lo;
  if (std::abs(fhi) <= opt.f_tol) return hi;
  if (flo * fhi > 0.0) {
    throw std::invalid_argument("find_root: no sign change on [" +
                                std::to_string(lo) + ", " + std::to_string(hi) +
                                "]");
  }
  double a = lo, b = hi, fa = flo, fb = fhi;
  for (int it = 0; it < opt.max_iter; ++it) {
    // Secant candidate, clipped to the bracket interior; fall back to the
    // midpoint when it degenerates.
    double mid = 0.5 * (a + b);
    double x = mid;
    const double denom = fb - fa;
    if (denom != 0.0) {
      double sec = (fa * b - fb * a) / denom;
      const double margin = 0.01 * (b - a);
      if (sec > a + margin && sec < b - margin) x = sec;
    }
    double fx = g(x);
    if (std::abs(fx) <= opt.f_tol || (b - a) <= opt.x_tol * (1.0 + std::abs(x)))
      return x;
    if (fa * fx < 0.0) {
      b = x;
      fb = fx;
    } else {
      a = x;
      fa = fx;
    }
  }
  return 0.5 * (a + b);
}

double find_root_expand(const std::function<double(double)>& g, double start,
                        double initial_step, int direction,
                        const RootOptions& opt) {
  double step = std::abs(initial_step);
  if (step == 0.0) step = 1e-3;
  double a = start;
  double fa = g(a);
  if (std::abs(fa) <= opt.f_tol) return a;
  for (int it = 0; it < 200; ++it) {
    double b = start + direction * step;
    double fb = g(b);
    if (std::abs(fb) <= opt.f_tol) return b;
    if (fa * fb < 0.0) {
      return direction > 0 ? find_root(g, a, b, opt) : find_root(g, b, a, opt);
    }
    a = b;
    fa = fb;
    step *= 2.0;
  }
  throw std::runtime_error("find_root_expand: no sign change found");
}

}  // namespace ap
