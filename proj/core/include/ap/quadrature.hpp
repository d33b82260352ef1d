#ifndef AP_QUADRATURE_HPP
#define AP_QUADRATURE_HPP

#include <functional>
#include <vector>

namespace ap {

struct QuadOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  int max_depth = 50;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
};

// Compensated accumulator for long panel sums.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Adaptive Simpson with Richardson error estimate. `breaks` lists interior
// abscissas where the integrand loses smoothness; the interval is split there
// before adaptation starts.
QuadResult integrate_adaptive(const std::function<double(double)>& f, double a,
                              double b, const QuadOptions& opt = {},
                              const std::vector<double>& breaks = {});

// 16-point Gauss-Legendre panels, doubling the panel count until two
// consecutive estimates agree to tolerance. For integrands that are smooth on
// (a, b) but not cheaply adaptive (e.g. after a turning-point substitution).
QuadResult integrate_gauss(const std::function<double(double)>& f, double a,
                           double b, const QuadOptions& opt = {});

}  // namespace ap

#endif  // AP_QUADRATURE_HPP
