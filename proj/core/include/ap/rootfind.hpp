#ifndef AP_ROOTFIND_HPP
#define AP_ROOTFIND_HPP

#include <functional>

namespace ap {

struct RootOptions {
  double x_tol = 1e-14;
  double f_tol = 1e-13;
  int max_iter = 200;
};

// Root of g on [lo, hi]; g(lo) and g(hi) must have opposite signs (or one of
// them vanishes). Bisection with secant acceleration, derivative-free.
double find_root(const std::function<double(double)>& g, double lo, double hi,
                 const RootOptions& opt = {});

// Expands [lo, hi] geometrically in the given direction (+1 right, -1 left)
// until g changes sign, then solves. Used on monotone branches where a sign
// change is guaranteed eventually.
double find_root_expand(const std::function<double(double)>& g, double start,
                        double initial_step, int direction,
                        const RootOptions& opt = {});

}  // namespace ap

#endif  // AP_ROOTFIND_HPP
