#ifndef AP_TIMEMAP_HPP
#define AP_TIMEMAP_HPP

#include "ap/model.hpp"
#include "ap/quadrature.hpp"

namespace ap::timemap {

// Travel time along an energy level, or a divergence flag when the query ends
// at the saddle on its own level (the integral is logarithmically infinite
// there). Callers must branch on `divergent` before consuming `value`.
struct TimeResult {
  double value = 0.0;
  double error = 0.0;
  bool divergent = false;
};

// t = integral of ds / sqrt(2 (rho - phi_k(s))) over [x1, x2]. Endpoints may
// be simple turning points (rho = phi there); the inverse-square-root
// singularity is removed by the substitution s = x_t -+ sigma^2 and the
// transformed integrand handled by Gauss-Legendre panels. An interior zero of
// rho - phi is a domain error.
TimeResult arc_time(const EnergyFrame& frame, double rho, double x1, double x2,
                    const QuadOptions& opt = {});

// Time from (x_-(rho), 0) to the point of the closed orbit above r.
// Requires phi(x_s) < rho < phi(x_u) and x_-(rho) < r <= x_+(rho).
TimeResult orbit_arc_time(const EnergyFrame& frame, double rho, double r,
                          const QuadOptions& opt = {});

// Fundamental period of the closed orbit at level rho.
TimeResult orbit_period(const EnergyFrame& frame, double rho,
                        const QuadOptions& opt = {});

// Symmetric transit along the left unbounded branch from (r, +y) to (r, -y).
// Requires rho < phi(x_u) and r < x_*(rho).
TimeResult left_branch_time(const EnergyFrame& frame, double rho, double r,
                            const QuadOptions& opt = {});

// Symmetric transit along the outer unbounded line from (r, +y) to (r, -y).
// Requires rho > phi(x_u) and r < x^*(rho).
TimeResult outer_branch_time(const EnergyFrame& frame, double rho, double r,
                             const QuadOptions& opt = {});

}  // namespace ap::timemap

#endif  // AP_TIMEMAP_HPP
