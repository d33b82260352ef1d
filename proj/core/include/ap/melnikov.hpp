#ifndef AP_MELNIKOV_HPP
#define AP_MELNIKOV_HPP

#include <functional>
#include <vector>

#include "ap/flow.hpp"
#include "ap/model.hpp"

namespace ap::melnikov {

struct HomoclinicGridSpec {
  int n_outer = 256;        // samples between x_s and x_h (clustered at x_h)
  int n_inner = 512;        // geometric samples from x_s toward x_u
  double tail_eps = 1e-10;  // build the table down to q~ = tail_eps * q~(0)
};

// Even solution q of x'' + f(x) = k on the saddle level, q(0) = x_h,
// q'(0) = 0. Built by inverting t(x) = int_x^{x_h} ds / sqrt(2 (phi(x_u) -
// phi(s))) with a turning-point substitution at x_h and a logarithmic
// substitution near the saddle; represented as a monotone cubic table plus
// the exact exponential tail x_u + C e^{-lambda t} beyond t_tail.
class HomoclinicOrbit {
 public:
  static HomoclinicOrbit build(const Nonlinearity& f, double k,
                               const HomoclinicGridSpec& grid = {});

  const EnergyFrame& frame() const { return frame_; }
  double lambda() const { return lambda_; }
  double t_tail() const { return t_tail_; }
  double tail_coefficient() const { return tail_c_; }

  double q(double t) const;        // even in t
  double dq(double t) const;      // odd in t, from the energy relation
  double q_tilde(double t) const { return q(t) - frame_.x_u(); }

  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& positions() const { return xs_; }
  const std::vector<double>& slopes() const { return slopes_; }

  // int_0^min(upto, inf) q_tilde dt, tail handled analytically.
  double q_tilde_integral(double upto) const;
  double q_tilde_integral() const;  // full improper integral

  // int_{-inf}^{inf} q'(t)^2 dt, evaluated as an x-integral on the level set
  // (equals the area enclosed by the saddle loop).
  double dq_squared_integral() const;

 private:
  HomoclinicOrbit(EnergyFrame frame) : frame_(std::move(frame)) {}

  EnergyFrame frame_;
  double lambda_ = 0.0;
  double t_tail_ = 0.0;
  double tail_c_ = 0.0;
  std::vector<double> times_;   // increasing, times_[0] = 0
  std::vector<double> xs_;      // decreasing, xs_[0] = x_h
  std::vector<double> slopes_;  // dq/dt at the samples (<= 0)
};

// Melnikov integral for forcing k + eps * w(omega t): Delta(alpha) =
// int q'(t) p0(t + alpha) dt - c0 int q'(t)^2 dt with p0(t) = w(omega t).
// Truncated at t_cut (default: the orbit's tail time); the discarded tail is
// bounded by delta_tail_bound.
double delta(const HomoclinicOrbit& q, const Waveform& w, double omega,
             double alpha, double c0 = 0.0, double t_cut = -1.0);
double delta_tail_bound(const HomoclinicOrbit& q, const Waveform& w,
                        double eps_amp = 1.0);

// eta(omega) = int_0^inf q_tilde(t) cos(omega t) dt. Evaluated with exact
// oscillatory moments of the cubic table per interval (Filon-type, summed
// with compensation) plus the analytic exponential tail, so the result keeps
// relative accuracy even where eta decays below the table's absolute error.
double eta(const HomoclinicOrbit& q, double omega);

// omega * int_0^inf q_tilde(t) sin(omega t) dt = sum_j (-1)^j Xi_j, the
// alternating series the slow-forcing analysis brackets. Same evaluation
// scheme as eta.
double eta_sine_series(const HomoclinicOrbit& q, double omega);

// Partial alternating-series terms Xi_j = int_0^pi q_tilde((t + j pi)/omega)
// sin(t) dt, j = 0..J.
std::vector<double> xi_partial_sums(const HomoclinicOrbit& q, double omega,
                                    int J);

struct SimpleZero {
  double alpha;
  double slope;  // Delta'(alpha) by central difference
};

struct ZeroReport {
  std::vector<SimpleZero> simple_zeros;
  bool sign_change = false;
  bool identically_zero = false;
  // Critical points of p0 in [0, T) with p0' = 0 != p0''.
  std::vector<double> p0_nondegenerate_critical_points;
  double max_abs_delta = 0.0;
  double amplitude_bound = 0.0;  // 2 ||p0||_inf q_tilde(0)
  // Numerical evidence flags (floating point checks, not proofs): a simple
  // zero supports the transversality route, a bare sign change the
  // degree-theoretic one, and the critical-point list the slow-period route.
  bool evidence_simple_zero = false;
  bool evidence_sign_change = false;
  bool evidence_critical_points = false;
};

ZeroReport detect_zeros(const HomoclinicOrbit& q, const Waveform& w,
                        double omega, int grid_n = 256, double c0 = 0.0);

// Constructive slow-forcing threshold: picks a maximizer/minimizer region of
// w', witnesses (s, delta, r) on each side, and solves
//   int_0^{r/Omega} q_tilde = (1/delta) ||w'||_inf int_{r/Omega}^inf q_tilde
// for Omega by bisection on each branch. Requires a nonconstant waveform.
struct OmegaThreshold {
  double s_up, delta_up, r_up;      // p0' >= delta_up near s_up
  double s_down, delta_down, r_down;  // p0' <= -delta_down near s_down
  double omega_up, omega_down;
  double omega0;  // min of the two branch thresholds
  double p0_d1_max;
};
OmegaThreshold omega_threshold(const HomoclinicOrbit& q, const Waveform& w);

// Area enclosed by the saddle loop of x'' + f(x) = k.
double loop_area(const Nonlinearity& f, double k);

struct AreaScan {
  std::vector<double> theta;
  std::vector<double> area;
  double period = 0.0;
};
// Samples S(theta) = loop_area(f, p(theta)) over one period of p. Requires
// p(theta) > 0 for all sampled theta.
AreaScan loop_area_scan(const Nonlinearity& f,
                        const std::function<double(double)>& p, double period,
                        int n = 256);

struct ThetaInterval {
  double lo, hi;
  double theta_star;  // interior extremum location
  bool contains_max;  // odd-index intervals (S' > 0 entering, < 0 leaving)
  int index;          // 1-based, alternating, odd = max
};
std::vector<ThetaInterval> propose_intervals(const AreaScan& scan);

}  // namespace ap::melnikov

#endif  // AP_MELNIKOV_HPP
