#ifndef AP_MODEL_HPP
#define AP_MODEL_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ap {

enum class Smoothness {
  kLipschitz,  // C0, locally Lipschitz (e.g. |s|); Melnikov machinery rejects
  kC2Plus,     // at least C2 away from nowhere; homoclinic analysis allowed
};

// One-well nonlinearity: f(0) = 0, strictly decreasing on (-inf, 0], strictly
// increasing on [0, inf), f -> +inf at both ends. The potential F(s) is the
// integral of f from 0. Construction runs a finite sample check of these
// properties (grid plus growth probes); it is a sanity gate, not a proof.
class Nonlinearity {
 public:
  using Fn = std::function<double(double)>;

  Nonlinearity(std::string name, Fn f, Fn potential, Fn derivative,
               std::vector<double> breakpoints, Smoothness smoothness);

  // Catalog. "abs": f(s) = |s|. "sqrt1p": f(s) = sqrt(1 + s^2) - 1.
  static Nonlinearity abs_value();
  static Nonlinearity sqrt1p();
  static Nonlinearity from_name(const std::string& name);

  const std::string& name() const { return name_; }
  double operator()(double s) const { return f_(s); }
  double potential(double s) const { return potential_(s); }
  // Undefined exactly at breakpoints; callers keep away from them.
  double derivative(double s) const { return derivative_(s); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  Smoothness smoothness() const { return smoothness_; }

  // Inverse of the monotone branches: f restricted to (-inf,0] / [0,inf).
  double inverse_left(double k) const;
  double inverse_right(double k) const;

 private:
  void validate() const;

  std::string name_;
  Fn f_;
  Fn potential_;
  Fn derivative_;
  std::vector<double> breakpoints_;
  Smoothness smoothness_;
};

// Equilibrium abscissas of x'' + f(x) = k for k >= 0: saddle x_u <= 0 and
// center x_s >= 0 (equal iff k == 0).
struct Equilibria {
  double x_u;
  double x_s;
};
Equilibria equilibria(const Nonlinearity& f, double k);

// Fixed-k view of the autonomous problem, with the derived saddle/center data
// and the auxiliary potential phi_k(x) = F(x) - k x.
class EnergyFrame {
 public:
  EnergyFrame(Nonlinearity f, double k);

  const Nonlinearity& f() const { return f_; }
  double k() const { return k_; }
  double x_u() const { return x_u_; }
  double x_s() const { return x_s_; }
  double phi_at_xu() const { return phi_xu_; }
  double phi_at_xs() const { return phi_xs_; }
  // Homoclinic x-axis intercept; only defined for k > 0.
  double x_h() const;
  bool has_homoclinic() const { return x_h_.has_value(); }

  double phi(double x) const { return f_.potential(x) - k_ * x; }
  double dphi(double x) const { return f_(x) - k_; }
  double energy(double x, double y) const { return 0.5 * y * y + phi(x); }

  // phi(x_ref) - phi(s) without cancellation for s near x_ref: the direct
  // difference is replaced by a 3-point Gauss integral of phi' = f - k in the
  // near field. Time maps rely on this at turning points, where the direct
  // difference loses all significant digits.
  double phi_diff(double x_ref, double s) const;

  // phi(x_u) - phi(s); the homoclinic-level special case of phi_diff.
  double saddle_gap(double s) const;

 private:
  Nonlinearity f_;
  double k_;
  double x_u_, x_s_;
  double phi_xu_, phi_xs_;
  std::optional<double> x_h_;
};

enum class LevelKind {
  kSaddleLoop,        // rho == phi(x_u), k > 0: saddle structure + loop
  kThreeRoots,        // phi(x_s) < rho < phi(x_u)
  kCenterTangent,     // rho == phi(x_s): center plus one left root
  kOuterU,            // rho > phi(x_u): single unbounded outer line
  kInnerV,            // rho < phi(x_s): single left branch
  kDegenerateSingle,  // k == 0, rho == 0: the coalesced equilibrium
};

enum class RootKind {
  kStarLeft,    // x_*(rho) < x_u
  kMinus,       // x_-(rho) in (x_u, x_s)
  kPlus,        // x_+(rho) in (x_s, x_h)
  kStarRight,   // x^*(rho) > x_h
  kSaddle,      // x_u itself
  kCenter,      // x_s itself
  kHomoclinic,  // x_h
  kOrigin,      // x = 0 (k == 0 degenerate level)
};

struct LevelRoot {
  RootKind kind;
  double x;
};

struct LevelClassification {
  double rho;
  LevelKind kind;
  std::vector<LevelRoot> roots;

  std::optional<double> root(RootKind kind) const;
};

// Solves phi_k(x) = rho branch by branch (bracketed root-finding on the three
// monotone pieces) and names the solutions. For k == 0 the off-level queries
// map onto the outer/left taxonomy; only rho == 0 is degenerate.
LevelClassification classify_level(const EnergyFrame& frame, double rho,
                                   double tol = 1e-12);

// Root of phi_k(x) = phi_k(x_u) with x > x_s. Requires k > 0.
double homoclinic_intercept(const Nonlinearity& f, double k);

// Nesting of the saddle loops for 0 <= k1 < k2 (the strict chain
// x_u(k2) < x_u(k1) < x_h(k1) < x_h(k2), with x_h(0) read as 0).
struct OrderingReport {
  double x_u_k1, x_u_k2;
  double x_h_k1, x_h_k2;
  bool holds;
};
OrderingReport ordering_check(const Nonlinearity& f, double k1, double k2);

}  // namespace ap

#endif  // AP_MODEL_HPP
