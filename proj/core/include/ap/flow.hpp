#ifndef AP_FLOW_HPP
#define AP_FLOW_HPP

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ap/model.hpp"

namespace ap {

struct PhasePoint {
  double x = 0.0;
  double y = 0.0;
};

// Named T-periodic waveform with derivatives, zero mean over one period.
struct Waveform {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
  double period = 0.0;

  static Waveform sine();
  static Waveform cosine();
  static Waveform from_name(const std::string& name);
};

// Forcing term of x'' + c x' + f(x) = p(t):
//   constant: p = k
//   step:     p alternates k1 on [0,t1), k2 on [t1,t1+t2), period t1+t2
//   periodic: p = k + eps * w(omega t + phase), period 2 pi / omega
class Forcing {
 public:
  enum class Kind { kConstant, kStep, kPeriodic };

  static Forcing constant(double k, double damping = 0.0);
  static Forcing step(double k1, double k2, double t1, double t2,
                      double damping = 0.0);
  static Forcing periodic(double k, double eps, double omega, Waveform w,
                          double phase = 0.0, double damping = 0.0);

  Kind kind() const { return kind_; }
  double damping() const { return damping_; }
  double operator()(double t) const;
  // Fundamental period; empty for constant forcing.
  std::optional<double> period() const;
  // Jump instants of a step forcing inside (t_from, t_to); empty for smooth
  // forcing.
  std::vector<double> switch_times(double t_from, double t_to) const;

  double k() const { return k_; }
  double k2() const { return k2_; }
  double t1() const { return t1_; }
  double t2() const { return t2_; }
  double eps() const { return eps_; }
  double omega() const { return omega_; }
  double phase() const { return phase_; }
  const Waveform& waveform() const { return wave_; }

 private:
  Forcing() = default;

  Kind kind_ = Kind::kConstant;
  double damping_ = 0.0;
  double k_ = 0.0;
  double k2_ = 0.0, t1_ = 0.0, t2_ = 0.0;  // step
  double eps_ = 0.0, omega_ = 0.0, phase_ = 0.0;  // periodic
  Waveform wave_;
};

struct IntegratorOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double blowup_bound = 1e6;  // on |x| + |y|
  double h_init = 1e-4;
  long max_steps = 50'000'000;
};

enum class TrajectoryStatus { kOk, kBlowUp, kStepUnderflow };

enum class EventKind { kForcingSwitch, kBreakpointCrossing };

struct TrajectoryEvent {
  EventKind kind;
  double t;
  double value;  // new forcing level / breakpoint abscissa
};

// Dense solution of one integration run. Step polynomials allow evaluation at
// any time in the covered span.
class Trajectory {
 public:
  double t_begin() const;
  double t_end() const;
  PhasePoint front() const;
  PhasePoint back() const;
  PhasePoint eval(double t) const;
  TrajectoryStatus status() const { return status_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<PhasePoint>& states() const { return states_; }
  const std::vector<TrajectoryEvent>& events() const { return events_; }

 private:
  friend struct TrajectoryBuilder;

  struct DenseStep {
    double t0, h;
    std::array<double, 5> cx;
    std::array<double, 5> cy;
  };

  std::vector<double> times_;         // sample times (step ends, incl. t0)
  std::vector<PhasePoint> states_;    // states at times_
  std::vector<DenseStep> steps_;
  std::vector<TrajectoryEvent> events_;
  TrajectoryStatus status_ = TrajectoryStatus::kOk;
};

// Adaptive Dormand-Prince 5(4) over [t0, t1]. Steps never straddle a step
// forcing switch or a nonlinearity breakpoint crossing; both are located and
// the step restarted there. Exceeding the blow-up bound truncates the run
// with a flag.
Trajectory integrate(const Nonlinearity& f, const Forcing& forcing,
                     PhasePoint z0, double t0, double t1,
                     const IntegratorOptions& opt = {});

// Final state only; avoids dense storage. Used by map iteration and scans.
struct FlowResult {
  PhasePoint z;
  TrajectoryStatus status;
};
FlowResult advance(const Nonlinearity& f, const Forcing& forcing,
                   PhasePoint z0, double t0, double t1,
                   const IntegratorOptions& opt = {});

// One application of the period map. Forcing must be periodic (step or
// periodic kind).
FlowResult poincare_map(const Nonlinearity& f, const Forcing& forcing,
                        PhasePoint z0, const IntegratorOptions& opt = {});

struct IterateResult {
  std::vector<PhasePoint> points;  // up to n successive images
  bool truncated = false;
};
IterateResult iterate(const Nonlinearity& f, const Forcing& forcing,
                      PhasePoint z0, int n, const IntegratorOptions& opt = {});

// Ensemble scan: initial conditions on a horizontal line, n_iter map images
// each. Row order is (ic_index, iter) regardless of worker count; iter 0 is
// the initial condition itself.
struct ICLine {
  double u0_min, u0_max;
  int count;
  double y0;
};
struct ScatterRow {
  int ic_index;
  int iter;
  double x, y;
  bool ok;
};
std::vector<ScatterRow> scatter(const Nonlinearity& f, const Forcing& forcing,
                                const ICLine& ic, int n_iter,
                                const IntegratorOptions& opt = {});

struct Rect {
  double x_lo, x_hi, y_lo, y_hi;
};
struct GridSpec {
  int nx = 12, ny = 8;
};
struct FixedPointHit {
  PhasePoint z;
  double residual;
};
// Grid-seeded damped-Newton search for fixed points of the period map inside
// `window`, deduplicated and sorted by (x, y).
std::vector<FixedPointHit> fixed_point_scan(const Nonlinearity& f,
                                            const Forcing& forcing,
                                            const Rect& window,
                                            const GridSpec& grid,
                                            const IntegratorOptions& opt = {},
                                            double dedup_radius = 1e-6,
                                            double residual_target = 1e-9);

// Winding counts of the trajectory around a moving center (cx(t), 0) over the
// given time intervals, clockwise-positive, floor of total angle / 2 pi.
struct OscillationCount {
  int count = 0;
  double total_angle = 0.0;  // clockwise-positive, radians
  bool indeterminate = false;
};
std::vector<OscillationCount> oscillation_count(
    const Trajectory& traj, const std::function<double(double)>& center_x,
    const std::vector<std::pair<double, double>>& intervals,
    double center_tol = 1e-6);

}  // namespace ap

#endif  // AP_FLOW_HPP
