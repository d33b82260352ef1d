#include "ap/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "ap/detail/parallel.hpp"
#include "ap/quadrature.hpp"

namespace ap {

namespace detail {

int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("HORSESHOE_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Waveforms and forcing
// ---------------------------------------------------------------------------

Waveform Waveform::sine() {
  Waveform w;
  w.name = "sin";
  w.value = [](double s) { return std::sin(s); };
  w.d1 = [](double s) { return std::cos(s); };
  w.d2 = [](double s) { return -std::sin(s); };
  w.period = 2.0 * M_PI;
  return w;
}

Waveform Waveform::cosine() {
  Waveform w;
  w.name = "cos";
  w.value = [](double s) { return std::cos(s); };
  w.d1 = [](double s) { return -std::sin(s); };
  w.d2 = [](double s) { return -std::cos(s); };
  w.period = 2.0 * M_PI;
  return w;
}

Waveform Waveform::from_name(const std::string& name) {
  if (name == "sin") return sine();
  if (name == "cos") return cosine();
  throw std::invalid_argument("unknown waveform: " + name);
}

Forcing Forcing::constant(double k, double damping) {
  if (damping < 0.0) throw std::domain_error("forcing: damping < 0");
  Forcing f;
  f.kind_ = Kind::kConstant;
  f.k_ = k;
  f.damping_ = damping;
  return f;
}

Forcing Forcing::step(double k1, double k2, double t1, double t2,
                      double damping) {
  if (damping < 0.0) throw std::domain_error("forcing: damping < 0");
  if (k1 == k2) throw std::domain_error("step forcing: requires k1 != k2");
  if (!(t1 > 0.0) || !(t2 > 0.0)) {
    throw std::domain_error("step forcing: requires t1 > 0 and t2 > 0");
  }
  Forcing f;
  f.kind_ = Kind::kStep;
  f.k_ = k1;
  f.k2_ = k2;
  f.t1_ = t1;
  f.t2_ = t2;
  f.damping_ = damping;
  return f;
}

Forcing Forcing::periodic(double k, double eps, double omega, Waveform w,
                          double phase, double damping) {
  if (damping < 0.0) throw std::domain_error("forcing: damping < 0");
  if (!(omega > 0.0)) throw std::domain_error("periodic forcing: omega <= 0");
  // Zero-mean check over one period of the waveform.
  const QuadResult mean =
      integrate_adaptive(w.value, 0.0, w.period, QuadOptions{1e-10, 1e-12});
  if (std::abs(mean.value) > 1e-8 * w.period) {
    throw std::domain_error("periodic forcing: waveform has nonzero mean");
  }
  Forcing f;
  f.kind_ = Kind::kPeriodic;
  f.k_ = k;
  f.eps_ = eps;
  f.omega_ = omega;
  f.phase_ = phase;
  f.wave_ = std::move(w);
  f.damping_ = damping;
  return f;
}

double Forcing::operator()(double t) const {
  switch (kind_) {
    case Kind::kConstant:
      return k_;
    case Kind::kStep: {
      const double T = t1_ + t2_;
      double u = std::fmod(t, T);
      if (u < 0.0) u += T;
      return u < t1_ ? k_ : k2_;
    }
    case Kind::kPeriodic:
      return k_ + eps_ * wave_.value(omega_ * t + phase_);
  }
  return k_;
}

std::optional<double> Forcing::period() const {
  switch (kind_) {
    case Kind::kConstant:
      return std::nullopt;
    case Kind::kStep:
      return t1_ + t2_;
    case Kind::kPeriodic:
      return wave_.period / omega_;
  }
  return std::nullopt;
}

std::vector<double> Forcing::switch_times(double t_from, double t_to) const {
  std::vector<double> out;
  if (kind_ != Kind::kStep || t_to <= t_from) return out;
  const double T = t1_ + t2_;
  // Jumps at n*T and n*T + t1 for all integers n.
  const long n0 = static_cast<long>(std::floor(t_from / T)) - 1;
  for (long n = n0;; ++n) {
    const double base = static_cast<double>(n) * T;
    if (base > t_to) break;
    for (double s : {base, base + t1_}) {
      if (s > t_from && s < t_to) out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with dense output
// ---------------------------------------------------------------------------

double Trajectory::t_begin() const { return times_.front(); }
double Trajectory::t_end() const { return times_.back(); }
PhasePoint Trajectory::front() const { return states_.front(); }
PhasePoint Trajectory::back() const { return states_.back(); }

PhasePoint Trajectory::eval(double t) const {
  if (steps_.empty()) return states_.front();
  // Binary search for the step containing t.
  std::size_t lo = 0, hi = steps_.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (t > steps_[mid].t0 + steps_[mid].h) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  const DenseStep& s = steps_[lo];
  const double th = std::clamp((t - s.t0) / s.h, 0.0, 1.0);
  const double th1 = 1.0 - th;
  auto poly = [&](const std::array<double, 5>& c) {
    return c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4])));
  };
  return {poly(s.cx), poly(s.cy)};
}

// In-module access to the trajectory internals during construction.
struct TrajectoryBuilder {
  static void seed(Trajectory* traj, double t0, PhasePoint z0) {
    traj->times_.push_back(t0);
    traj->states_.push_back(z0);
  }
  static void push_step(Trajectory* traj, double t, PhasePoint z, double step_t0,
                        double step_h, const std::array<double, 5>& cx,
                        const std::array<double, 5>& cy) {
    traj->times_.push_back(t);
    traj->states_.push_back(z);
    traj->steps_.push_back({step_t0, step_h, cx, cy});
  }
  static void push_event(Trajectory* traj, TrajectoryEvent ev) {
    traj->events_.push_back(ev);
  }
  static void set_status(Trajectory* traj, TrajectoryStatus st) {
    traj->status_ = st;
  }
};

namespace {

struct Rhs {
  const Nonlinearity* f;
  double damping;
  // Forcing restricted to the current smooth segment.
  const Forcing* forcing;

  void operator()(double t, double x, double y, double* dx, double* dy) const {
    *dx = y;
    *dy = -damping * y - (*f)(x) + (*forcing)(t);
  }
};

struct StepData {
  double t0, h;
  double x0, y0, x1, y1;
  std::array<double, 5> cx, cy;
};

class Dopri5Core {
 public:
  Dopri5Core(const Rhs& rhs, const IntegratorOptions& opt)
      : rhs_(rhs), opt_(opt) {}

  // One error-controlled attempt with step size *h (adjusted on rejection).
  // Returns false when the step size underflows.
  bool step(double t, double x, double y, double* h, StepData* out) {
    double k1x, k1y;
    rhs_(t, x, y, &k1x, &k1y);
    for (int attempt = 0; attempt < 60; ++attempt) {
      const double hh = *h;
      if (!try_step(t, x, y, k1x, k1y, hh, out)) {
        // Nonfinite values inside the stages; shrink hard.
        *h = hh * 0.1;
        if (std::abs(*h) < 1e-14 * (1.0 + std::abs(t))) return false;
        continue;
      }
      const double err = error_norm(x, y, *out);
      if (err <= 1.0) {
        const double fac =
            std::clamp(0.9 * std::pow(std::max(err, 1e-10), -0.2), 0.2, 5.0);
        *h = hh * fac;
        return true;
      }
      const double fac =
          std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
      *h = hh * fac;
      if (std::abs(*h) < 1e-14 * (1.0 + std::abs(t))) return false;
    }
    return false;
  }

 private:
  bool try_step(double t, double x, double y, double k1x, double k1y, double h,
                StepData* out) {
    // Dormand-Prince coefficients.
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                            a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113,
                            b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                            c5 = 8.0 / 9;

    double k2x, k2y, k3x, k3y, k4x, k4y, k5x, k5y, k6x, k6y, k7x, k7y;
    rhs_(t + c2 * h, x + h * a21 * k1x, y + h * a21 * k1y, &k2x, &k2y);
    rhs_(t + c3 * h, x + h * (a31 * k1x + a32 * k2x),
         y + h * (a31 * k1y + a32 * k2y), &k3x, &k3y);
    rhs_(t + c4 * h, x + h * (a41 * k1x + a42 * k2x + a43 * k3x),
         y + h * (a41 * k1y + a42 * k2y + a43 * k3y), &k4x, &k4y);
    rhs_(t + c5 * h, x + h * (a51 * k1x + a52 * k2x + a53 * k3x + a54 * k4x),
         y + h * (a51 * k1y + a52 * k2y + a53 * k3y + a54 * k4y), &k5x, &k5y);
    rhs_(t + h, x + h * (a61 * k1x + a62 * k2x + a63 * k3x + a64 * k4x +
                         a65 * k5x),
         y + h * (a61 * k1y + a62 * k2y + a63 * k3y + a64 * k4y + a65 * k5y),
         &k6x, &k6y);
    const double x1 = x + h * (b1 * k1x + b3 * k3x + b4 * k4x + b5 * k5x +
                               b6 * k6x);
    const double y1 = y + h * (b1 * k1y + b3 * k3y + b4 * k4y + b5 * k5y +
                               b6 * k6y);
    rhs_(t + h, x1, y1, &k7x, &k7y);
    if (!std::isfinite(x1) || !std::isfinite(y1)) return false;

    // Embedded error (difference of the 5th and 4th order solutions).
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                            e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    errx_ = h * (e1 * k1x + e3 * k3x + e4 * k4x + e5 * k5x + e6 * k6x +
                 e7 * k7x);
    erry_ = h * (e1 * k1y + e3 * k3y + e4 * k4y + e5 * k5y + e6 * k6y +
                 e7 * k7y);

    // Dense-output coefficients (4th-order continuous extension).
    static constexpr double d1 = -12715105075.0 / 11282082432.0;
    static constexpr double d3 = 87487479700.0 / 32700410799.0;
    static constexpr double d4 = -10690763975.0 / 1880347072.0;
    static constexpr double d5 = 701980252875.0 / 199316789632.0;
    static constexpr double d6 = -1453857185.0 / 822651844.0;
    static constexpr double d7 = 69997945.0 / 29380423.0;

    out->t0 = t;
    out->h = h;
    out->x0 = x;
    out->y0 = y;
    out->x1 = x1;
    out->y1 = y1;
    const double dxv = x1 - x;
    const double dyv = y1 - y;
    out->cx = {x, dxv, h * k1x - dxv, dxv - h * k7x - (h * k1x - dxv),
               h * (d1 * k1x + d3 * k3x + d4 * k4x + d5 * k5x + d6 * k6x +
                    d7 * k7x)};
    out->cy = {y, dyv, h * k1y - dyv, dyv - h * k7y - (h * k1y - dyv),
               h * (d1 * k1y + d3 * k3y + d4 * k4y + d5 * k5y + d6 * k6y +
                    d7 * k7y)};
    return true;
  }

  double error_norm(double x, double y, const StepData& s) const {
    const double skx =
        opt_.atol + opt_.rtol * std::max(std::abs(x), std::abs(s.x1));
    const double sky =
        opt_.atol + opt_.rtol * std::max(std::abs(y), std::abs(s.y1));
    const double ex = errx_ / skx;
    const double ey = erry_ / sky;
    return std::sqrt(0.5 * (ex * ex + ey * ey));
  }

  Rhs rhs_;
  IntegratorOptions opt_;
  double errx_ = 0.0, erry_ = 0.0;
};

double dense_eval(const StepData& s, const std::array<double, 5>& c,
                  double t) {
  const double th = (t - s.t0) / s.h;
  const double th1 = 1.0 - th;
  return c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4])));
}

// First transversal breakpoint crossing inside an accepted step, if any.
std::optional<std::pair<double, double>> locate_breakpoint_crossing(
    const StepData& s, const std::vector<double>& breakpoints) {
  std::optional<std::pair<double, double>> best;
  for (double b : breakpoints) {
    // Subsample the dense output; a single step may contain a turning point.
    constexpr int kProbes = 8;
    double tp = s.t0;
    double vp = s.x0 - b;
    const double scale = 1e-12 * (1.0 + std::abs(b));
    for (int i = 1; i <= kProbes; ++i) {
      const double tn = s.t0 + s.h * i / kProbes;
      const double vn =
          (i == kProbes ? s.x1 : dense_eval(s, s.cx, tn)) - b;
      if (std::abs(vp) > scale && vp * vn < 0.0) {
        // Bisect inside [tp, tn].
        double lo = tp, hi = tn, flo = vp;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = dense_eval(s, s.cx, mid) - b;
          if (flo * fm <= 0.0) {
            hi = mid;
          } else {
            lo = mid;
            flo = fm;
          }
        }
        const double tc = 0.5 * (lo + hi);
        if (tc > s.t0 + 1e-13 * (1.0 + std::abs(s.t0)) &&
            (!best || tc < best->first)) {
          best = {tc, b};
        }
        break;
      }
      tp = tn;
      vp = vn;
    }
  }
  return best;
}

struct RunSink {
  Trajectory* traj = nullptr;  // optional dense recording
};

// Integrates one smooth segment [t0, t1] (constant forcing branch or smooth
// periodic forcing), locating breakpoint crossings of f.
TrajectoryStatus run_segment(const Nonlinearity& f, const Forcing& forcing,
                             double damping, double t0, double t1,
                             PhasePoint* z, const IntegratorOptions& opt,
                             const RunSink& sink, long* steps_used) {
  Rhs rhs{&f, damping, &forcing};
  Dopri5Core core(rhs, opt);
  double t = t0;
  double h = std::min(opt.h_init, t1 - t0);
  double x = z->x, y = z->y;
  const bool has_breaks = !f.breakpoints().empty();

  while (t < t1) {
    if (++(*steps_used) > opt.max_steps) return TrajectoryStatus::kStepUnderflow;
    h = std::min(h, t1 - t);
    StepData s;
    double h_next = h;
    if (!core.step(t, x, y, &h_next, &s)) {
      return TrajectoryStatus::kStepUnderflow;
    }

    std::optional<double> hit_breakpoint;
    if (has_breaks) {
      const auto crossing = locate_breakpoint_crossing(s, f.breakpoints());
      const double hc = crossing ? crossing->first - s.t0 : 0.0;
      if (crossing && hc < s.h - 1e-13 &&
          hc > 1e-13 * (1.0 + std::abs(t))) {
        // Redo the step so it ends exactly at the crossing, then restart
        // there. Error control may accept a shorter step; the crossing is
        // then re-detected on a later step.
        double h_redo = hc;
        StepData se;
        if (!core.step(t, x, y, &h_redo, &se)) {
          return TrajectoryStatus::kStepUnderflow;
        }
        s = se;
        if (std::abs(s.h - hc) <= 1e-12 * (1.0 + std::abs(hc))) {
          hit_breakpoint = crossing->second;
        }
        h_next = h;  // keep the previous proposal after the forced short step
      }
    }

    t = s.t0 + s.h;
    x = s.x1;
    y = s.y1;
    h = h_next;
    if (sink.traj) {
      TrajectoryBuilder::push_step(sink.traj, t, {x, y}, s.t0, s.h, s.cx,
                                   s.cy);
      if (hit_breakpoint) {
        TrajectoryBuilder::push_event(
            sink.traj, {EventKind::kBreakpointCrossing, t, *hit_breakpoint});
      }
    }
    if (std::abs(x) + std::abs(y) > opt.blowup_bound) {
      *z = {x, y};
      return TrajectoryStatus::kBlowUp;
    }
  }
  *z = {x, y};
  return TrajectoryStatus::kOk;
}

TrajectoryStatus run(const Nonlinearity& f, const Forcing& forcing,
                     PhasePoint* z, double t0, double t1,
                     const IntegratorOptions& opt, const RunSink& sink) {
  if (!(t1 > t0)) {
    if (t1 == t0) return TrajectoryStatus::kOk;
    throw std::invalid_argument("integrate: requires t1 >= t0");
  }
  std::vector<double> cuts = forcing.switch_times(t0, t1);
  cuts.push_back(t1);
  long steps_used = 0;
  double seg_start = t0;
  for (double seg_end : cuts) {
    const TrajectoryStatus st = run_segment(
        f, forcing, forcing.damping(), seg_start, seg_end, z, opt, sink,
        &steps_used);
    if (st != TrajectoryStatus::kOk) return st;
    if (sink.traj && seg_end != t1) {
      TrajectoryBuilder::push_event(
          sink.traj,
          {EventKind::kForcingSwitch, seg_end,
           forcing(seg_end + 1e-12 * (1.0 + std::abs(seg_end)))});
    }
    seg_start = seg_end;
  }
  return TrajectoryStatus::kOk;
}

}  // namespace

Trajectory integrate(const Nonlinearity& f, const Forcing& forcing,
                     PhasePoint z0, double t0, double t1,
                     const IntegratorOptions& opt) {
  Trajectory traj;
  TrajectoryBuilder::seed(&traj, t0, z0);
  RunSink sink{&traj};
  PhasePoint z = z0;
  TrajectoryBuilder::set_status(&traj, run(f, forcing, &z, t0, t1, opt, sink));
  return traj;
}

FlowResult advance(const Nonlinearity& f, const Forcing& forcing,
                   PhasePoint z0, double t0, double t1,
                   const IntegratorOptions& opt) {
  PhasePoint z = z0;
  const TrajectoryStatus st = run(f, forcing, &z, t0, t1, opt, RunSink{});
  return {z, st};
}

FlowResult poincare_map(const Nonlinearity& f, const Forcing& forcing,
                        PhasePoint z0, const IntegratorOptions& opt) {
  const auto T = forcing.period();
  if (!T) {
    throw std::domain_error("poincare_map: forcing has no period");
  }
  return advance(f, forcing, z0, 0.0, *T, opt);
}

IterateResult iterate(const Nonlinearity& f, const Forcing& forcing,
                      PhasePoint z0, int n, const IntegratorOptions& opt) {
  IterateResult out;
  out.points.reserve(n);
  PhasePoint z = z0;
  for (int i = 0; i < n; ++i) {
    const FlowResult r = poincare_map(f, forcing, z, opt);
    if (r.status != TrajectoryStatus::kOk) {
      out.truncated = true;
      break;
    }
    z = r.z;
    out.points.push_back(z);
  }
  return out;
}

std::vector<ScatterRow> scatter(const Nonlinearity& f, const Forcing& forcing,
                                const ICLine& ic, int n_iter,
                                const IntegratorOptions& opt) {
  if (ic.count < 1) throw std::domain_error("scatter: requires count >= 1");
  std::vector<std::vector<ScatterRow>> per_ic(ic.count);
  detail::parallel_for(ic.count, [&](int i) {
    const double u0 =
        ic.count == 1
            ? ic.u0_min
            : ic.u0_min + (ic.u0_max - ic.u0_min) * i / (ic.count - 1);
    std::vector<ScatterRow>& rows = per_ic[i];
    rows.push_back({i, 0, u0, ic.y0, true});
    PhasePoint z{u0, ic.y0};
    for (int it = 1; it <= n_iter; ++it) {
      const FlowResult r = poincare_map(f, forcing, z, opt);
      if (r.status != TrajectoryStatus::kOk) {
        rows.push_back({i, it, r.z.x, r.z.y, false});
        break;
      }
      z = r.z;
      rows.push_back({i, it, z.x, z.y, true});
    }
  });
  std::vector<ScatterRow> out;
  for (auto& rows : per_ic) {
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

namespace {

struct Vec2 {
  double a = 0.0, b = 0.0;
  double norm() const { return std::hypot(a, b); }
};

// One damped-Newton fixed-point polish; returns the converged point or
// nothing.
std::optional<FixedPointHit> polish_fixed_point(
    const Nonlinearity& f, const Forcing& forcing, PhasePoint seed,
    const IntegratorOptions& opt, double residual_target) {
  auto G = [&](PhasePoint z) -> std::optional<Vec2> {
    const FlowResult r = poincare_map(f, forcing, z, opt);
    if (r.status != TrajectoryStatus::kOk) return std::nullopt;
    return Vec2{r.z.x - z.x, r.z.y - z.y};
  };
  PhasePoint z = seed;
  auto g = G(z);
  if (!g) return std::nullopt;
  for (int it = 0; it < 40; ++it) {
    if (g->norm() < residual_target) return FixedPointHit{z, g->norm()};
    const double d = 1e-7 * (1.0 + std::abs(z.x) + std::abs(z.y));
    const auto gx = G({z.x + d, z.y});
    const auto gy = G({z.x, z.y + d});
    if (!gx || !gy) return std::nullopt;
    // Jacobian of G by forward differences.
    const double j11 = (gx->a - g->a) / d, j12 = (gy->a - g->a) / d;
    const double j21 = (gx->b - g->b) / d, j22 = (gy->b - g->b) / d;
    const double det = j11 * j22 - j12 * j21;
    double sx, sy;
    if (std::abs(det) > 1e-14) {
      sx = -(j22 * g->a - j12 * g->b) / det;
      sy = -(-j21 * g->a + j11 * g->b) / det;
    } else {
      // Near-singular Jacobian: secant-style fallback along -G.
      sx = -g->a;
      sy = -g->b;
    }
    // Damping: halve until the residual decreases.
    bool moved = false;
    for (double lam = 1.0; lam > 1.0 / 1024; lam *= 0.5) {
      const PhasePoint trial{z.x + lam * sx, z.y + lam * sy};
      const auto gt = G(trial);
      if (gt && gt->norm() < g->norm()) {
        z = trial;
        g = gt;
        moved = true;
        break;
      }
    }
    if (!moved) return std::nullopt;
  }
  if (g->norm() < residual_target) return FixedPointHit{z, g->norm()};
  return std::nullopt;
}

}  // namespace

std::vector<FixedPointHit> fixed_point_scan(
    const Nonlinearity& f, const Forcing& forcing, const Rect& window,
    const GridSpec& grid, const IntegratorOptions& opt, double dedup_radius,
    double residual_target) {
  if (!(window.x_hi > window.x_lo) || !(window.y_hi > window.y_lo)) {
    throw std::domain_error("fixed_point_scan: empty window");
  }
  const int n = grid.nx * grid.ny;
  std::vector<std::optional<FixedPointHit>> hits(n);
  detail::parallel_for(n, [&](int idx) {
    const int i = idx % grid.nx;
    const int j = idx / grid.nx;
    const double x =
        window.x_lo + (window.x_hi - window.x_lo) * (i + 0.5) / grid.nx;
    const double y =
        window.y_lo + (window.y_hi - window.y_lo) * (j + 0.5) / grid.ny;
    hits[idx] = polish_fixed_point(f, forcing, {x, y}, opt, residual_target);
  });

  std::vector<FixedPointHit> out;
  const double mx = 0.05 * (window.x_hi - window.x_lo);
  const double my = 0.05 * (window.y_hi - window.y_lo);
  for (const auto& h : hits) {
    if (!h) continue;
    if (h->z.x < window.x_lo - mx || h->z.x > window.x_hi + mx ||
        h->z.y < window.y_lo - my || h->z.y > window.y_hi + my) {
      continue;
    }
    bool dup = false;
    for (const auto& e : out) {
      if (std::hypot(e.z.x - h->z.x, e.z.y - h->z.y) < dedup_radius) {
        dup = true;
        break;
      }
    }
    if (!dup) out.push_back(*h);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.z.x != b.z.x ? a.z.x < b.z.x : a.z.y < b.z.y;
  });
  return out;
}

std::vector<OscillationCount> oscillation_count(
    const Trajectory& traj, const std::function<double(double)>& center_x,
    const std::vector<std::pair<double, double>>& intervals,
    double center_tol) {
  std::vector<OscillationCount> out;
  out.reserve(intervals.size());
  for (const auto& [ta, tb] : intervals) {
    if (ta < traj.t_begin() - 1e-12 || tb > traj.t_end() + 1e-12 || tb <= ta) {
      throw std::domain_error(
          "oscillation_count: interval not covered by trajectory");
    }
    OscillationCount oc;
    // Walk with adaptive angular subdivision: clockwise-positive unwrapping.
    double t = ta;
    PhasePoint z = traj.eval(t);
    double cx = center_x(t);
    double prev_angle = std::atan2(z.y, z.x - cx);
    double dt = (tb - ta) / 256.0;
    while (t < tb) {
      double step = std::min(dt, tb - t);
      double tn, angle_n;
      for (;;) {
        tn = t + step;
        const PhasePoint zn = traj.eval(tn);
        const double cxn = center_x(tn);
        const double dx = zn.x - cxn, dy = zn.y;
        if (std::hypot(dx, dy) < center_tol) {
          oc.indeterminate = true;
          angle_n = prev_angle;
          break;
        }
        angle_n = std::atan2(dy, dx);
        double d = angle_n - prev_angle;
        while (d > M_PI) d -= 2.0 * M_PI;
        while (d < -M_PI) d += 2.0 * M_PI;
        if (std::abs(d) < 0.4 || step < 1e-12 * (tb - ta)) {
          oc.total_angle += -d;  // clockwise-positive
          break;
        }
        step *= 0.5;
      }
      if (oc.indeterminate) break;
      prev_angle = angle_n;
      t = tn;
    }
    // Completed turns: floor for the clockwise-positive direction, but a
    // small negative drift of a non-encircling trajectory still counts as 0.
    oc.count = static_cast<int>(oc.total_angle / (2.0 * M_PI));
    out.push_back(oc);
  }
  return out;
}

}  // namespace ap
