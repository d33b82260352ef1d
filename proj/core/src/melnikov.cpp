#include "ap/melnikov.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ap/quadrature.hpp"
#include "ap/rootfind.hpp"

namespace ap::melnikov {

namespace {

double safe_sqrt2(double gap) { return std::sqrt(2.0 * std::max(gap, 0.0)); }

double waveform_max_abs(const Waveform& w) {
  double m = 0.0;
  for (int i = 0; i < 512; ++i) {
    m = std::max(m, std::abs(w.value(w.period * i / 512.0)));
  }
  return m;
}

}  // namespace

HomoclinicOrbit HomoclinicOrbit::build(const Nonlinearity& f, double k,
                                       const HomoclinicGridSpec& grid) {
  if (f.smoothness() != Smoothness::kC2Plus) {
    throw std::domain_error(
        "homoclinic orbit: nonlinearity must be C2 or better (" + f.name() +
        " is not)");
  }
  if (!(k > 0.0)) {
    throw std::domain_error("homoclinic orbit: requires k > 0");
  }
  HomoclinicOrbit orbit{EnergyFrame(f, k)};
  const EnergyFrame& fr = orbit.frame_;
  const double x_u = fr.x_u(), x_s = fr.x_s(), x_h = fr.x_h();
  const double dfu = f.derivative(x_u);
  if (!(dfu < 0.0)) {
    throw std::domain_error("homoclinic orbit: f'(x_u) >= 0 (no saddle)");
  }
  orbit.lambda_ = std::sqrt(-dfu);

  auto gap = [&fr](double s) { return std::max(fr.saddle_gap(s), 0.0); };

  orbit.times_.push_back(0.0);
  orbit.xs_.push_back(x_h);
  orbit.slopes_.push_back(0.0);

  const QuadOptions qopt{1e-13, 1e-16, 50};

  // Outer leg x in [x_s, x_h]: substitute s = x_h - sigma^2 to absorb the
  // turning point at x_h; uniform sigma grid.
  const double sig_s = std::sqrt(x_h - x_s);
  auto outer = [&](double sig) {
    return 2.0 * sig / std::max(safe_sqrt2(gap(x_h - sig * sig)), 1e-150);
  };
  double t_acc = 0.0;
  for (int j = 1; j <= grid.n_outer; ++j) {
    const double s0 = sig_s * (j - 1) / grid.n_outer;
    const double s1 = sig_s * j / grid.n_outer;
    t_acc += integrate_gauss(outer, s0, s1, qopt).value;
    const double xj = j == grid.n_outer ? x_s : x_h - s1 * s1;
    orbit.times_.push_back(t_acc);
    orbit.xs_.push_back(xj);
    orbit.slopes_.push_back(-safe_sqrt2(gap(xj)));
  }

  // Inner leg x in (x_u, x_s]: substitute s = x_u + e^w; the integrand
  // (s - x_u)/sqrt(2 gap) tends smoothly to 1/lambda at the saddle, so a
  // geometric x grid is uniform in t.
  const double span_in = x_s - x_u;
  const double delta_min = grid.tail_eps * (x_h - x_u);
  const double w_hi = std::log(span_in);
  const double w_lo = std::log(delta_min);
  const double dw = (w_hi - w_lo) / grid.n_inner;
  auto inner = [&](double w) {
    const double d = std::exp(w);
    return d / std::max(safe_sqrt2(gap(x_u + d)), 1e-150);
  };
  for (int j = 1; j <= grid.n_inner; ++j) {
    const double w1 = w_hi - j * dw;
    const double w0 = w1 + dw;
    t_acc += integrate_gauss(inner, w1, w0, qopt).value;
    const double xj = x_u + std::exp(w1);
    orbit.times_.push_back(t_acc);
    orbit.xs_.push_back(xj);
    orbit.slopes_.push_back(-safe_sqrt2(gap(xj)));
  }

  orbit.t_tail_ = orbit.times_.back();
  orbit.tail_c_ =
      (orbit.xs_.back() - x_u) * std::exp(orbit.lambda_ * orbit.t_tail_);

  // Fritsch-Carlson clamp: keeps the Hermite table monotone even if a slope
  // overshoots its secant bound (should not trigger on a resolved grid).
  for (std::size_t i = 0; i + 1 < orbit.times_.size(); ++i) {
    const double d = (orbit.xs_[i + 1] - orbit.xs_[i]) /
                     (orbit.times_[i + 1] - orbit.times_[i]);
    orbit.slopes_[i] = std::max(orbit.slopes_[i], 3.0 * d);
    orbit.slopes_[i + 1] = std::max(orbit.slopes_[i + 1], 3.0 * d);
  }
  return orbit;
}

double HomoclinicOrbit::q(double t) const {
  t = std::abs(t);
  if (t >= t_tail_) {
    return frame_.x_u() + tail_c_ * std::exp(-lambda_ * t);
  }
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - times_.begin());
  if (i == 0) i = 1;
  if (i >= times_.size()) i = times_.size() - 1;
  const double t0 = times_[i - 1], t1 = times_[i];
  const double h = t1 - t0;
  const double th = (t - t0) / h;
  const double th2 = th * th, th3 = th2 * th;
  const double h00 = 2 * th3 - 3 * th2 + 1;
  const double h10 = th3 - 2 * th2 + th;
  const double h01 = -2 * th3 + 3 * th2;
  const double h11 = th3 - th2;
  return h00 * xs_[i - 1] + h10 * h * slopes_[i - 1] + h01 * xs_[i] +
         h11 * h * slopes_[i];
}

double HomoclinicOrbit::dq(double t) const {
  if (t == 0.0) return 0.0;
  const double mag = safe_sqrt2(frame_.saddle_gap(q(t)));
  return t > 0.0 ? -mag : mag;
}

double HomoclinicOrbit::q_tilde_integral(double upto) const {
  if (upto <= 0.0) return 0.0;
  const double x_u = frame_.x_u();
  KahanSum sum;
  // Exact Gauss-2 per Hermite interval (the integrand is cubic there).
  static const double g = 1.0 / (2.0 * std::sqrt(3.0));
  const double lim = std::min(upto, t_tail_);
  for (std::size_t i = 0; i + 1 < times_.size() && times_[i] < lim; ++i) {
    const double a = times_[i];
    const double b = std::min(times_[i + 1], lim);
    const double c = 0.5 * (a + b), r = (b - a);
    sum.add(0.5 * r *
            ((q(c - g * r) - x_u) + (q(c + g * r) - x_u)));
  }
  if (upto > t_tail_) {
    sum.add(tail_c_ / lambda_ *
            (std::exp(-lambda_ * t_tail_) - std::exp(-lambda_ * upto)));
  }
  return sum.value();
}

double HomoclinicOrbit::q_tilde_integral() const {
  return q_tilde_integral(t_tail_) +
         tail_c_ / lambda_ * std::exp(-lambda_ * t_tail_);
}

double HomoclinicOrbit::dq_squared_integral() const {
  const double x_u = frame_.x_u(), x_h = frame_.x_h();
  auto integrand = [&](double sig) {
    const double x = x_h - sig * sig;
    return 2.0 * sig * safe_sqrt2(frame_.saddle_gap(x));
  };
  return 2.0 *
         integrate_gauss(integrand, 0.0, std::sqrt(x_h - x_u),
                         QuadOptions{1e-12, 1e-15})
             .value;
}

// ---------------------------------------------------------------------------
// Melnikov integrals
// ---------------------------------------------------------------------------

double delta(const HomoclinicOrbit& q, const Waveform& w, double omega,
             double alpha, double c0, double t_cut) {
  if (!(omega > 0.0)) throw std::domain_error("delta: omega <= 0");
  if (t_cut < 0.0) t_cut = q.t_tail();
  auto p0 = [&](double t) { return w.value(omega * t); };
  auto integrand = [&](double t) {
    return q.dq(t) * (p0(t + alpha) - p0(alpha - t));
  };
  const double half_period = M_PI / omega;
  KahanSum sum;
  double t0 = 0.0;
  const QuadOptions qopt{1e-12, 1e-15};
  while (t0 < t_cut) {
    const double t1 = std::min(t0 + half_period, t_cut);
    sum.add(integrate_adaptive(integrand, t0, t1, qopt).value);
    t0 = t1;
  }
  double value = sum.value();
  if (c0 != 0.0) value -= c0 * q.dq_squared_integral();
  return value;
}

double delta_tail_bound(const HomoclinicOrbit& q, const Waveform& w,
                        double eps_amp) {
  return 2.0 * eps_amp * waveform_max_abs(w) * q.q_tilde(q.t_tail());
}

namespace {

// Moments M_n = int_0^h u^n e^{i omega u} du, n = 0..3. Series branch for
// small omega h (the recurrence cancels there), integration-by-parts
// recurrence otherwise.
struct Cplx {
  double re = 0.0, im = 0.0;
};

void oscillatory_moments(double omega, double h, Cplx m[4]) {
  const double x = omega * h;
  if (std::abs(x) < 0.5) {
    for (int n = 0; n < 4; ++n) {
      // sum_k (i omega)^k h^{n+k+1} / (k! (n+k+1))
      double re = 0.0, im = 0.0;
      double term_re = std::pow(h, n + 1), term_im = 0.0;  // k = 0 numerator
      for (int k = 0; k < 30; ++k) {
        re += term_re / (n + k + 1);
        im += term_im / (n + k + 1);
        // multiply by i omega h / (k+1)
        const double f = omega * h / (k + 1);
        const double nre = -term_im * f;
        const double nim = term_re * f;
        term_re = nre;
        term_im = nim;
        if (std::abs(term_re) + std::abs(term_im) <
            1e-20 * std::pow(h, n + 1)) {
          break;
        }
      }
      m[n] = {re, im};
    }
    return;
  }
  const double c = std::cos(x), s = std::sin(x);
  // M_0 = (e^{ix} - 1) / (i omega)
  m[0] = {s / omega, (1.0 - c) / omega};
  double hn = 1.0;
  for (int n = 1; n < 4; ++n) {
    hn *= h;
    // M_n = (h^n e^{ix} - n M_{n-1}) / (i omega):
    const double num_re = hn * c - n * m[n - 1].re;
    const double num_im = hn * s - n * m[n - 1].im;
    m[n] = {num_im / omega, -num_re / omega};
  }
}

// Filon-type transform of the cubic table against e^{i omega t}; returns
// int_0^{t_tail} q_tilde(t) e^{i omega t} dt.
Cplx table_transform(const HomoclinicOrbit& q, double omega) {
  const auto& ts = q.times();
  const auto& xs = q.positions();
  const auto& ms = q.slopes();
  const double x_u = q.frame().x_u();
  KahanSum re, im;
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double h = ts[i + 1] - ts[i];
    const double p0 = xs[i] - x_u, p1 = xs[i + 1] - x_u;
    const double m0 = ms[i], m1 = ms[i + 1];
    // Cubic coefficients on u = t - t_i.
    const double a0 = p0;
    const double a1 = m0;
    const double a2 = (3.0 * (p1 - p0) / h - 2.0 * m0 - m1) / h;
    const double a3 = (2.0 * (p0 - p1) / h + m0 + m1) / (h * h);
    Cplx m[4];
    oscillatory_moments(omega, h, m);
    const double sum_re =
        a0 * m[0].re + a1 * m[1].re + a2 * m[2].re + a3 * m[3].re;
    const double sum_im =
        a0 * m[0].im + a1 * m[1].im + a2 * m[2].im + a3 * m[3].im;
    // Multiply by e^{i omega t_i}.
    const double c = std::cos(omega * ts[i]), s = std::sin(omega * ts[i]);
    re.add(c * sum_re - s * sum_im);
    im.add(s * sum_re + c * sum_im);
  }
  return {re.value(), im.value()};
}

}  // namespace

double eta(const HomoclinicOrbit& q, double omega) {
  if (!(omega > 0.0)) throw std::domain_error("eta: omega <= 0");
  const Cplx body = table_transform(q, omega);
  const double T = q.t_tail();
  const double lam = q.lambda();
  const double tail = q.tail_coefficient() * std::exp(-lam * T) *
                      (lam * std::cos(omega * T) - omega * std::sin(omega * T)) /
                      (lam * lam + omega * omega);
  return body.re + tail;
}

double eta_sine_series(const HomoclinicOrbit& q, double omega) {
  if (!(omega > 0.0)) throw std::domain_error("eta_sine_series: omega <= 0");
  const Cplx body = table_transform(q, omega);
  const double T = q.t_tail();
  const double lam = q.lambda();
  const double tail = q.tail_coefficient() * std::exp(-lam * T) *
                      (lam * std::sin(omega * T) + omega * std::cos(omega * T)) /
                      (lam * lam + omega * omega);
  return omega * (body.im + tail);
}

std::vector<double> xi_partial_sums(const HomoclinicOrbit& q, double omega,
                                    int J) {
  if (!(omega > 0.0)) throw std::domain_error("xi_partial_sums: omega <= 0");
  std::vector<double> out;
  out.reserve(J + 1);
  const QuadOptions qopt{1e-12, 1e-15};
  for (int j = 0; j <= J; ++j) {
    auto integrand = [&](double t) {
      return q.q_tilde((t + j * M_PI) / omega) * std::sin(t);
    };
    out.push_back(integrate_adaptive(integrand, 0.0, M_PI, qopt).value);
  }
  return out;
}

ZeroReport detect_zeros(const HomoclinicOrbit& q, const Waveform& w,
                        double omega, int grid_n, double c0) {
  if (grid_n < 64) {
    throw std::domain_error("detect_zeros: grid must have >= 64 points");
  }
  const double T = w.period / omega;
  ZeroReport rep;
  rep.amplitude_bound = 2.0 * waveform_max_abs(w) * q.q_tilde(0.0);

  std::vector<double> alphas(grid_n), values(grid_n);
  for (int i = 0; i < grid_n; ++i) {
    alphas[i] = T * i / grid_n;
    values[i] = delta(q, w, omega, alphas[i], c0);
    rep.max_abs_delta = std::max(rep.max_abs_delta, std::abs(values[i]));
  }
  rep.identically_zero =
      rep.max_abs_delta <= 1e-9 * rep.amplitude_bound +
                               1e-14 * (1.0 + q.q_tilde(0.0));

  if (!rep.identically_zero) {
    const double slope_scale = 2.0 * M_PI * rep.max_abs_delta / T;
    for (int i = 0; i < grid_n; ++i) {
      const int jn = (i + 1) % grid_n;
      const double a0 = alphas[i];
      const double a1 = i + 1 < grid_n ? alphas[jn] : T;
      if (values[i] == 0.0 || values[i] * values[jn] >= 0.0) continue;
      rep.sign_change = true;
      const double root = find_root(
          [&](double a) { return delta(q, w, omega, a, c0); }, a0, a1,
          RootOptions{1e-12, 1e-14 * rep.amplitude_bound, 200});
      const double h = T * 1e-6;
      const double slope = (delta(q, w, omega, root + h, c0) -
                            delta(q, w, omega, root - h, c0)) /
                           (2.0 * h);
      if (std::abs(slope) > 1e-6 * slope_scale) {
        rep.simple_zeros.push_back({root, slope});
      }
    }
  }

  // Nondegenerate critical points of p0(t) = w(omega t) over [0, T).
  const int n = 512;
  for (int i = 0; i < n; ++i) {
    const double s0 = w.period * i / n;
    const double s1 = w.period * (i + 1) / n;
    const double d0 = w.d1(s0), d1v = w.d1(s1);
    if (d0 == 0.0 || d0 * d1v >= 0.0) continue;
    const double sc =
        find_root([&](double s) { return w.d1(s); }, s0, s1,
                  RootOptions{1e-13, 1e-13, 200});
    if (std::abs(w.d2(sc)) > 1e-8) {
      rep.p0_nondegenerate_critical_points.push_back(sc / omega);
    }
  }

  rep.evidence_simple_zero = !rep.simple_zeros.empty();
  rep.evidence_sign_change = rep.sign_change && !rep.identically_zero;
  rep.evidence_critical_points =
      !rep.p0_nondegenerate_critical_points.empty();
  return rep;
}

namespace {

struct SlopeWindow {
  double s = 0.0;      // extremum of w'
  double delta = 0.0;  // half the extreme slope magnitude
  double r = 0.0;      // |w'| >= delta on [s - r, s + r]
};

// Window around the maximizer of sign * w'.
SlopeWindow slope_window(const Waveform& w, double sign) {
  const int n = 4096;
  SlopeWindow win;
  double best = -1e300;
  for (int i = 0; i < n; ++i) {
    const double s = w.period * i / n;
    const double v = sign * w.d1(s);
    if (v > best) {
      best = v;
      win.s = s;
    }
  }
  // Local ternary refinement.
  double lo = win.s - w.period / n, hi = win.s + w.period / n;
  for (int it = 0; it < 80; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (sign * w.d1(m1) < sign * w.d1(m2)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  win.s = 0.5 * (lo + hi);
  best = sign * w.d1(win.s);
  if (best <= 1e-10) return win;  // caller rejects constant waveforms
  win.delta = 0.5 * best;
  const double step = w.period / 8192.0;
  double r_pos = 0.0, r_neg = 0.0;
  while (r_pos + step < 0.5 * w.period &&
         sign * w.d1(win.s + r_pos + step) >= win.delta) {
    r_pos += step;
  }
  while (r_neg + step < 0.5 * w.period &&
         sign * w.d1(win.s - r_neg - step) >= win.delta) {
    r_neg += step;
  }
  win.r = std::max(std::min(r_pos, r_neg), step);
  return win;
}

}  // namespace

OmegaThreshold omega_threshold(const HomoclinicOrbit& q, const Waveform& w) {
  const SlopeWindow up = slope_window(w, +1.0);
  const SlopeWindow down = slope_window(w, -1.0);
  if (up.delta <= 0.0 || down.delta <= 0.0) {
    throw std::domain_error("omega_threshold: requires a nonconstant p0");
  }
  double d1_max = 0.0;
  for (int i = 0; i < 4096; ++i) {
    d1_max = std::max(d1_max, std::abs(w.d1(w.period * i / 4096.0)));
  }
  const double i0 = q.q_tilde_integral();

  auto solve_branch = [&](const SlopeWindow& win) {
    auto g = [&](double om) {
      const double head = q.q_tilde_integral(win.r / om);
      return head - (d1_max / win.delta) * (i0 - head);
    };
    double lo = 1.0;
    while (g(lo) <= 0.0 && lo > 1e-12) lo *= 0.5;
    double hi = std::max(2.0 * lo, 1.0);
    while (g(hi) >= 0.0 && hi < 1e12) hi *= 2.0;
    return find_root(g, lo, hi, RootOptions{1e-12, 1e-13 * i0, 200});
  };

  OmegaThreshold out;
  out.s_up = up.s;
  out.delta_up = up.delta;
  out.r_up = up.r;
  out.s_down = down.s;
  out.delta_down = down.delta;
  out.r_down = down.r;
  out.p0_d1_max = d1_max;
  out.omega_up = solve_branch(up);
  out.omega_down = solve_branch(down);
  out.omega0 = std::min(out.omega_up, out.omega_down);
  return out;
}

// ---------------------------------------------------------------------------
// Loop areas
// ---------------------------------------------------------------------------

double loop_area(const Nonlinearity& f, double k) {
  if (!(k > 0.0)) throw std::domain_error("loop_area: requires k > 0");
  const EnergyFrame fr(f, k);
  const double x_u = fr.x_u(), x_h = fr.x_h();
  auto integrand = [&](double sig) {
    const double x = x_h - sig * sig;
    return 2.0 * sig * safe_sqrt2(fr.saddle_gap(x));
  };
  // Split at nonlinearity breakpoints (the integrand has a kink there).
  std::vector<double> edges{0.0};
  for (double b : f.breakpoints()) {
    if (b > x_u && b < x_h) edges.push_back(std::sqrt(x_h - b));
  }
  edges.push_back(std::sqrt(x_h - x_u));
  std::sort(edges.begin(), edges.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    total += integrate_gauss(integrand, edges[i], edges[i + 1],
                             QuadOptions{1e-12, 1e-15})
                 .value;
  }
  return 2.0 * total;
}

AreaScan loop_area_scan(const Nonlinearity& f,
                        const std::function<double(double)>& p, double period,
                        int n) {
  if (!(period > 0.0) || n < 8) {
    throw std::domain_error("loop_area_scan: bad period or grid");
  }
  AreaScan scan;
  scan.period = period;
  scan.theta.resize(n);
  scan.area.resize(n);
  for (int i = 0; i < n; ++i) {
    const double th = period * i / n;
    const double k = p(th);
    if (!(k > 0.0)) {
      throw std::domain_error("loop_area_scan: p(theta) <= 0 at theta = " +
                              std::to_string(th));
    }
    scan.theta[i] = th;
    scan.area[i] = loop_area(f, k);
  }
  return scan;
}

std::vector<ThetaInterval> propose_intervals(const AreaScan& scan) {
  const int n = static_cast<int>(scan.theta.size());
  std::vector<ThetaInterval> out;
  if (n < 3) return out;
  double s_min = scan.area[0], s_max = scan.area[0];
  for (double v : scan.area) {
    s_min = std::min(s_min, v);
    s_max = std::max(s_max, v);
  }
  if (s_max - s_min <= 1e-12 * (1.0 + std::abs(s_max))) return out;

  struct Extremum {
    double theta;
    bool is_max;
  };
  std::vector<Extremum> ext;
  for (int i = 0; i < n; ++i) {
    const double prev = scan.area[(i + n - 1) % n];
    const double cur = scan.area[i];
    const double next = scan.area[(i + 1) % n];
    if ((cur - prev) * (next - cur) < 0.0) {
      // Parabolic refinement of the extremum through the three samples.
      const double h = scan.period / n;
      const double denom = prev - 2.0 * cur + next;
      double off = 0.0;
      if (denom != 0.0) off = 0.5 * (prev - next) / denom * h;
      ext.push_back({scan.theta[i] + off, cur > prev});
    }
  }
  if (ext.empty()) return out;
  std::sort(ext.begin(), ext.end(),
            [](const Extremum& a, const Extremum& b) {
              return a.theta < b.theta;
            });
  int index = ext.front().is_max ? 1 : 2;
  for (std::size_t i = 0; i < ext.size(); ++i) {
    // Half width: a quarter of the gap to the nearest neighboring extremum
    // (cyclic).
    const double next_theta =
        i + 1 < ext.size() ? ext[i + 1].theta : ext[0].theta + scan.period;
    const double prev_theta =
        i > 0 ? ext[i - 1].theta : ext.back().theta - scan.period;
    const double width =
        0.25 * std::min(next_theta - ext[i].theta, ext[i].theta - prev_theta);
    out.push_back({ext[i].theta - width, ext[i].theta + width, ext[i].theta,
                   ext[i].is_max, index});
    index += 1;
  }
  return out;
}

}  // namespace ap::melnikov
