#include "ap/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "ap/flow.hpp"
#include "ap/horseshoe.hpp"
#include "ap/melnikov.hpp"
#include "ap/model.hpp"
#include "ap/timemap.hpp"

namespace ap::cli {

namespace {

using nlohmann::json;

// Round-trip-exact float formatting for all emitted files.
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return j;
}

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
  }
}

double need_number(const json& j, const std::string& where,
                   const std::string& key) {
  if (!j.contains(key)) {
    throw ConfigError("missing config key '" + where + key + "'");
  }
  if (!j[key].is_number()) {
    throw ConfigError("config key '" + where + key + "' must be a number");
  }
  return j[key].get<double>();
}

double number_or(const json& j, const std::string& key, double fallback) {
  return j.contains(key) ? j[key].get<double>() : fallback;
}

std::string need_string(const json& j, const std::string& where,
                        const std::string& key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw ConfigError("missing string config key '" + where + key + "'");
  }
  return j[key].get<std::string>();
}

Forcing parse_forcing(const json& j, double damping) {
  require_keys(j, "forcing.",
               {"variant", "k", "k1", "k2", "t1", "t2", "eps", "omega", "p0",
                "phase"});
  const std::string variant = need_string(j, "forcing.", "variant");
  if (variant == "constant") {
    return Forcing::constant(need_number(j, "forcing.", "k"), damping);
  }
  if (variant == "step") {
    return Forcing::step(need_number(j, "forcing.", "k1"),
                         need_number(j, "forcing.", "k2"),
                         need_number(j, "forcing.", "t1"),
                         need_number(j, "forcing.", "t2"), damping);
  }
  if (variant == "periodic") {
    return Forcing::periodic(
        need_number(j, "forcing.", "k"), need_number(j, "forcing.", "eps"),
        need_number(j, "forcing.", "omega"),
        Waveform::from_name(need_string(j, "forcing.", "p0")),
        number_or(j, "phase", 0.0), damping);
  }
  throw ConfigError("forcing.variant must be constant|step|periodic");
}

std::ostream& open_sink(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ConfigError("cannot open output file: " + path);
  return file;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file;
  std::ostream& os = open_sink(path, file);
  os << text;
  os.flush();
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

const char* kind_name(LevelKind k) {
  switch (k) {
    case LevelKind::kSaddleLoop: return "saddle_loop";
    case LevelKind::kThreeRoots: return "three_roots";
    case LevelKind::kCenterTangent: return "center_tangent";
    case LevelKind::kOuterU: return "outer_u";
    case LevelKind::kInnerV: return "inner_v";
    case LevelKind::kDegenerateSingle: return "degenerate_single";
  }
  return "?";
}

const char* root_name(RootKind k) {
  switch (k) {
    case RootKind::kStarLeft: return "x_star_left";
    case RootKind::kMinus: return "x_minus";
    case RootKind::kPlus: return "x_plus";
    case RootKind::kStarRight: return "x_star_right";
    case RootKind::kSaddle: return "x_u";
    case RootKind::kCenter: return "x_s";
    case RootKind::kHomoclinic: return "x_h";
    case RootKind::kOrigin: return "origin";
  }
  return "?";
}

int cmd_analyze(const std::string& f_name, double k,
                const std::vector<double>& rhos, std::optional<double> k2,
                const std::string& out) {
  const Nonlinearity f = Nonlinearity::from_name(f_name);
  const EnergyFrame frame(f, k);
  json rep;
  rep["config"] = {{"f", f_name}, {"k", k}};
  rep["equilibria"] = {{"x_u", frame.x_u()}, {"x_s", frame.x_s()}};
  rep["phi"] = {{"at_x_u", frame.phi_at_xu()}, {"at_x_s", frame.phi_at_xs()}};
  if (frame.has_homoclinic()) rep["x_h"] = frame.x_h();
  rep["levels"] = json::array();
  for (double rho : rhos) {
    const LevelClassification lc = classify_level(frame, rho);
    json entry{{"rho", rho}, {"kind", kind_name(lc.kind)}};
    for (const LevelRoot& r : lc.roots) entry["roots"][root_name(r.kind)] = r.x;
    rep["levels"].push_back(entry);
  }
  if (k2) {
    rep["config"]["k2"] = *k2;
    const OrderingReport oc = ordering_check(f, k, *k2);
    rep["ordering"] = {{"x_u_k1", oc.x_u_k1}, {"x_u_k2", oc.x_u_k2},
                       {"x_h_k1", oc.x_h_k1}, {"x_h_k2", oc.x_h_k2},
                       {"holds", oc.holds}};
  }
  write_text(out, rep.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// timemap
// ---------------------------------------------------------------------------

int cmd_timemap(const std::string& f_name, double k,
                const std::vector<double>& rhos, const std::string& kind,
                std::optional<double> r, std::optional<double> x1,
                std::optional<double> x2, const std::string& out) {
  const Nonlinearity f = Nonlinearity::from_name(f_name);
  const EnergyFrame frame(f, k);
  json cfg{{"f", f_name}, {"k", k}, {"kind", kind}};
  if (r) cfg["r"] = *r;
  if (x1) cfg["x1"] = *x1;
  if (x2) cfg["x2"] = *x2;

  std::ostringstream csv;
  csv << "# config: " << cfg.dump() << "\n";
  csv << "rho,kind,r,tau,err_estimate\n";
  for (double rho : rhos) {
    timemap::TimeResult t;
    double rcol = 0.0;
    if (kind == "O") {
      if (!r) throw ConfigError("timemap kind O requires --r");
      t = timemap::orbit_arc_time(frame, rho, *r);
      rcol = *r;
    } else if (kind == "V") {
      if (!r) throw ConfigError("timemap kind V requires --r");
      t = timemap::left_branch_time(frame, rho, *r);
      rcol = *r;
    } else if (kind == "U") {
      if (!r) throw ConfigError("timemap kind U requires --r");
      t = timemap::outer_branch_time(frame, rho, *r);
      rcol = *r;
    } else if (kind == "generic") {
      if (!x1 || !x2) throw ConfigError("timemap kind generic requires --x1 --x2");
      t = timemap::arc_time(frame, rho, *x1, *x2);
      rcol = *x2;
    } else if (kind == "period") {
      t = timemap::orbit_period(frame, rho);
      rcol = 0.0;
    } else {
      throw ConfigError("timemap kind must be O|V|U|generic|period");
    }
    csv << fmt(rho) << "," << kind << "," << fmt(rcol) << ","
        << (t.divergent ? "inf" : fmt(t.value)) << "," << fmt(t.error) << "\n";
  }
  write_text(out, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------
// melnikov
// ---------------------------------------------------------------------------

int cmd_melnikov(const std::string& config_path, const std::string& out_prefix) {
  const json cfg = load_config(config_path);
  require_keys(cfg, "",
               {"f", "k", "p0", "omega", "c0", "alpha_count", "eta_omega_min",
                "eta_omega_max", "eta_omega_count", "zero_grid"});
  const Nonlinearity f = Nonlinearity::from_name(need_string(cfg, "", "f"));
  const double k = need_number(cfg, "", "k");
  const Waveform wave = Waveform::from_name(need_string(cfg, "", "p0"));
  const double omega = need_number(cfg, "", "omega");
  const double c0 = number_or(cfg, "c0", 0.0);
  const int alpha_count = static_cast<int>(number_or(cfg, "alpha_count", 128));
  const double om_min = number_or(cfg, "eta_omega_min", 0.1);
  const double om_max = number_or(cfg, "eta_omega_max", 10.0);
  const int om_count = static_cast<int>(number_or(cfg, "eta_omega_count", 100));
  const int zero_grid = static_cast<int>(number_or(cfg, "zero_grid", 256));

  const melnikov::HomoclinicOrbit q = melnikov::HomoclinicOrbit::build(f, k);
  const double T = wave.period / omega;

  std::ostringstream dcsv;
  dcsv << "# config: " << cfg.dump() << "\n";
  dcsv << "alpha,delta\n";
  for (int i = 0; i < alpha_count; ++i) {
    const double alpha = T * i / alpha_count;
    dcsv << fmt(alpha) << "," << fmt(melnikov::delta(q, wave, omega, alpha, c0))
         << "\n";
  }
  write_text(out_prefix + "_delta.csv", dcsv.str());

  std::ostringstream ecsv;
  ecsv << "# config: " << cfg.dump() << "\n";
  ecsv << "omega,eta\n";
  for (int i = 0; i < om_count; ++i) {
    const double om =
        om_count == 1 ? om_min
                      : om_min + (om_max - om_min) * i / (om_count - 1);
    ecsv << fmt(om) << "," << fmt(melnikov::eta(q, om)) << "\n";
  }
  write_text(out_prefix + "_eta.csv", ecsv.str());

  const melnikov::ZeroReport zr =
      melnikov::detect_zeros(q, wave, omega, zero_grid, c0);
  json rep;
  rep["config"] = cfg;
  rep["orbit"] = {{"x_h", q.frame().x_h()},
                  {"lambda", q.lambda()},
                  {"t_tail", q.t_tail()},
                  {"tail_coefficient", q.tail_coefficient()}};
  rep["zeros"] = json::array();
  for (const auto& z : zr.simple_zeros) {
    rep["zeros"].push_back({{"alpha", z.alpha}, {"slope", z.slope}});
  }
  rep["sign_change"] = zr.sign_change;
  rep["identically_zero"] = zr.identically_zero;
  rep["max_abs_delta"] = zr.max_abs_delta;
  rep["amplitude_bound"] = zr.amplitude_bound;
  rep["p0_nondegenerate_critical_points"] =
      zr.p0_nondegenerate_critical_points;
  rep["evidence"] = {
      {"simple_zero_hypothesis", zr.evidence_simple_zero},
      {"sign_change_hypothesis", zr.evidence_sign_change},
      {"critical_point_hypothesis", zr.evidence_critical_points},
      {"note", "numerical evidence only, not a proof"}};
  const melnikov::OmegaThreshold th = melnikov::omega_threshold(q, wave);
  rep["omega_threshold"] = {
      {"omega0", th.omega0},       {"omega_up", th.omega_up},
      {"omega_down", th.omega_down}, {"s_up", th.s_up},
      {"delta_up", th.delta_up},   {"r_up", th.r_up},
      {"s_down", th.s_down},       {"delta_down", th.delta_down},
      {"r_down", th.r_down},       {"p0_d1_max", th.p0_d1_max}};
  write_text(out_prefix + "_report.json", rep.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// scatter
// ---------------------------------------------------------------------------

int cmd_scatter(const std::string& config_path, const std::string& out) {
  const json cfg = load_config(config_path);
  require_keys(cfg, "",
               {"f", "forcing", "c", "rtol", "atol", "blowup_bound", "n_iter",
                "ic"});
  const Nonlinearity f = Nonlinearity::from_name(need_string(cfg, "", "f"));
  if (!cfg.contains("forcing")) throw ConfigError("missing config key 'forcing'");
  const Forcing forcing =
      parse_forcing(cfg["forcing"], number_or(cfg, "c", 0.0));
  IntegratorOptions opt;
  opt.rtol = number_or(cfg, "rtol", 1e-10);
  opt.atol = number_or(cfg, "atol", 1e-12);
  opt.blowup_bound = number_or(cfg, "blowup_bound", 1e6);
  const int n_iter = static_cast<int>(number_or(cfg, "n_iter", 300));
  if (!cfg.contains("ic")) throw ConfigError("missing config key 'ic'");
  const json& icj = cfg["ic"];
  require_keys(icj, "ic.", {"u0_min", "u0_max", "count", "y0"});
  ICLine ic{need_number(icj, "ic.", "u0_min"),
            need_number(icj, "ic.", "u0_max"),
            static_cast<int>(need_number(icj, "ic.", "count")),
            need_number(icj, "ic.", "y0")};

  const std::vector<ScatterRow> rows = scatter(f, forcing, ic, n_iter, opt);
  std::ostringstream csv;
  csv << "# config: " << cfg.dump() << "\n";
  csv << "ic_index,iter,x,y,flag\n";
  for (const ScatterRow& r : rows) {
    csv << r.ic_index << "," << r.iter << "," << fmt(r.x) << "," << fmt(r.y)
        << "," << (r.ok ? "ok" : "blowup") << "\n";
  }
  write_text(out, csv.str());
  return 0;
}

// ---------------------------------------------------------------------------
// horseshoe
// ---------------------------------------------------------------------------

struct HorseshoeConfig {
  Nonlinearity f;
  double k1, k2, t1, t2;
  int m;
  std::optional<horseshoe::Levels> levels;
  json raw;
};

HorseshoeConfig load_horseshoe_config(const std::string& path) {
  const json cfg = load_config(path);
  require_keys(cfg, "",
               {"f", "k1", "k2", "t1", "t2", "m", "levels", "paths", "rtol",
                "atol"});
  HorseshoeConfig out{Nonlinearity::from_name(need_string(cfg, "", "f")),
                      need_number(cfg, "", "k1"),
                      need_number(cfg, "", "k2"),
                      number_or(cfg, "t1", 1.0),
                      number_or(cfg, "t2", 1.0),
                      static_cast<int>(number_or(cfg, "m", 2)),
                      std::nullopt,
                      cfg};
  if (cfg.contains("levels")) {
    const json& lj = cfg["levels"];
    require_keys(lj, "levels.", {"A", "B", "D", "inner_x"});
    horseshoe::Levels lv{};
    lv.A = need_number(lj, "levels.", "A");
    lv.B = need_number(lj, "levels.", "B");
    if (lj.contains("inner_x")) {
      // Energy of the frame-k2 orbit through (inner_x, 0).
      const EnergyFrame f2(out.f, out.k2);
      lv.D = f2.phi(need_number(lj, "levels.", "inner_x"));
    } else {
      lv.D = need_number(lj, "levels.", "D");
    }
    out.levels = lv;
  }
  return out;
}

json stretch_to_json(const horseshoe::StretchCertificate& c) {
  json leg;
  leg["leg"] = c.leg == horseshoe::Leg::kFirst ? 1 : 2;
  leg["duration"] = c.duration;
  leg["expected_crossings"] = c.expected_crossings;
  leg["achieved_crossings"] = c.achieved_crossings;
  leg["min_margin"] = c.min_margin;
  leg["verdict"] = c.verdict == horseshoe::Verdict::kCertified ? "verified"
                   : c.verdict == horseshoe::Verdict::kFailed ? "failed"
                                                              : "inconclusive";
  if (c.witness_path >= 0) leg["witness_path"] = c.witness_path;
  leg["paths"] = json::array();
  for (const auto& p : c.paths) {
    json pj{{"path", p.path_index},
            {"level", p.level},
            {"nodes", p.nodes},
            {"rounds", p.rounds},
            {"k_sets_crossed", p.k_sets_crossed},
            {"budget_exhausted", p.budget_exhausted}};
    if (p.max_window_reached >= 0) {
      pj["max_window_reached"] = p.max_window_reached;
    }
    pj["crossings"] = json::array();
    for (const auto& cr : p.crossings) {
      pj["crossings"].push_back({{"k", cr.k_index},
                                 {"s_lo", cr.s_lo},
                                 {"s_hi", cr.s_hi},
                                 {"margin", cr.margin},
                                 {"enters_from_left", cr.enters_from_left}});
    }
    leg["paths"].push_back(pj);
  }
  return leg;
}

json geometry_to_json(const horseshoe::RegionGeometry& g) {
  json gj;
  gj["k1"] = g.frame1().k();
  gj["k2"] = g.frame2().k();
  gj["levels"] = {{"A", g.levels().A}, {"B", g.levels().B},
                  {"D", g.levels().D}};
  gj["abscissas"] = {{"a", g.a()},
                     {"d", g.d()},
                     {"x_plus_D", g.x_plus_D()},
                     {"b", g.b()},
                     {"x_u_k1", g.frame1().x_u()},
                     {"x_u_k2", g.frame2().x_u()},
                     {"x_s_k1", g.frame1().x_s()},
                     {"x_s_k2", g.frame2().x_s()},
                     {"x_h_k2", g.frame2().x_h()}};
  if (g.frame1().has_homoclinic()) {
    gj["abscissas"]["x_h_k1"] = g.frame1().x_h();
  }
  gj["phi_saddle"] = {{"k1", g.phi1_saddle()}, {"k2", g.phi2_saddle()}};
  gj["left_band_degenerate"] = g.left_band_degenerate();
  return gj;
}

json taus_to_json(const horseshoe::TransitTimes& t) {
  auto tr = [](const timemap::TimeResult& r) {
    return json{{"value", r.value},
                {"err_estimate", r.error},
                {"divergent", r.divergent}};
  };
  return json{{"tau1", t.tau1},
              {"tau2", t.tau2},
              {"m", t.m},
              {"left_leg", tr(t.left_leg)},
              {"outer_leg", tr(t.outer_leg)},
              {"gap_transit", tr(t.gap_transit)},
              {"period_D", tr(t.period_D)}};
}

int cmd_horseshoe_certify(const std::string& config_path,
                          const std::string& out,
                          const std::string& dump_paths) {
  const HorseshoeConfig cfg = load_horseshoe_config(config_path);
  horseshoe::StretchOptions opt;
  opt.n_paths = static_cast<int>(number_or(cfg.raw, "paths", 16));
  opt.integ.rtol = number_or(cfg.raw, "rtol", 1e-10);
  opt.integ.atol = number_or(cfg.raw, "atol", 1e-12);
  opt.keep_nodes = !dump_paths.empty();
  const Forcing forcing = Forcing::step(cfg.k1, cfg.k2, cfg.t1, cfg.t2);
  const horseshoe::HorseshoeCertificate cert =
      horseshoe::certify_horseshoe(cfg.f, forcing, cfg.levels, cfg.m, opt);

  json rep;
  rep["config"] = cfg.raw;
  const horseshoe::RegionGeometry geom =
      horseshoe::build_regions(cfg.f, cfg.k1, cfg.k2, cfg.levels);
  rep["geometry"] = geometry_to_json(geom);
  rep["tau_stars"] = taus_to_json(cert.taus);
  rep["t1"] = cert.t1;
  rep["t2"] = cert.t2;
  if (cert.leg1.duration > 0.0 || !cert.leg1.paths.empty()) {
    rep["legs"] = json::array({stretch_to_json(cert.leg1),
                               stretch_to_json(cert.leg2)});
  }
  const bool granted = cert.verdict == horseshoe::Verdict::kCertified;
  rep["verdict"] = granted ? "granted"
                 : cert.verdict == horseshoe::Verdict::kFailed
                     ? "declined"
                     : "inconclusive";
  if (!granted) rep["decline_reason"] = cert.decline_reason;
  if (granted) {
    rep["symbols"] = {{"n", cert.symbols_n}, {"m", cert.symbols_m}};
    rep["claim"] = "chaotic dynamics on " + std::to_string(cert.symbols_n) +
                   "x" + std::to_string(cert.symbols_m) +
                   " symbols (numerical evidence)";
  }
  write_text(out, rep.dump(2) + "\n");

  if (!dump_paths.empty()) {
    std::ostringstream csv;
    csv << "# config: " << cfg.raw.dump() << "\n";
    csv << "leg,path,s,x,y,image_x,image_y,angle\n";
    for (const auto* leg : {&cert.leg1, &cert.leg2}) {
      const int id = leg->leg == horseshoe::Leg::kFirst ? 1 : 2;
      for (const auto& p : leg->paths) {
        for (const auto& nd : p.node_data) {
          csv << id << "," << p.path_index << "," << fmt(nd.s) << ","
              << fmt(nd.z.x) << "," << fmt(nd.z.y) << "," << fmt(nd.image.x)
              << "," << fmt(nd.image.y) << "," << fmt(nd.angle) << "\n";
        }
      }
    }
    write_text(dump_paths, csv.str());
  }
  if (granted) return 0;
  return cert.verdict == horseshoe::Verdict::kFailed ? 2 : 3;
}

int cmd_horseshoe_periodic(const std::string& config_path,
                           const std::string& itinerary_arg,
                           const std::string& out) {
  const HorseshoeConfig cfg = load_horseshoe_config(config_path);
  std::vector<int> itinerary;
  std::stringstream ss(itinerary_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) itinerary.push_back(std::stoi(tok));
  }
  if (itinerary.empty()) throw ConfigError("empty --itinerary");

  const Forcing forcing = Forcing::step(cfg.k1, cfg.k2, cfg.t1, cfg.t2);
  const horseshoe::HorseshoeCertificate cert =
      horseshoe::certify_horseshoe(cfg.f, forcing, cfg.levels, cfg.m);
  json rep;
  rep["config"] = cfg.raw;
  rep["itinerary"] = itinerary;
  if (cert.verdict != horseshoe::Verdict::kCertified) {
    rep["verdict"] = "declined";
    rep["decline_reason"] = cert.decline_reason;
    write_text(out, rep.dump(2) + "\n");
    return 2;
  }
  const horseshoe::PeriodicOrbitResult orbit =
      horseshoe::find_periodic_orbit(cfg.f, cert, itinerary);
  rep["found"] = orbit.found;
  if (orbit.found) {
    rep["point"] = {{"x", orbit.z.x}, {"y", orbit.z.y}};
    rep["residual"] = orbit.residual;
    rep["verified"] = orbit.verified;
    rep["observed_itinerary"] = orbit.itinerary;
  } else {
    rep["note"] = "search incomplete; no orbit located from the seed grid";
  }
  write_text(out, rep.dump(2) + "\n");
  return orbit.found ? 0 : 3;
}

int cmd_horseshoe_regions(const std::string& config_path,
                          const std::string& out) {
  const HorseshoeConfig cfg = load_horseshoe_config(config_path);
  const horseshoe::RegionGeometry geom =
      horseshoe::build_regions(cfg.f, cfg.k1, cfg.k2, cfg.levels);
  json rep;
  rep["config"] = cfg.raw;
  rep["geometry"] = geometry_to_json(geom);
  for (const char* side :
       {"M_left", "M_right", "M_bottom", "M_top", "N_left", "N_right",
        "N_bottom", "N_top"}) {
    json arc = json::array();
    for (const PhasePoint& z : geom.sample_side(side, 128)) {
      arc.push_back({z.x, z.y});
    }
    rep["sides"][side] = arc;
  }
  write_text(out, rep.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// ap-scan
// ---------------------------------------------------------------------------

int cmd_ap_scan(const std::string& config_path, const std::string& out) {
  const json cfg = load_config(config_path);
  require_keys(cfg, "",
               {"f", "eps", "omega", "p0", "c", "k_min", "k_max", "k_count",
                "window", "grid", "rtol", "atol"});
  const Nonlinearity f = Nonlinearity::from_name(need_string(cfg, "", "f"));
  const double eps = need_number(cfg, "", "eps");
  const double omega = need_number(cfg, "", "omega");
  const Waveform wave = Waveform::from_name(need_string(cfg, "", "p0"));
  const double damping = number_or(cfg, "c", 0.0);
  const double k_min = need_number(cfg, "", "k_min");
  const double k_max = need_number(cfg, "", "k_max");
  const int k_count = static_cast<int>(need_number(cfg, "", "k_count"));
  if (!cfg.contains("window")) throw ConfigError("missing config key 'window'");
  const json& wj = cfg["window"];
  require_keys(wj, "window.", {"x_lo", "x_hi", "y_lo", "y_hi"});
  const Rect window{need_number(wj, "window.", "x_lo"),
                    need_number(wj, "window.", "x_hi"),
                    need_number(wj, "window.", "y_lo"),
                    need_number(wj, "window.", "y_hi")};
  GridSpec grid;
  if (cfg.contains("grid")) {
    require_keys(cfg["grid"], "grid.", {"nx", "ny"});
    grid.nx = static_cast<int>(number_or(cfg["grid"], "nx", 12));
    grid.ny = static_cast<int>(number_or(cfg["grid"], "ny", 8));
  }
  IntegratorOptions opt;
  opt.rtol = number_or(cfg, "rtol", 1e-10);
  opt.atol = number_or(cfg, "atol", 1e-12);

  std::ostringstream csv;
  csv << "# config: " << cfg.dump() << "\n";
  csv << "k,fixed_points,max_residual\n";
  for (int i = 0; i < k_count; ++i) {
    const double k =
        k_count == 1 ? k_min : k_min + (k_max - k_min) * i / (k_count - 1);
    const Forcing forcing = Forcing::periodic(k, eps, omega, wave, 0.0,
                                              damping);
    const auto hits = fixed_point_scan(f, forcing, window, grid, opt);
    double max_res = 0.0;
    for (const auto& h : hits) max_res = std::max(max_res, h.residual);
    csv << fmt(k) << "," << hits.size() << "," << fmt(max_res) << "\n";
  }
  write_text(out, csv.str());
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Phase-plane analysis, Melnikov evaluation, and topological "
               "horseshoe certification for x'' + c x' + f(x) = p(t)"};
  app.require_subcommand(1);

  // analyze
  auto* analyze = app.add_subcommand(
      "analyze", "Equilibria, energy levels and loop ordering (JSON)");
  std::string a_f = "abs", a_out;
  double a_k = 2.0;
  std::vector<double> a_rhos;
  double a_k2 = -1.0;
  bool a_has_k2 = false;
  analyze->add_option("--f", a_f, "nonlinearity name (abs|sqrt1p)");
  analyze->add_option("--k", a_k, "constant forcing level (>= 0)");
  analyze->add_option("--rho", a_rhos, "energy levels to classify");
  analyze->add_option("--k2", a_k2, "second level for the ordering check")
      ->each([&](const std::string&) { a_has_k2 = true; });
  analyze->add_option("--out", a_out, "output path (default stdout)");

  // timemap
  auto* timemap_cmd =
      app.add_subcommand("timemap", "Travel times along energy levels (CSV)");
  std::string t_f = "abs", t_kind = "U", t_out;
  double t_k = 0.0;
  std::vector<double> t_rhos;
  double t_r = 0.0, t_x1 = 0.0, t_x2 = 0.0;
  bool t_has_r = false, t_has_x1 = false, t_has_x2 = false;
  timemap_cmd->add_option("--f", t_f, "nonlinearity name");
  timemap_cmd->add_option("--k", t_k, "constant forcing level");
  timemap_cmd->add_option("--rho", t_rhos, "energy level(s)")->required();
  timemap_cmd->add_option("--kind", t_kind, "O|V|U|generic|period");
  timemap_cmd->add_option("--r", t_r, "endpoint abscissa")
      ->each([&](const std::string&) { t_has_r = true; });
  timemap_cmd->add_option("--x1", t_x1, "lower limit (generic)")
      ->each([&](const std::string&) { t_has_x1 = true; });
  timemap_cmd->add_option("--x2", t_x2, "upper limit (generic)")
      ->each([&](const std::string&) { t_has_x2 = true; });
  timemap_cmd->add_option("--out", t_out, "output path (default stdout)");

  // melnikov
  auto* meln = app.add_subcommand(
      "melnikov", "Melnikov function, eta, zero report (CSV + JSON)");
  std::string m_config, m_prefix = "melnikov";
  meln->add_option("--config", m_config, "JSON config")->required();
  meln->add_option("--out-prefix", m_prefix,
                   "output prefix (writes _delta.csv, _eta.csv, _report.json)");

  // scatter
  auto* sc = app.add_subcommand(
      "scatter", "Poincare-map ensemble scan over a line of ICs (CSV)");
  std::string s_config, s_out;
  sc->add_option("--config", s_config, "JSON config")->required();
  sc->add_option("--out", s_out, "output path (default stdout)");

  // horseshoe
  auto* hs = app.add_subcommand("horseshoe",
                                "Topological horseshoe certification");
  hs->require_subcommand(1);
  auto* hs_cert = hs->add_subcommand("certify",
                                     "Run the full certification pipeline");
  std::string hc_config, hc_out, hc_dump;
  hs_cert->add_option("--config", hc_config, "JSON config")->required();
  hs_cert->add_option("--out", hc_out, "certificate path (default stdout)");
  hs_cert->add_option("--dump-paths", hc_dump,
                      "also write path/image polylines (CSV)");
  auto* hs_per = hs->add_subcommand(
      "periodic", "Locate a periodic orbit with a prescribed itinerary");
  std::string hp_config, hp_itin = "0", hp_out;
  hs_per->add_option("--config", hp_config, "JSON config")->required();
  hs_per->add_option("--itinerary", hp_itin, "comma-separated symbol word");
  hs_per->add_option("--out", hp_out, "output path (default stdout)");
  auto* hs_reg = hs->add_subcommand("regions",
                                    "Emit the region geometry and arcs");
  std::string hr_config, hr_out;
  hs_reg->add_option("--config", hr_config, "JSON config")->required();
  hs_reg->add_option("--out", hr_out, "output path (default stdout)");

  // ap-scan
  auto* scan = app.add_subcommand(
      "ap-scan", "Fixed-point counts of the period map across k (CSV)");
  std::string k_config, k_out;
  scan->add_option("--config", k_config, "JSON config")->required();
  scan->add_option("--out", k_out, "output path (default stdout)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*analyze) {
      return cmd_analyze(a_f, a_k, a_rhos,
                         a_has_k2 ? std::optional<double>(a_k2) : std::nullopt,
                         a_out);
    }
    if (*timemap_cmd) {
      return cmd_timemap(
          t_f, t_k, t_rhos, t_kind,
          t_has_r ? std::optional<double>(t_r) : std::nullopt,
          t_has_x1 ? std::optional<double>(t_x1) : std::nullopt,
          t_has_x2 ? std::optional<double>(t_x2) : std::nullopt, t_out);
    }
    if (*meln) return cmd_melnikov(m_config, m_prefix);
    if (*sc) return cmd_scatter(s_config, s_out);
    if (*hs) {
      if (*hs_cert) return cmd_horseshoe_certify(hc_config, hc_out, hc_dump);
      if (*hs_per) return cmd_horseshoe_periodic(hp_config, hp_itin, hp_out);
      if (*hs_reg) return cmd_horseshoe_regions(hr_config, hr_out);
    }
    if (*scan) return cmd_ap_scan(k_config, k_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ap::cli
