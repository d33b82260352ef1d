#ifndef AP_HORSESHOE_HPP
#define AP_HORSESHOE_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ap/flow.hpp"
#include "ap/model.hpp"
#include "ap/timemap.hpp"

namespace ap::horseshoe {

// Energy levels defining the linked strip/annulus pair: A <= phi_{k1}(x_u1)
// and B above it (frame k1), D inside the closed-orbit band of frame k2.
struct Levels {
  double A, B, D;
};

// The two energies differ by a linear function of x: E2 - E1 = (k1 - k2) x.
// That makes every region boundary a level arc of one frame and expressible
// in closed form through the other.
class RegionGeometry {
 public:
  RegionGeometry(Nonlinearity f, double k1, double k2, Levels levels);

  const EnergyFrame& frame1() const { return f1_; }
  const EnergyFrame& frame2() const { return f2_; }
  const Levels& levels() const { return lv_; }
  double phi1_saddle() const { return f1_.phi_at_xu(); }
  double phi2_saddle() const { return f2_.phi_at_xu(); }

  double a() const { return a_; }              // x_*(A), frame 1
  double d() const { return d_; }              // x_-(D), frame 2
  double x_plus_D() const { return x_plus_; }  // x_+(D), frame 2
  double b() const { return b_; }              // x^*(B), frame 1
  // A == phi1(x_u1): the left band collapses onto the stable manifold (the
  // strip-with-no-hole variant); its transit leg is infinite and the first
  // map contributes one crossing instead of two.
  bool left_band_degenerate() const { return left_degenerate_; }

  double e1(PhasePoint z) const { return f1_.energy(z.x, z.y); }
  double e2(PhasePoint z) const { return f2_.energy(z.x, z.y); }

  bool in_strip(PhasePoint z) const;    // S = S_A union S_B (frame 1 bands)
  bool in_annulus(PhasePoint z) const;  // D <= E2 <= phi2(x_u2), x >= x_u2
  bool in_M(PhasePoint z) const;        // upper rectangle
  bool in_N(PhasePoint z) const;        // lower rectangle

  // Inverse of the (E1, E2) chart: x from the linear relation, |y| from E1.
  // Empty when the pair is outside the chart's range (y^2 < 0).
  std::optional<PhasePoint> from_energies(double e1, double e2,
                                          bool upper_half) const;

  // Rectangle diameter estimates (for refinement thresholds).
  double diameter_M() const { return diam_; }
  double diameter_N() const { return diam_; }

  // Boundary arcs as polylines (plotting / reports). Side names: "M_left"
  // (on V_A), "M_right" (on U_B), "N_left" (on O_D), "N_right" (on the k2
  // homoclinic), "M_bottom"/"M_top" mirror the N sides in the upper half.
  std::vector<PhasePoint> sample_side(const std::string& side, int n) const;

 private:
  void validate() const;

  Nonlinearity f_;
  EnergyFrame f1_, f2_;
  Levels lv_;
  double a_, d_, x_plus_, b_;
  double x_h1_;  // x_h(k1), 0 when k1 == 0
  bool left_degenerate_ = false;
  double diam_ = 0.0;
};

// Builds the geometry, choosing levels automatically when none are given
// (fixed fractions of the admissible ranges, nudged toward the band center
// until feasible).
RegionGeometry build_regions(const Nonlinearity& f, double k1, double k2,
                             std::optional<Levels> levels = std::nullopt);

// Transit-time thresholds for the two switched legs. tau1 bounds the time
// for the first system to fold the upper rectangle across the lower one;
// tau2 = gap transit + (m-1) periods bounds the winding of the second.
struct TransitTimes {
  timemap::TimeResult left_leg;     // V_A transit, frame 1 (divergent when
                                    // the left band is degenerate)
  timemap::TimeResult outer_leg;    // U_B transit, frame 1
  timemap::TimeResult gap_transit;  // (b,-y_b) -> (b,+y_b) along O_D, frame 2
  timemap::TimeResult period_D;     // full period of O_D
  double tau1 = 0.0;
  double tau2 = 0.0;
  int m = 1;
};
TransitTimes tau_stars(const RegionGeometry& geom, int m);

enum class Leg {
  kFirst,   // Psi_1 : M -> N under the k1 system
  kSecond,  // Psi_2 : N -> M under the k2 system
};

struct StretchOptions {
  int n_paths = 16;
  double image_spacing_frac = 1e-3;  // of the target rectangle diameter
  double angle_resolution = 0.25;    // leg 2: max winding-angle gap (rad)
  int max_nodes_per_path = 60000;
  int max_rounds = 40;
  double energy_margin_frac = 1e-3;  // delta_E for the K_{1,*} bands
  bool keep_nodes = false;           // retain node polylines in the records
  IntegratorOptions integ{};
};

struct CrossingRecord {
  int k_index;
  double s_lo, s_hi;         // path parameter range of the sub-interval
  double margin;             // min clearance of the bracket images beyond
                             // the target [-] sides (phase-plane distance)
  bool enters_from_left;     // first bracket is beyond the left side
};

struct PathNode {
  double s;
  PhasePoint z;
  PhasePoint image;
  double angle;  // leg 2: unwrapped clockwise angle at the final time
};

struct PathRecord {
  int path_index;
  double level;  // E2 level (leg 1) or E1 level (leg 2) defining the path
  int nodes = 0;
  int rounds = 0;
  bool budget_exhausted = false;
  std::vector<CrossingRecord> crossings;
  int k_sets_crossed = 0;
  int max_window_reached = -1;  // leg 2: highest full window index observed
  std::vector<PathNode> node_data;  // only when keep_nodes
};

enum class Verdict { kCertified, kFailed, kInconclusive };

struct StretchCertificate {
  Leg leg;
  double duration = 0.0;
  int expected_crossings = 0;
  int achieved_crossings = 0;  // min over paths of K sets crossed
  double min_margin = 0.0;
  Verdict verdict = Verdict::kFailed;
  int witness_path = -1;  // failing/inconclusive path index
  std::vector<PathRecord> paths;
};

// Checks the stretching relation on a family of energy-interpolated paths
// joining the source rectangle's [-] sides: every tested path must contain,
// per compact set of the decomposition, a sub-interval whose image crosses
// the target rectangle from one [-] side to the other. Sampling plus
// refinement; the result is numerical evidence, not a proof.
StretchCertificate verify_stretch(const RegionGeometry& geom, Leg leg,
                                  double duration, int m,
                                  const StretchOptions& opt = {});

struct HorseshoeCertificate {
  Levels levels;
  double k1, k2, t1, t2;
  TransitTimes taus;
  StretchCertificate leg1, leg2;
  int symbols_n = 0;  // crossings of the first leg (1 or 2)
  int symbols_m = 0;  // crossings of the second leg (m)
  Verdict verdict = Verdict::kFailed;
  std::string decline_reason;
};

// Full pipeline for stepwise forcing: geometry, thresholds (declining when
// t1 or t2 is at or below its tau*), then both stretching legs. A granted
// certificate claims chaotic dynamics on n x m symbols (numerical evidence).
HorseshoeCertificate certify_horseshoe(const Nonlinearity& f,
                                       const Forcing& step_forcing,
                                       std::optional<Levels> levels, int m,
                                       const StretchOptions& opt = {});

struct PeriodicOrbitResult {
  bool found = false;
  PhasePoint z{};
  double residual = 0.0;
  std::vector<int> itinerary;  // verified symbol sequence
  bool verified = false;       // re-checked at tighter tolerance
};

// Locates a periodic point of the period map realizing the given symbol
// word. Symbols index pairs (K_{1,i}, K_{2,j}) as i * m + j over the
// certified alphabet. Not finding one reports search incompleteness, not
// nonexistence.
PeriodicOrbitResult find_periodic_orbit(const Nonlinearity& f,
                                        const HorseshoeCertificate& cert,
                                        const std::vector<int>& itinerary,
                                        int seed_grid = 14);

}  // namespace ap::horseshoe

#endif  // AP_HORSESHOE_HPP
