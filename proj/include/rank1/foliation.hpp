#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "rank1/linearization.hpp"
#include "rank1/surface.hpp"

namespace rank1 {

// Horocycle leaves of the stable/unstable foliations. A leaf through v is the
// curve of unit vectors whose footprints advance perpendicular to the vector
// while the vector turns at the rate set by the converged stable/unstable
// Riccati value. That direction field is the only computable representation
// of the leaves here; its accuracy is audited through the defining
// bounded-orbit property (leaf_membership_check), never assumed.

enum class LeafSide { Stable, Unstable };

struct FoliationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// integrating along a leaf stops early (complete = false) when the Riccati
// value fails to converge at some point of the curve, which happens near Sing
struct LeafAdvanceResult {
  UnitTangentVector v;
  double arc = 0.0; // signed arc-length actually covered
  bool complete = true;
};

LeafAdvanceResult leaf_advance(const SurfaceModel& model, const UnitTangentVector& v,
                               LeafSide side, double rho, double step = 0.02);

// chart_gap with the position part scaled to metric units plus the angle
// mismatch at unit weight; a cheap proxy for d_K between nearby vectors
double local_gap_norm(const SurfaceModel& model, const UnitTangentVector& p,
                      const UnitTangentVector& q);

// sampled leaf curve, arcs ascending from -radius to +radius
struct LeafSample {
  double arc = 0.0;
  UnitTangentVector v;
  double lambda = 0.0; // filled when requested
};
struct LeafCurve {
  UnitTangentVector base;
  LeafSide side = LeafSide::Unstable;
  std::vector<LeafSample> samples;
  bool complete = true;
};
LeafCurve trace_leaf(const SurfaceModel& model, const UnitTangentVector& v, LeafSide side,
                     double radius, double sample_step = 0.05, bool with_lambda = false,
                     double step = 0.02);
// columns: arclength, chart, x, y, angle, lambda
void write_leaf_csv(const std::string& path, const LeafCurve& leaf);

// defining-property audit: for the stable side the orbits of v and w must
// stay close with a nonincreasing trend over [0, horizon]; time-reversed for
// the unstable side. "Nonincreasing trend" = the last-quarter mean of the
// footprint gap does not exceed the first-quarter mean by more than slack.
struct LeafAudit {
  bool ok = false;
  double start_gap = 0.0;
  double max_gap = 0.0;
  double end_gap = 0.0;
  double head_mean = 0.0, tail_mean = 0.0;
};
LeafAudit leaf_membership_check(const SurfaceModel& model, const UnitTangentVector& v,
                                const UnitTangentVector& w, LeafSide side, double horizon = 8.0,
                                double slack = 0.05);

// signed arc from v to w along the side-leaf through v, found by scanning
// leaf_advance over [-R_search, R_search] and refining the best bracket.
// Throws FoliationError (with the best residual in the message) when w is not
// on the leaf within tol.
double leaf_arc_to(const SurfaceModel& model, const UnitTangentVector& v,
                   const UnitTangentVector& w, LeafSide side, double R_search = 1.0,
                   double tol = 1e-6, double step = 0.02);
// |leaf_arc_to|, the leafwise metric d^s / d^u
double leaf_distance(const SurfaceModel& model, const UnitTangentVector& v,
                     const UnitTangentVector& w, LeafSide side, double R_search = 1.0,
                     double tol = 1e-6, double step = 0.02);
// d^cs(v, w) = min over flow shifts tau of |tau| + d^s(f_tau v, w)
double center_stable_distance(const SurfaceModel& model, const UnitTangentVector& v,
                              const UnitTangentVector& w, double R_search = 1.0,
                              double tau_max = 1.0, double tol = 1e-6);

// [w1, w2]: the intersection of the unstable leaf through w1 with the
// center-stable leaf through w2, solved as a 3-unknown root find
// (unstable arc from w1) x (stable arc from w2, flow shift). kappa bounds the
// acceptable leaf displacements relative to d_K(w1, w2).
struct LocalProductResult {
  UnitTangentVector point;
  double unstable_arc = 0.0; // from w1
  double stable_arc = 0.0;   // from w2
  double flow_shift = 0.0;   // from w2
  double residual = 0.0;     // chart gap between the two leaf expressions
  int iterations = 0;
};
LocalProductResult local_product(const SurfaceModel& model, const UnitTangentVector& w1,
                                 const UnitTangentVector& w2, double delta, double kappa,
                                 double tol = 1e-6);

// projections toward the regular set: walk the side-leaf outward from v in
// both orientations and return the first point with lambda >= eta0 (identity
// when lambda(v) already qualifies). Throws FoliationError with the maximum
// lambda seen when the search exhausts R.
struct ProjectionResult {
  UnitTangentVector w;
  double arc = 0.0; // signed leaf arc from v
  double lambda = 0.0;
  bool moved = false;
};
ProjectionResult project_to_reg(const SurfaceModel& model, const UnitTangentVector& v,
                                LeafSide side, double eta0, double R, double scan_step = 0.05);

// f_{-t} . project_unstable . f_t . project_stable, with the two verified
// segment properties reported: regular endpoints, and middle of the orbit
// within delta of Sing on [T, t - T]
struct RegularizedSegment {
  UnitTangentVector w;
  double t = 0.0;
  double lambda_start = 0.0, lambda_end = 0.0;
  double stable_arc = 0.0, unstable_arc = 0.0; // projection displacements
  double worst_mid_sing_gap = 0.0;             // max d_K(f_tau w, Sing), tau in [T, t-T]
  bool endpoints_regular = false;
  bool mid_near_sing = false;
  double eta_checked = 0.0, T_used = 0.0, delta_used = 0.0;
};
RegularizedSegment regularize_segment(const SurfaceModel& model, const UnitTangentVector& v,
                                      double t, double eta0, double R, double T = 8.0,
                                      double delta = 0.1, double eta_check = 0.05);

// per-model working constants for the operations above, written alongside
// model files as JSON; values come from the calibration sweeps in the tests
struct FoliationCalibration {
  double eta0 = 0.05; // projection target
  double R = 2.5;     // projection search radius
  double delta = 0.1; // Sing proximity scale for regularized middles
  double kappa = 4.0; // local-product displacement bound factor
  double T = 8.0;     // settle time for regularized segments
};
FoliationCalibration default_calibration(const SurfaceModel& model);
void write_calibration_json(const std::string& path, const SurfaceModel& model,
                            const FoliationCalibration& cal);

} // namespace rank1
