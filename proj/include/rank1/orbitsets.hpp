// Orbit-segment bookkeeping on top of the lambda machinery: averaged-rate
// collections, the prefix/core/suffix split of a segment, transition search
// between segments (gluing), and closing a segment into a periodic orbit.
//
// Conventions, for a segment (v, t) and threshold eta > 0:
//   low-average  (B): the plain forward average of lambda over [0, t] is
//                     below eta (strict).
//   good         (G): running averages from the start, and running averages
//                     backward from the end, are both >= eta for every tau
//                     on the sample grid.
//   regular ends (C): lambda >= eta at v and at f_t v.
// G implies C up to grid resolution, and the split below writes any segment
// as low-average prefix + good core + low-average suffix.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rank1/foliation.hpp"
#include "rank1/linearization.hpp"
#include "rank1/surface.hpp"

namespace rank1 {

struct OrbitSetsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- collection membership -------------------------------------------------

double lambda_integral(const SurfaceModel& model, const UnitTangentVector& v, double t,
                       double dt = 0.05);

// grid variants working on a sampled lambda profile (lam[i] at times i*dt);
// the model functions below reduce to these, and tests drive them directly
bool in_B_profile(const std::vector<double>& lam, double dt, double eta);
bool in_G_profile(const std::vector<double>& lam, double dt, double eta);

bool in_B(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta,
          double dt = 0.05);
bool in_G(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta,
          double dt = 0.05);
// endpoint condition: lambda >= eta at both ends of the segment
bool in_C(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta);

// --- prefix/core/suffix decomposition --------------------------------------

struct Decomposition {
  double p = 0.0; // longest low-average prefix
  double g = 0.0; // good core
  double s = 0.0; // longest low-average suffix of what remains
  double t = 0.0;
  double eta = 0.0;
};

// split driven by a sampled profile; exposed for the brute-force oracle tests
Decomposition decompose_profile(const std::vector<double>& lam, double dt, double eta);
Decomposition decompose(const SurfaceModel& model, const UnitTangentVector& v, double t,
                        double eta, double dt = 0.05);

// --- segment store ----------------------------------------------------------

struct SegmentRecord {
  std::string model;
  UnitTangentVector v;
  double t = 0.0;
  double eta = 0.0;
  double lambda_int = 0.0;
  double lambda_start = 0.0, lambda_end = 0.0;
  bool tag_B = false, tag_G = false, tag_C = false;
  Decomposition dec;
};

SegmentRecord classify_segment(const SurfaceModel& model, const UnitTangentVector& v, double t,
                               double eta, double dt = 0.05);
void append_segment_records(const std::string& path, const std::vector<SegmentRecord>& recs);
std::vector<SegmentRecord> load_segment_records(const std::string& path);

// --- gluing -----------------------------------------------------------------

// transition found between the forward orbit of `from` and the backward orbit
// of `to`: the connecting point z lies on the unstable leaf through
// f_{tau_u}(from) and, after flowing by tail_time, on the stable leaf of `to`
struct Transition {
  UnitTangentVector z;
  double tau_u = 0.0;     // time flowed forward from `from` before the splice
  double tail_time = 0.0; // time from z to the stable landing at `to`
  double total = 0.0;     // tau_u + tail_time
  double meet_gap = 0.0;  // d_K at the meet before the product refinement
  double residual = 0.0;  // local product residual
};

// expanding-curve search: trace the unstable curve of `from` forward and the
// stable curve of `to` backward until they come within `delta`, then splice
// with the local product. Radii bound the shadowing error contributed at the
// two ends. window (if set) constrains the total transition time.
Transition find_transition(const SurfaceModel& model, const UnitTangentVector& from,
                           const UnitTangentVector& to, double r_u, double r_s, double delta,
                           double kappa, double tau_max = 16.0,
                           std::optional<std::pair<double, double>> window = std::nullopt);

// The glued orbit is reported as its start point plus on-orbit waypoints
// (time, point). Hyperbolicity amplifies roundoff by e^{lambda * span}, so a
// claim about a window far from t = 0 is only checkable numerically from a
// nearby waypoint; each d_t verification below runs from the waypoint of its
// segment. Later splices perturb earlier windows only through arcs that
// contract backward, which keeps the waypoints mutually consistent well below
// the shadowing scale.
struct GluedOrbit {
  UnitTangentVector w;
  std::vector<std::pair<double, UnitTangentVector>> waypoints; // one per segment
  std::vector<double> offsets;     // w shadows segment j starting at offsets[j]
  std::vector<double> transitions; // k-1 transition times
  double max_transition = 0.0;
  std::vector<double> verify_dt;   // d_t against every input segment, from its waypoint
};

// chain k segments (k <= 5 at this scale) into one orbit that visits the
// rho-neighborhood of each in order; every claim re-verified by d_t
GluedOrbit shadow_segments(const SurfaceModel& model,
                           const std::vector<std::pair<UnitTangentVector, double>>& segments,
                           double rho, double kappa,
                           const std::vector<std::pair<double, double>>* windows = nullptr,
                           double tau_max = 16.0);

// --- closing ----------------------------------------------------------------

// The periodic orbit is held as a ring of checkpoints with equal time legs
// (multi-shooting). A single start point cannot certify periodicity tighter
// than e^{lambda*period} * machine-eps (moving w by one representable ulp
// moves f_period(w) by that much), so the periodicity residual is the worst
// d_K(f_leg checkpoint_i, checkpoint_{i+1}) over the ring; for short periods
// this agrees with the direct single-point return gap.
struct ClosedOrbitCandidate {
  UnitTangentVector w;      // checkpoint phase-aligned with the input segment
  double period = 0.0;
  double residual = 0.0;    // worst per-leg return gap around the ring
  double shadow_dt = 0.0;   // d_t(v, w) against the input segment
  double transition = 0.0;  // extra time beyond t used to come back around
  int iterations = 0;
  std::vector<UnitTangentVector> checkpoints;
  double leg_time = 0.0;    // period / checkpoints.size()
};

// periodic orbit near a segment with regular ends: if the segment does not
// already nearly close up, search a transition from its end back to its own
// start, then polish the resulting loop with damped Newton steps on the
// checkpoint ring until every leg closes to residual_tol
ClosedOrbitCandidate close_orbit(const SurfaceModel& model, const UnitTangentVector& v, double t,
                                 double eps, double kappa = 4.0, double residual_tol = 1e-8,
                                 double tau_max = 16.0);

} // namespace rank1
