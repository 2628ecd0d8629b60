#pragma once
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rank1/potential.hpp"
#include "rank1/surface.hpp"

namespace rank1 {

struct PressureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- seed pools ----------------------------------------------------------------

// quasi-uniform points over the chart box x angle (low-discrepancy lattice,
// folded, rejected if outside the fundamental domain)
std::vector<UnitTangentVector> seed_lattice(const SurfaceModel& model, size_t n,
                                            uint64_t salt = 0);

// the singular set parameterization (cylinder: band height x phase x two
// rotation senses); throws on models without a singular set
std::vector<UnitTangentVector> seed_sing(const SurfaceModel& model, size_t n);

// Spray seeding for growth estimates: from n_bases quasi-random base points,
// shoot per_base directions in a tiny angular window and push each forward by
// t_max. The pushed fan hugs an expanding leaf, so separated subsets keep
// growing like the flow's expansion all the way to horizon t_max instead of
// saturating at the pool's ambient density (a uniform pool of desk-scale size
// resolves nothing finer than its spacing and its counts go flat almost
// immediately). The window is sized so the count at t_max stays below
// fill_fraction of the pool.
std::vector<UnitTangentVector> seed_spray(const SurfaceModel& model, size_t n_bases,
                                          size_t per_base, double eps, double t_max,
                                          uint64_t salt = 0, double fill_fraction = 0.5);

// --- constraints ----------------------------------------------------------------

// Which (v, t) pairs a separated set may draw from. Thickened-bad admits
// segments that contain a low-average core after trimming up to one time unit
// at each end; the singular set is admitted by construction since its
// lambda-profile is identically zero.
struct ConstraintSpec {
  enum class Kind { Full, Sing, BadEta, ThickBadEta, GoodEta, Custom };
  Kind kind = Kind::Full;
  double eta = 0.0;
  std::string label = "full";
  // Custom: predicate on (v, t)
  std::function<bool(const SurfaceModel&, const UnitTangentVector&, double)> pred;

  static ConstraintSpec full();
  static ConstraintSpec sing();
  static ConstraintSpec bad(double eta);
  static ConstraintSpec thick_bad(double eta);
  static ConstraintSpec good(double eta);
  bool admits(const SurfaceModel& model, const UnitTangentVector& v, double t,
              double dt = 0.1) const;
};

std::vector<UnitTangentVector> filter_seeds(const SurfaceModel& model,
                                            const std::vector<UnitTangentVector>& seeds,
                                            const ConstraintSpec& constraint, double t,
                                            double dt = 0.1);

// --- separated sets ----------------------------------------------------------------

struct SeparatedSet {
  double t = 0.0, eps = 0.0;
  std::vector<UnitTangentVector> members;
  std::string constraint = "full";
  // audit trail: pairs checked, violations found (must be zero), and the
  // member counts the discarded greedy restarts reached
  size_t audited_pairs = 0, audit_violations = 0;
  bool audit_exhaustive = false;
  std::vector<size_t> restart_counts;
};

// Greedy maximal packing within the seed list. The first pass keeps the given
// seed order, so growing a seed list can only grow the best count; the
// remaining restarts shuffle (seeded by the set parameters) to guard against
// adversarial orderings. Separation tests use footprint grids that
// under-estimate the true orbit distance, so every accepted pair is honestly
// separated; the audit re-checks doubtful pairs at full resolution.
SeparatedSet build_separated_set(const SurfaceModel& model, const ConstraintSpec& constraint,
                                 double t, double eps,
                                 const std::vector<UnitTangentVector>& seeds, int restarts = 3,
                                 int samples_per_unit = 16);

// log of the weighted member sum  log sum_x exp(Phi(x, t))
double log_partition_sum(const SurfaceModel& model, const SeparatedSet& set,
                         const Potential& pot, double dt = 0.05);
double partition_sum(const SurfaceModel& model, const SeparatedSet& set, const Potential& pot,
                     double dt = 0.05); // exp of the above; overflows for large sets

// per-member integrals of the expansion potential over [0, t]; lets a q-sweep
// reuse one Riccati pass per member across all q values
std::vector<double> member_psi_integrals(const SurfaceModel& model, const SeparatedSet& set,
                                         double dt = 0.05);

// --- pressure estimates ----------------------------------------------------------------

struct PressureEstimate {
  // headline value: the slope at the smallest scale (the extrapolation across
  // scales is reported as a note, never as the claim)
  double value = 0.0;
  double uncertainty = 0.0;
  bool empty = false; // no members anywhere: value is -inf by convention

  struct PerEps {
    double eps = 0.0;
    std::vector<double> log_lambda;  // per t-grid entry
    std::vector<size_t> counts;
    std::vector<char> saturated;     // count too close to the seed supply
    std::vector<char> floored;       // count at the pool's resolution floor
    double slope = 0.0, intercept = 0.0, residual = 0.0;
  };
  std::vector<double> t_grid;
  std::vector<PerEps> per_eps;
  double extrapolated = 0.0;   // two-point Richardson across the last two scales
  double eps_spread = 0.0;     // |slope change| across scales
  double restart_spread = 0.0; // best-vs-worst restart count gap, log scale
  bool monotone_in_eps = true; // estimates nonincreasing in eps up to 0.1
  bool seed_density_warning = false;
  double density_shift = 0.0;  // log-lambda change when the pool is halved
  std::string constraint = "full", potential_desc = "zero";
};

// slope of log Lambda over the upper half of the t-grid, per scale, with two
// guards: grid points whose separated count exceeds fill_guard of the seed
// supply measure the pool, not the flow (saturated), and points whose count
// is at or below floor_count sit at the pool's positional resolution floor
// (sprayed pools keep at least one member per base fan at any t, so counts
// near the base count carry no growth signal); both kinds are excluded from
// the fit
PressureEstimate pressure_estimate(const SurfaceModel& model, const ConstraintSpec& constraint,
                                   const Potential& pot, const std::vector<double>& eps_list,
                                   const std::vector<double>& t_grid,
                                   const std::vector<UnitTangentVector>& seeds,
                                   int restarts = 3, bool density_check = false,
                                   double quad_dt = 0.05, double fill_guard = 0.7,
                                   size_t floor_count = 0);

// recompute the headline value from the stored per-scale sums; used by the
// estimate's own invariant check (must reproduce value bit for bit)
double recompute_estimate_value(const PressureEstimate& est);

struct EtaSweepRow {
  double eta = 0.0;
  PressureEstimate estimate;
};
// pressure of the thickened low-average collection for each eta, sharing one
// seed pool; rows ordered as given (callers pass decreasing eta)
std::vector<EtaSweepRow> bad_pressure_sweep(const SurfaceModel& model, const Potential& pot,
                                            const std::vector<double>& eta_list, double eps,
                                            const std::vector<double>& t_grid,
                                            const std::vector<UnitTangentVector>& seeds,
                                            int restarts = 3, double quad_dt = 0.05);

// --- verdicts ----------------------------------------------------------------

struct GapVerdict {
  double full_value = 0.0, sing_value = 0.0;
  double margin = 0.0;      // full - sing
  double uncertainty = 0.0; // combined
  // 1 = gap holds, 0 = gap fails, -1 = intervals overlap, no call either way
  int verdict = -1;
  bool sing_empty = false;
};
GapVerdict gap_check(const PressureEstimate& full_est, const PressureEstimate& sing_est,
                     double min_uncertainty = 0.05);

struct BoundedRangeResult {
  double sup_sing_phi = 0.0, inf_phi = 0.0;
  double h_full = 0.0, h_sing = 0.0;
  double lhs = 0.0, rhs = 0.0; // lhs = sup_Sing phi - inf phi, rhs = h_full - h_sing
  bool holds = false;
  bool sing_empty = false;
};
// range condition: potential variation over the singular set vs the entropy
// drop; evaluated from entropy estimates plus sampled sup/inf
BoundedRangeResult bounded_range_check(const SurfaceModel& model, const Potential& pot,
                                       const PressureEstimate& h_full_est,
                                       const PressureEstimate& h_sing_est, size_t n_samples = 2000,
                                       uint64_t salt = 0);

Potential ergodic_average_potential(const SurfaceModel& model, const Potential& pot, double T);

// --- binned measures ----------------------------------------------------------------

struct BinSpec {
  int nx = 8, ny = 8, nth = 8;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0; // chart box; angle is always [-pi, pi)
};
BinSpec default_bins(const SurfaceModel& model, int n = 8);

struct BinnedMeasure {
  BinSpec bins;
  std::vector<double> mass; // nx*ny*nth, theta fastest
  double total() const;
};

// normalized occupation measure of the orbit segment (v, t)
BinnedMeasure empirical_measure(const SurfaceModel& model, const UnitTangentVector& v, double t,
                                const BinSpec& bins, double dt = 0.01);
BinnedMeasure convex_combination(const std::vector<BinnedMeasure>& measures,
                                 const std::vector<double>& weights);
// the invariant volume (area element times uniform angle), normalized
BinnedMeasure liouville_measure(const SurfaceModel& model, const BinSpec& bins);
double tv_distance(const BinnedMeasure& a, const BinnedMeasure& b);

} // namespace rank1
