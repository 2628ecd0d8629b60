#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "rank1/potential.hpp"
#include "rank1/pressure.hpp"
#include "rank1/surface.hpp"

namespace rank1 {

struct PeriodicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClosedGeodesic {
  UnitTangentVector rep;      // on the orbit
  double length = 0.0;
  double residual = 0.0;      // certified return gap of the stored orbit
  bool prime = true;
  bool regular = false;       // min lambda along the orbit >= threshold
  double min_lambda = 0.0;
  std::string word;           // octagon models: group word, letters '0'..'7'
  std::string conj_key;       // octagon: canonical word; else length+footprint key
};

// canonical conjugacy key: lexicographic minimum over cyclic rotations of the
// word and of its inverse (reversed, letters shifted by 4 mod 8)
std::string canonical_word_key(const std::string& word);
// a word is primitive when it is not a proper power of a shorter word
bool primitive_word(const std::string& word);
// translation length of the word's deck transformation, from the trace
double word_length_on(const SurfaceModel& model, const std::string& word);

struct GeodesicEnumeration {
  std::vector<ClosedGeodesic> orbits;
  size_t words_tried = 0;
  size_t refine_failures = 0; // per-seed polish failures, logged not fatal
  double L_max = 0.0;
};

// All prime closed geodesics of length <= L_max. Octagon models: cyclically
// reduced words up to conjugacy, axis representatives, then a closing polish
// so each stored orbit meets the residual bound. Perturbed octagon:
// continuation from the unperturbed axes (the perturbation is compactly
// supported, so the constant-model orbit is already a good shadow). Cylinder:
// the core band circles, all of length 2 pi a, none regular.
GeodesicEnumeration enumerate_closed_geodesics(const SurfaceModel& model, double L_max,
                                               double reg_threshold = 0.05,
                                               double residual_tol = 1e-8);

// potential integral over one period
double potential_integral(const SurfaceModel& model, const ClosedGeodesic& geo,
                          const Potential& pot, double dt = 0.02);

struct GurevicEstimate {
  double value = 0.0; // -inf sentinel when no regular orbits exist
  double delta = 0.5;
  double T_max = 0.0; // length range the sums cover
  std::vector<double> window_mid; // window midpoints that held at least one orbit
  std::vector<double> log_sum;    // log of the weighted sum per window
  std::vector<size_t> counts;
  double slope = 0.0, intercept = 0.0, residual = 0.0;
  // log of the full weighted sum up to T_max, over it, and the same after
  // dividing out the 1/(P T) prefactor of the orbit-counting law
  double log_total = 0.0;
  double raw_rate = 0.0;
  bool corrected = false; // prefactor solve converged (supercritical sums)
  // size of the prefactor correction plus the window-fit scatter
  double uncertainty = 0.0;
  bool undersampled = false; // too few windows or orbits for the fit to mean much
  bool empty = false;
};

// growth rate of weighted sums over regular prime closed geodesics (both
// orientations). Windowed sums over [T, T + delta) give a slope-fit
// diagnostic; the headline value divides the 1/(P T) prefactor of the
// counting law S(T) ~ exp(P T) / (P T) out of the full sum, which converges
// much sooner in T than the window slopes do. T_max <= 0 means the longest
// stored length; pass the enumeration bound when it is known.
GurevicEstimate gurevic_pressure(const SurfaceModel& model,
                                 const std::vector<ClosedGeodesic>& orbits, const Potential& pot,
                                 double delta = 0.5, double T_max = 0.0);

// weight-averaged orbit occupation measure over regular prime orbits of
// length <= L (weights exp of the potential integral, normalized)
BinnedMeasure equidistribution_measure(const SurfaceModel& model,
                                       const std::vector<ClosedGeodesic>& orbits,
                                       const Potential& pot, double L, const BinSpec& bins);

// JSON-lines store; potential integrals are written for the potentials given
void write_geodesic_store(const std::string& path, const SurfaceModel& model,
                          const std::vector<ClosedGeodesic>& orbits,
                          const std::vector<Potential>& potentials = {});
std::vector<ClosedGeodesic> load_geodesic_store(const std::string& path);

} // namespace rank1
