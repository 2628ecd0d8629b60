#pragma once
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rank1/config.hpp"
#include "rank1/geometry.hpp"
#include "rank1/rng.hpp"

namespace rank1 {

// Point of the unit tangent bundle in chart coordinates. Octagon models use
// the Poincare disk chart (x, y) = (Re z, Im z); the cylinder uses (s, phi).
// theta is the direction angle against the chart's orthonormal frame, so the
// reconstructed velocity has metric norm exactly 1.
struct UnitTangentVector {
  double x = 0.0, y = 0.0;
  double theta = 0.0;
  int chart = 0;
};

inline UnitTangentVector reversed(const UnitTangentVector& v) {
  UnitTangentVector w = v;
  w.theta = v.theta + M_PI;
  return w;
}

struct FlowResult {
  UnitTangentVector end;
  bool escaped = false;     // cylinder orbit left the |s| <= height_window band
  double escape_time = 0.0; // first time the band was left (if escaped)
};

// Uniformly sampled orbit: pts[i] is the state at time t0 + i*dt (folded).
struct OrbitSamples {
  double t0 = 0.0, dt = 0.0;
  std::vector<UnitTangentVector> pts;
  bool escaped = false;
  double escape_time = 0.0;
  int size() const { return int(pts.size()); }
  double time_of(int i) const { return t0 + i * dt; }
};

enum class ModelKind { ConstantOctagon, PerturbedOctagon, FlatCylinderFunnels, SyntheticDriver };

std::string kind_name(ModelKind k);

struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// A nonpositively-curved model surface. Tagged struct rather than a class
// hierarchy: the operation set is closed and small.
class SurfaceModel {
public:
  ModelKind kind = ModelKind::ConstantOctagon;

  // shared numerics
  double flow_step = 0.01;  // integrator base step
  double deck_radius = 7.0; // cutoff for deck translates in distance minima

  // perturbed octagon: radial conformal bump exp(2u), u = amp*(1-(rho/rad)^2)^4
  double bump_amplitude = 0.06;
  double bump_radius = 1.2;

  // cylinder: metric ds^2 + r(s)^2 dphi^2, r = a on |s| <= w, then
  // r = a*(1 + y^3/3 + shape*y^4/12) with y = beta*(|s|-w) (C^2, convex)
  double cyl_radius = 1.0;      // a
  double cyl_half_width = 1.0;  // w
  double cyl_rate = 1.0;        // beta
  double cyl_shape = 1.0;       // shape
  double height_window = 8.0;   // tracked band |s| <= height_window

  static SurfaceModel constant_octagon();
  static SurfaceModel perturbed_octagon(double amplitude = 0.06, double radius = 1.2);
  static SurfaceModel flat_cylinder_funnels();
  static SurfaceModel synthetic_driver();
  static SurfaceModel from_config(const Config& cfg);
  static SurfaceModel from_file(const std::string& path);
  static SurfaceModel by_name(const std::string& name); // built-in catalog
  Config definition() const;
  std::string name() const { return kind_name(kind); }

  bool is_surface() const { return kind != ModelKind::SyntheticDriver; }
  bool is_octagon() const {
    return kind == ModelKind::ConstantOctagon || kind == ModelKind::PerturbedOctagon;
  }
  const OctagonGroup& group() const;

  // --- pointwise geometry ---
  double curvature(double x, double y) const; // Gaussian curvature at footprint
  double curvature_bound() const { return curv_bound_; } // b, K >= -b^2
  double max_unstable_eig() const { return curv_bound_; } // Riccati domain cap
  // conformal log-factor and gradient (octagon charts)
  double log_conformal(double x, double y) const;
  // chart gradient of log_conformal (conformal charts only)
  std::array<double, 2> log_conformal_grad(double x, double y) const;
  // cylinder profile
  double profile(double s) const;
  double profile_d1(double s) const;
  double profile_d2(double s) const;

  // --- flow ---
  FlowResult flow(const UnitTangentVector& v, double t) const;
  OrbitSamples flow_samples(const UnitTangentVector& v, double t0, double t1, double dt) const;
  void fold(UnitTangentVector& v) const;

  // --- distances ---
  // distance between footprints (minimum over deck translates / phi wrap)
  double metric_dist(double px, double py, double qx, double qy) const;
  // sup over [0,1] of footprint distance along the two geodesics
  double knieper_distance(const UnitTangentVector& v, const UnitTangentVector& w,
                          int samples_per_unit = 64) const;
  // sup over [0, t] of knieper_distance(f_tau v, f_tau w), computed as the
  // footprint max over [0, t+1]; grid sampling makes it a lower bound
  double bowen_distance(const UnitTangentVector& v, const UnitTangentVector& w, double t,
                        int samples_per_unit = 64) const;
  double orbit_max_distance(const OrbitSamples& a, const OrbitSamples& b) const;
  // local displacement (dx, dy, dtheta) from p to q in p's chart, picking the
  // deck representative of q (octagon) or phi wrap (cylinder) closest to p;
  // only meaningful when p and q are metrically close
  std::array<double, 3> chart_gap(const UnitTangentVector& p, const UnitTangentVector& q) const;

  // --- singular set ---
  bool has_singular_set() const { return kind == ModelKind::FlatCylinderFunnels; }
  bool in_singular_set(const UnitTangentVector& v, double tol = 1e-9) const;
  // d_K distance to the singular set; +inf sentinel when Sing is empty
  double sing_distance(const UnitTangentVector& v, int samples_per_unit = 64) const;
  std::vector<UnitTangentVector> sing_sample(int n, Rng& rng) const;

  // random point of the unit tangent bundle (footprint in the fundamental
  // domain / |s| <= band), used by property tests
  UnitTangentVector random_vector(Rng& rng, double band = 0.0) const;

  // built-in catalog for the CLI
  static std::vector<std::pair<std::string, std::string>> catalog();

private:
  double curv_bound_ = 1.0;
  void finalize(); // validates params, computes curvature bound on a grid
  void rhs(const double* y, double* dy) const;
  void step_midpoint(double* y, double h) const;
  void step_symmetric4(double* y, double h) const;
  double hyperbolic_chart_dist(cplx zp, cplx zq) const;
};

void write_orbit_csv(const std::string& path, const OrbitSamples& orbit);

constexpr double kInf = std::numeric_limits<double>::infinity();

} // namespace rank1
