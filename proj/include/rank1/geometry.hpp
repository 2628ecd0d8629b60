#pragma once
#include <complex>
#include <vector>

namespace rank1 {

using cplx = std::complex<double>;

// Isometry of the Poincare disk in SU(1,1) form: [[a, b], [conj b, conj a]],
// |a|^2 - |b|^2 = 1, acting by z -> (a z + b) / (conj(b) z + conj(a)).
struct Mobius {
  cplx a{1.0, 0.0};
  cplx b{0.0, 0.0};

  static Mobius identity() { return {}; }
  // hyperbolic translation along the x-axis, translation length ell > 0
  static Mobius x_translation(double ell);
  // rotation about the origin by angle phi
  static Mobius rotation(double phi);

  cplx apply(cplx z) const;
  // derivative dg/dz (complex); |.| is the euclidean stretch, arg the rotation
  cplx deriv(cplx z) const;
  Mobius compose(const Mobius& o) const; // this after o
  Mobius inverse() const;
  double trace() const { return 2.0 * a.real(); }
  bool is_hyperbolic() const { return std::fabs(trace()) > 2.0 + 1e-12; }
  // 2 * acosh(|tr|/2); only meaningful for hyperbolic elements
  double translation_length() const;
  // attracting and repelling fixed points on the unit circle
  void axis_endpoints(cplx& attracting, cplx& repelling) const;
  bool approx_equal(const Mobius& o, double tol = 1e-9) const;
};

// distance in the K = -1 metric 4 (1-|z|^2)^{-2} |dz|^2
double disk_distance(cplx z, cplx w);
double disk_cosh_distance(cplx z, cplx w);

// unit-speed geodesic from z0 with initial direction angle psi (measured in
// the conformal orthonormal frame, which equals the euclidean angle)
cplx disk_geodesic(cplx z0, double psi, double t);
// direction angle of the same geodesic at time t
double disk_geodesic_angle(cplx z0, double psi, double t);

// point of the geodesic through (p, q) on the unit circle closest to 0,
// and the unit direction angle there pointing from p toward q
void disk_axis_closest_point(cplx p, cplx q, cplx& point, double& angle);

// Deck group of the genus-2 hyperbolic octagon (regular octagon centered at
// the origin, opposite sides identified). Generator k translates along the
// direction k*pi/4 by twice the inradius; gen(k+4) = gen(k)^{-1}.
class OctagonGroup {
public:
  OctagonGroup();

  const Mobius& gen(int k) const { return gens_[k & 7]; } // k in 0..7
  double inradius() const { return inradius_; }

  // true if z lies in the closed Dirichlet domain centered at 0
  bool in_domain(cplx z, double slack = 1e-12) const;
  // fold z into the Dirichlet domain; returns the applied isometry g with
  // g(z_in) = z_out. Angles transform by arg(g'(z)).
  Mobius fold(cplx& z) const;

  // all deck translates g (products of generators) with d(0, g 0) <= radius,
  // identity first; used for distance minima over the tiling
  const std::vector<Mobius>& translates(double radius) const;

private:
  Mobius gens_[8];
  double inradius_ = 0.0;
  mutable std::vector<Mobius> cache_;
  mutable double cache_radius_ = -1.0;
};

} // namespace rank1
