#include "rank1/geometry.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace rank1 {

Mobius Mobius::x_translation(double ell) {
  return {cplx(std::cosh(ell / 2.0), 0.0), cplx(std::sinh(ell / 2.0), 0.0)};
}

Mobius Mobius::rotation(double phi) {
  return {std::polar(1.0, phi / 2.0), cplx(0.0, 0.0)};
}

cplx Mobius::apply(cplx z) const { return (a * z + b) / (std::conj(b) * z + std::conj(a)); }

cplx Mobius::deriv(cplx z) const {
  cplx d = std::conj(b) * z + std::conj(a);
  return 1.0 / (d * d); // det = 1
}

Mobius Mobius::compose(const Mobius& o) const {
  // matrix product: this * o
  return {a * o.a + b * std::conj(o.b), a * o.b + b * std::conj(o.a)};
}

Mobius Mobius::inverse() const { return {std::conj(a), -b}; }

double Mobius::translation_length() const {
  double t = std::fabs(trace()) / 2.0;
  if (t <= 1.0) return 0.0;
  return 2.0 * std::acosh(t);
}

void Mobius::axis_endpoints(cplx& attracting, cplx& repelling) const {
  // fixed points solve conj(b) z^2 + (conj(a) - a) z - b = 0
  cplx A = std::conj(b), B = std::conj(a) - a, C = -b;
  if (std::abs(A) < 1e-15) throw std::runtime_error("axis_endpoints: not hyperbolic");
  cplx disc = std::sqrt(B * B - 4.0 * A * C);
  cplx z1 = (-B + disc) / (2.0 * A);
  cplx z2 = (-B - disc) / (2.0 * A);
  // attracting fixed point: |g'(z)| < 1 there
  if (std::abs(deriv(z1)) < 1.0) {
    attracting = z1 / std::abs(z1);
    repelling = z2 / std::abs(z2);
  } else {
    attracting = z2 / std::abs(z2);
    repelling = z1 / std::abs(z1);
  }
}

bool Mobius::approx_equal(const Mobius& o, double tol) const {
  // SU(1,1) double-covers the isometry group: g and -g act identically
  double direct = std::abs(a - o.a) + std::abs(b - o.b);
  double negated = std::abs(a + o.a) + std::abs(b + o.b);
  return std::min(direct, negated) < tol;
}

double disk_cosh_distance(cplx z, cplx w) {
  double n = std::norm(z - w);
  double d = (1.0 - std::norm(z)) * (1.0 - std::norm(w));
  return 1.0 + 2.0 * n / d;
}

double disk_distance(cplx z, cplx w) {
  // acosh form loses precision near 0; use the atanh form instead
  double r = std::abs((z - w) / (1.0 - std::conj(w) * z));
  if (r >= 1.0) r = std::nextafter(1.0, 0.0);
  return 2.0 * std::atanh(r);
}

cplx disk_geodesic(cplx z0, double psi, double t) {
  // move z0 to the origin by T(z) = (z - z0)/(1 - conj(z0) z); T'(z0) is a
  // positive real, so the direction angle at the origin is still psi
  cplx u = std::polar(std::tanh(t / 2.0), psi);
  return (u + z0) / (1.0 + std::conj(z0) * u);
}

double disk_geodesic_angle(cplx z0, double psi, double t) {
  // angle transforms by the argument of the derivative of T^{-1} at u
  cplx u = std::polar(std::tanh(t / 2.0), psi);
  cplx d = 1.0 + std::conj(z0) * u;
  // (T^{-1})'(u) = (1 - |z0|^2) / (1 + conj(z0) u)^2
  return psi + std::arg(1.0 / (d * d));
}

void disk_axis_closest_point(cplx p, cplx q, cplx& point, double& angle) {
  // The geodesic with ideal endpoints p, q is the circular arc orthogonal to
  // the unit circle; its closest point to 0 lies along the direction of the
  // euclidean midpoint of p and q. Degenerate diameter case: q = -p.
  cplx mid = 0.5 * (p + q);
  if (std::abs(mid) < 1e-14) {
    point = cplx(0.0, 0.0);
    angle = std::arg(q);
    return;
  }
  // Center c of the orthogonal circle satisfies Re(conj(c) p) = Re(conj(c) q) = 1
  // (from |c - p| = R and |c|^2 = 1 + R^2), giving c = (p + q)/(1 + Re(conj(p) q)).
  double dot = (std::conj(p) * q).real();
  cplx c = (p + q) / (1.0 + dot);
  double R = std::sqrt(std::norm(c) - 1.0);
  point = c - R * c / std::abs(c);
  // tangent at the closest point is orthogonal to the radius through c,
  // oriented from p toward q
  cplx tangent = (point - c) * cplx(0.0, 1.0);
  if ((std::conj(tangent) * (q - p)).real() < 0.0) tangent = -tangent;
  angle = std::arg(tangent);
}

OctagonGroup::OctagonGroup() {
  // Opposite-side pairing of the regular octagon with vertex angle pi/4.
  // The pairing translations have length 2*acosh(1 + sqrt(2)).
  double ell = 2.0 * std::acosh(1.0 + std::sqrt(2.0));
  inradius_ = ell / 2.0;
  Mobius t = Mobius::x_translation(ell);
  for (int k = 0; k < 8; ++k) {
    Mobius r = Mobius::rotation(k * M_PI / 4.0);
    gens_[k] = r.compose(t).compose(r.inverse());
  }
}

bool OctagonGroup::in_domain(cplx z, double slack) const {
  double d0 = disk_cosh_distance(z, cplx(0.0, 0.0));
  for (int k = 0; k < 8; ++k) {
    cplx pk = gens_[k].apply(cplx(0.0, 0.0));
    if (disk_cosh_distance(z, pk) < d0 * (1.0 - slack) - slack) return false;
  }
  return true;
}

Mobius OctagonGroup::fold(cplx& z) const {
  // Dirichlet folding: while z is closer to some translate g_k(0) than to 0,
  // pull it back by g_k^{-1}. Each step strictly decreases d(z, 0), and the
  // orbit of 0 is discrete, so this terminates.
  Mobius acc = Mobius::identity();
  for (int guard = 0; guard < 256; ++guard) {
    double best = disk_cosh_distance(z, cplx(0.0, 0.0));
    int best_k = -1;
    for (int k = 0; k < 8; ++k) {
      cplx pk = gens_[k].apply(cplx(0.0, 0.0));
      double d = disk_cosh_distance(z, pk);
      if (d < best * (1.0 - 1e-15)) {
        best = d;
        best_k = k;
      }
    }
    if (best_k < 0) return acc;
    Mobius g = gens_[best_k].inverse();
    z = g.apply(z);
    acc = g.compose(acc);
  }
  throw std::runtime_error("octagon fold did not terminate");
}

const std::vector<Mobius>& OctagonGroup::translates(double radius) const {
  if (cache_radius_ == radius && !cache_.empty()) return cache_;
  // BFS over products of generators, keeping translates that move the origin
  // at most `radius`; products of kept elements with one more generator are
  // the frontier. Dedup via approx matrix equality.
  std::vector<Mobius> kept;
  kept.push_back(Mobius::identity());
  std::deque<Mobius> frontier(kept.begin(), kept.end());
  auto seen = [&](const Mobius& g) {
    for (const auto& h : kept)
      if (g.approx_equal(h)) return true;
    return false;
  };
  while (!frontier.empty()) {
    Mobius g = frontier.front();
    frontier.pop_front();
    for (int k = 0; k < 8; ++k) {
      Mobius h = gens_[k].compose(g);
      cplx p = h.apply(cplx(0.0, 0.0));
      if (disk_distance(cplx(0.0, 0.0), p) > radius) continue;
      if (seen(h)) continue;
      kept.push_back(h);
      frontier.push_back(h);
    }
  }
  cache_ = std::move(kept);
  cache_radius_ = radius;
  return cache_;
}

} // namespace rank1
