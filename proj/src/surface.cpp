#include "rank1/surface.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>

namespace rank1 {

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::ConstantOctagon: return "constant-octagon";
    case ModelKind::PerturbedOctagon: return "perturbed-octagon";
    case ModelKind::FlatCylinderFunnels: return "flat-cylinder-funnels";
    case ModelKind::SyntheticDriver: return "synthetic-driver";
  }
  return "?";
}

const OctagonGroup& SurfaceModel::group() const {
  static OctagonGroup g;
  return g;
}

// deck translates sorted by how far they move the origin, with that distance
// cached; lets distance minima prune by the triangle inequality
namespace {
struct Translate {
  Mobius g;
  double origin_shift;
};

const std::vector<Translate>& sorted_translates(const OctagonGroup& grp, double radius) {
  static std::mutex mu;
  static std::vector<std::pair<double, std::vector<Translate>>> cache;
  std::lock_guard<std::mutex> lock(mu);
  for (auto& [r, v] : cache)
    if (r == radius) return v;
  std::vector<Translate> out;
  for (const auto& g : grp.translates(radius))
    out.push_back({g, disk_distance(cplx(0, 0), g.apply(cplx(0, 0)))});
  std::sort(out.begin(), out.end(),
            [](const Translate& a, const Translate& b) { return a.origin_shift < b.origin_shift; });
  cache.emplace_back(radius, std::move(out));
  return cache.back().second;
}

// radial conformal bump u(rho) = amp * (1 - (rho/rad)^2)^4 on rho < rad
double bump_u(double rho, double amp, double rad) {
  double y = rho / rad;
  if (y >= 1.0) return 0.0;
  double q = 1.0 - y * y;
  return amp * q * q * q * q;
}
double bump_du(double rho, double amp, double rad) {
  double y = rho / rad;
  if (y >= 1.0) return 0.0;
  double q = 1.0 - y * y;
  return amp * 4.0 * q * q * q * (-2.0 * y) / rad;
}
double bump_d2u(double rho, double amp, double rad) {
  double y = rho / rad;
  if (y >= 1.0) return 0.0;
  double q = 1.0 - y * y;
  // d^2/drho^2 [amp (1-y^2)^4] = (amp/rad^2) * (-8 q^3 + 48 y^2 q^2)
  return amp / (rad * rad) * (-8.0 * q * q * q + 48.0 * y * y * q * q);
}

double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

// 8-point Gauss-Legendre on [0,1]
constexpr double kGLx[8] = {0.01985507175123188, 0.10166676129318664, 0.2372337950418355,
                            0.40828267875217505, 0.5917173212478249,  0.7627662049581645,
                            0.8983332387068134,  0.9801449282487681};
constexpr double kGLw[8] = {0.05061426814518813, 0.11119051722668724, 0.15685332293894364,
                            0.18134189168918097, 0.18134189168918097, 0.15685332293894364,
                            0.11119051722668724, 0.05061426814518813};
} // namespace

SurfaceModel SurfaceModel::constant_octagon() {
  SurfaceModel m;
  m.kind = ModelKind::ConstantOctagon;
  m.finalize();
  return m;
}

SurfaceModel SurfaceModel::perturbed_octagon(double amplitude, double radius) {
  SurfaceModel m;
  m.kind = ModelKind::PerturbedOctagon;
  m.bump_amplitude = amplitude;
  m.bump_radius = radius;
  m.finalize();
  return m;
}

SurfaceModel SurfaceModel::flat_cylinder_funnels() {
  SurfaceModel m;
  m.kind = ModelKind::FlatCylinderFunnels;
  m.finalize();
  return m;
}

SurfaceModel SurfaceModel::synthetic_driver() {
  SurfaceModel m;
  m.kind = ModelKind::SyntheticDriver;
  m.finalize();
  return m;
}

SurfaceModel SurfaceModel::by_name(const std::string& name) {
  if (name == "constant-octagon") return constant_octagon();
  if (name == "perturbed-octagon") return perturbed_octagon();
  if (name == "flat-cylinder-funnels") return flat_cylinder_funnels();
  if (name == "synthetic-driver") return synthetic_driver();
  throw ModelError("unknown model name: " + name);
}

SurfaceModel SurfaceModel::from_config(const Config& cfg) {
  std::string kind = cfg.get_str("model", "kind");
  SurfaceModel m;
  if (kind == "constant-octagon")
    m.kind = ModelKind::ConstantOctagon;
  else if (kind == "perturbed-octagon")
    m.kind = ModelKind::PerturbedOctagon;
  else if (kind == "flat-cylinder-funnels")
    m.kind = ModelKind::FlatCylinderFunnels;
  else if (kind == "synthetic-driver")
    m.kind = ModelKind::SyntheticDriver;
  else
    throw ModelError("unknown model kind: " + kind);

  static const std::vector<std::string> shared = {"kind", "flow_step", "deck_radius"};
  static const std::vector<std::string> octagon_keys = {"bump_amplitude", "bump_radius"};
  static const std::vector<std::string> cyl_keys = {"core_radius", "core_half_width",
                                                    "funnel_rate", "funnel_shape",
                                                    "height_window"};
  for (auto& [key, value] : cfg.entries("model")) {
    (void)value;
    bool ok = std::count(shared.begin(), shared.end(), key) > 0;
    if (m.kind == ModelKind::PerturbedOctagon)
      ok = ok || std::count(octagon_keys.begin(), octagon_keys.end(), key) > 0;
    if (m.kind == ModelKind::FlatCylinderFunnels)
      ok = ok || std::count(cyl_keys.begin(), cyl_keys.end(), key) > 0;
    if (!ok) throw ModelError("model key '" + key + "' not valid for kind " + kind);
  }

  m.flow_step = cfg.get_num("model", "flow_step", m.flow_step);
  m.deck_radius = cfg.get_num("model", "deck_radius", m.deck_radius);
  m.bump_amplitude = cfg.get_num("model", "bump_amplitude", m.bump_amplitude);
  m.bump_radius = cfg.get_num("model", "bump_radius", m.bump_radius);
  m.cyl_radius = cfg.get_num("model", "core_radius", m.cyl_radius);
  m.cyl_half_width = cfg.get_num("model", "core_half_width", m.cyl_half_width);
  m.cyl_rate = cfg.get_num("model", "funnel_rate", m.cyl_rate);
  m.cyl_shape = cfg.get_num("model", "funnel_shape", m.cyl_shape);
  m.height_window = cfg.get_num("model", "height_window", m.height_window);
  m.finalize();
  return m;
}

SurfaceModel SurfaceModel::from_file(const std::string& path) {
  return from_config(Config::parse_file(path));
}

Config SurfaceModel::definition() const {
  Config cfg;
  char buf[32];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    cfg.set("model", key, buf);
  };
  cfg.set("model", "kind", name());
  put("flow_step", flow_step);
  put("deck_radius", deck_radius);
  if (kind == ModelKind::PerturbedOctagon) {
    put("bump_amplitude", bump_amplitude);
    put("bump_radius", bump_radius);
  }
  if (kind == ModelKind::FlatCylinderFunnels) {
    put("core_radius", cyl_radius);
    put("core_half_width", cyl_half_width);
    put("funnel_rate", cyl_rate);
    put("funnel_shape", cyl_shape);
    put("height_window", height_window);
  }
  return cfg;
}

void SurfaceModel::finalize() {
  if (flow_step <= 0.0 || flow_step > 0.2) throw ModelError("flow_step out of range (0, 0.2]");
  if (kind == ModelKind::PerturbedOctagon) {
    if (bump_radius <= 0.0 || bump_radius > 1.45)
      throw ModelError("bump_radius must be in (0, 1.45] to stay inside the fundamental domain");
    if (bump_amplitude < 0.0) throw ModelError("bump_amplitude must be >= 0");
    // the perturbed metric must stay nonpositively curved; check on a grid
    double worst = -kInf;
    double maxmag = 0.0;
    for (int i = 0; i <= 400; ++i) {
      double rho = bump_radius * i / 400.0;
      double z = std::tanh(rho / 2.0);
      double K = curvature(z, 0.0);
      worst = std::max(worst, K);
      maxmag = std::max(maxmag, std::fabs(K));
    }
    if (worst > -1e-9)
      throw ModelError("bump_amplitude too large: curvature reaches " + std::to_string(worst));
    curv_bound_ = std::sqrt(maxmag);
  } else if (kind == ModelKind::FlatCylinderFunnels) {
    if (cyl_radius <= 0.0 || cyl_half_width <= 0.0 || cyl_rate <= 0.0 || cyl_shape <= 0.0)
      throw ModelError("cylinder parameters must be positive");
    double maxmag = 0.0;
    for (int i = 0; i <= 1000; ++i) {
      double s = (height_window + 6.0) * i / 1000.0;
      if (profile_d2(s) < -1e-12) throw ModelError("cylinder profile not convex at s=" + std::to_string(s));
      maxmag = std::max(maxmag, std::fabs(curvature(s, 0.0)));
    }
    // |K| peaks a short way into the funnel and decays polynomially after,
    // so the grid max over the working band is the global bound
    curv_bound_ = std::sqrt(maxmag);
  } else {
    curv_bound_ = 1.0;
  }
}

// Funnel profile r(s) = a*(1 + y^3/3 + shape*y^4/12) with y = rate*(|s|-w)_+.
// The cubic leading term keeps the gluing C^2 (r' and r'' both vanish at the
// core edge, matching the flat band) while r-a grows fast enough that inbound
// orbits settle near the core in O(1) time instead of crawling in.
double SurfaceModel::profile(double s) const {
  double x = std::fabs(s) - cyl_half_width;
  if (x <= 0.0) return cyl_radius;
  double y = cyl_rate * x;
  return cyl_radius * (1.0 + y * y * y / 3.0 + cyl_shape * y * y * y * y / 12.0);
}

double SurfaceModel::profile_d1(double s) const {
  double x = std::fabs(s) - cyl_half_width;
  if (x <= 0.0) return 0.0;
  double y = cyl_rate * x;
  double v = cyl_radius * cyl_rate * (y * y + cyl_shape * y * y * y / 3.0);
  return s >= 0 ? v : -v;
}

double SurfaceModel::profile_d2(double s) const {
  double x = std::fabs(s) - cyl_half_width;
  if (x <= 0.0) return 0.0;
  double y = cyl_rate * x;
  return cyl_radius * cyl_rate * cyl_rate * (2.0 * y + cyl_shape * y * y);
}

double SurfaceModel::log_conformal(double x, double y) const {
  double r2 = x * x + y * y;
  double phi = std::log(2.0) - std::log1p(-r2);
  if (kind == ModelKind::PerturbedOctagon) {
    // bump support lies deep inside the fundamental domain, so after folding
    // only the copy centered at 0 can contribute
    cplx z(x, y);
    double rho = disk_distance(z, cplx(0, 0));
    phi += bump_u(rho, bump_amplitude, bump_radius);
  }
  return phi;
}

std::array<double, 2> SurfaceModel::log_conformal_grad(double x, double y) const {
  if (kind != ModelKind::ConstantOctagon && kind != ModelKind::PerturbedOctagon)
    throw ModelError("log_conformal_grad: not a conformal chart model");
  double r2 = x * x + y * y;
  double one_m = 1.0 - r2;
  double phi_x = 2.0 * x / one_m;
  double phi_y = 2.0 * y / one_m;
  if (kind == ModelKind::PerturbedOctagon) {
    double r = std::sqrt(r2);
    double rho = 2.0 * std::atanh(std::min(r, 1.0 - 1e-15));
    if (r > 1e-12 && rho < bump_radius) {
      double du = bump_du(rho, bump_amplitude, bump_radius);
      double f = du * 2.0 / (one_m * r);
      phi_x += f * x;
      phi_y += f * y;
    }
  }
  return {phi_x, phi_y};
}

double SurfaceModel::curvature(double x, double y) const {
  switch (kind) {
    case ModelKind::ConstantOctagon:
      return -1.0;
    case ModelKind::PerturbedOctagon: {
      cplx z(x, y);
      double rho = disk_distance(z, cplx(0, 0));
      double u = bump_u(rho, bump_amplitude, bump_radius);
      double lap; // hyperbolic Laplacian of the radial bump
      if (rho < 1e-5) {
        lap = 2.0 * bump_d2u(0.0, bump_amplitude, bump_radius);
      } else {
        lap = bump_d2u(rho, bump_amplitude, bump_radius) +
              (std::cosh(rho) / std::sinh(rho)) * bump_du(rho, bump_amplitude, bump_radius);
      }
      return std::exp(-2.0 * u) * (-1.0 - lap);
    }
    case ModelKind::FlatCylinderFunnels:
      return -profile_d2(x) / profile(x); // x is the height coordinate s
    case ModelKind::SyntheticDriver:
      throw ModelError("synthetic-driver has no surface geometry");
  }
  return 0.0;
}

// geodesic equations, state y = (x1, x2, theta), unit speed by construction.
// Conformal charts: xdot = e^-phi cos, ydot = e^-phi sin,
// thetadot = e^-phi (phi_y cos - phi_x sin). Cylinder: Clairaut form.
void SurfaceModel::rhs(const double* y, double* dy) const {
  double c = std::cos(y[2]), s = std::sin(y[2]);
  if (kind == ModelKind::FlatCylinderFunnels) {
    double r = profile(y[0]);
    double r1 = profile_d1(y[0]);
    dy[0] = c;
    dy[1] = s / r;
    dy[2] = -(r1 / r) * s;
    return;
  }
  double r2 = y[0] * y[0] + y[1] * y[1];
  double one_m = 1.0 - r2;
  double phi_x = 2.0 * y[0] / one_m;
  double phi_y = 2.0 * y[1] / one_m;
  double u = 0.0;
  if (kind == ModelKind::PerturbedOctagon) {
    double r = std::sqrt(r2);
    double rho = 2.0 * std::atanh(std::min(r, 1.0 - 1e-15));
    if (r > 1e-12 && rho < bump_radius) {
      double du = bump_du(rho, bump_amplitude, bump_radius);
      // grad rho = (2/(1-r^2)) * (x/r, y/r)
      double f = du * 2.0 / (one_m * r);
      phi_x += f * y[0];
      phi_y += f * y[1];
    }
    u = bump_u(rho, bump_amplitude, bump_radius);
  }
  double einv = one_m / 2.0 * std::exp(-u); // e^{-phi}
  dy[0] = einv * c;
  dy[1] = einv * s;
  dy[2] = einv * (phi_y * c - phi_x * s);
}

void SurfaceModel::step_midpoint(double* y, double h) const {
  // implicit midpoint, solved by fixed-point iteration; symmetric, so the
  // composed scheme is time-reversible up to the solver tolerance
  double mid[3] = {y[0], y[1], y[2]};
  double dy[3];
  rhs(y, dy);
  for (int k = 0; k < 3; ++k) mid[k] = y[k] + 0.5 * h * dy[k];
  for (int it = 0; it < 12; ++it) {
    rhs(mid, dy);
    double delta = 0.0;
    for (int k = 0; k < 3; ++k) {
      double next = y[k] + 0.5 * h * dy[k];
      delta = std::max(delta, std::fabs(next - mid[k]));
      mid[k] = next;
    }
    if (delta < 1e-15) break;
  }
  for (int k = 0; k < 3; ++k) y[k] = 2.0 * mid[k] - y[k];
}

void SurfaceModel::step_symmetric4(double* y, double h) const {
  // triple-jump composition of the midpoint rule: symmetric and 4th order
  static const double c1 = 1.0 / (2.0 - std::cbrt(2.0));
  static const double c2 = 1.0 - 2.0 * c1;
  step_midpoint(y, c1 * h);
  step_midpoint(y, c2 * h);
  step_midpoint(y, c1 * h);
}

void SurfaceModel::fold(UnitTangentVector& v) const {
  if (is_octagon()) {
    cplx z(v.x, v.y);
    if (group().in_domain(z)) return;
    cplx z0 = z;
    Mobius g = group().fold(z);
    v.x = z.real();
    v.y = z.imag();
    v.theta = wrap_pi(v.theta + std::arg(g.deriv(z0)));
  } else if (kind == ModelKind::FlatCylinderFunnels) {
    v.y = wrap_pi(v.y);
    v.theta = wrap_pi(v.theta);
  }
}

FlowResult SurfaceModel::flow(const UnitTangentVector& v, double t) const {
  if (!is_surface()) throw ModelError("synthetic-driver has no geodesic flow");
  FlowResult res;
  res.end = v;
  if (t == 0.0) return res;
  long n = std::lround(std::ceil(std::fabs(t) / flow_step));
  if (n < 1) n = 1;
  double h = t / double(n);
  double y[3] = {v.x, v.y, v.theta};
  UnitTangentVector cur = v;
  for (long i = 0; i < n; ++i) {
    step_symmetric4(y, h);
    cur.x = y[0];
    cur.y = y[1];
    cur.theta = y[2];
    fold(cur);
    y[0] = cur.x;
    y[1] = cur.y;
    y[2] = cur.theta;
    if (kind == ModelKind::FlatCylinderFunnels && !res.escaped &&
        std::fabs(cur.x) > height_window) {
      res.escaped = true;
      res.escape_time = (i + 1) * h;
    }
  }
  cur.theta = wrap_pi(cur.theta);
  res.end = cur;
  return res;
}

OrbitSamples SurfaceModel::flow_samples(const UnitTangentVector& v, double t0, double t1,
                                        double dt) const {
  if (!is_surface()) throw ModelError("synthetic-driver has no geodesic flow");
  if (dt <= 0.0 || t1 < t0) throw ModelError("flow_samples: bad time range");
  OrbitSamples out;
  out.t0 = t0;
  out.dt = dt;
  UnitTangentVector cur = v;
  if (t0 != 0.0) {
    FlowResult lead = flow(v, t0);
    cur = lead.end;
    // escape inside the lead-in is tracked relative to the orbit's t = 0
    if (lead.escaped) {
      out.escaped = true;
      out.escape_time = lead.escape_time;
    }
  }
  int n = int(std::lround((t1 - t0) / dt));
  out.pts.reserve(n + 1);
  out.pts.push_back(cur);
  long sub = std::lround(std::ceil(dt / flow_step));
  if (sub < 1) sub = 1;
  double h = dt / double(sub);
  double y[3] = {cur.x, cur.y, cur.theta};
  for (int i = 0; i < n; ++i) {
    for (long j = 0; j < sub; ++j) {
      step_symmetric4(y, h);
      cur.x = y[0];
      cur.y = y[1];
      cur.theta = y[2];
      fold(cur);
      y[0] = cur.x;
      y[1] = cur.y;
      y[2] = cur.theta;
      if (kind == ModelKind::FlatCylinderFunnels && !out.escaped &&
          std::fabs(cur.x) > height_window) {
        out.escaped = true;
        out.escape_time = t0 + i * dt + (j + 1) * h;
      }
    }
    UnitTangentVector rec = cur;
    rec.theta = wrap_pi(rec.theta);
    out.pts.push_back(rec);
  }
  return out;
}

double SurfaceModel::hyperbolic_chart_dist(cplx zp, cplx zq) const {
  double L = disk_distance(zp, zq);
  if (kind == ModelKind::ConstantOctagon || L < 1e-14) return L;
  // Perturbed metric: integrate the conformal stretch e^u along the
  // hyperbolic geodesic between the points. Upper bound of the true
  // distance; the defect is O(amplitude^2 L^3), negligible at the
  // separations this is used for.
  cplx dir = (zq - zp) / (1.0 - std::conj(zp) * zq);
  double psi = std::arg(dir);
  double acc = 0.0;
  for (int g = 0; g < 8; ++g) {
    cplx z = disk_geodesic(zp, psi, kGLx[g] * L);
    group().fold(z); // in the domain only the bump copy at 0 contributes
    double rho = disk_distance(z, cplx(0, 0));
    acc += kGLw[g] * std::exp(bump_u(rho, bump_amplitude, bump_radius));
  }
  return acc * L;
}

double SurfaceModel::metric_dist(double px, double py, double qx, double qy) const {
  if (kind == ModelKind::FlatCylinderFunnels) {
    double ds = px - qx;
    double best = kInf;
    for (int k = -1; k <= 1; ++k) {
      double dphi = py - qy + 2.0 * M_PI * k;
      if (std::fabs(dphi) > M_PI + 1e-9 && k != 0) continue;
      // length of the chart-straight segment; exact while r is constant,
      // an upper-bound approximation through the funnels
      double len = 0.0;
      for (int g = 0; g < 8; ++g) {
        double s = qx + kGLx[g] * (px - qx);
        double r = profile(s);
        len += kGLw[g] * std::sqrt(ds * ds + r * r * dphi * dphi);
      }
      best = std::min(best, len);
    }
    return best;
  }
  if (!is_surface()) throw ModelError("synthetic-driver has no surface metric");

  UnitTangentVector p{px, py, 0.0, 0};
  UnitTangentVector q{qx, qy, 0.0, 0};
  fold(p);
  fold(q);
  cplx zp(p.x, p.y), zq(q.x, q.y);
  double dp0 = disk_distance(zp, cplx(0, 0));
  double dq0 = disk_distance(zq, cplx(0, 0));
  const auto& trans = sorted_translates(group(), deck_radius);
  double best = kInf;
  for (const auto& tr : trans) {
    if (tr.origin_shift - dp0 - dq0 >= best) break; // sorted: nothing closer follows
    double d = hyperbolic_chart_dist(zp, tr.g.apply(zq));
    best = std::min(best, d);
  }
  return best;
}

double SurfaceModel::knieper_distance(const UnitTangentVector& v, const UnitTangentVector& w,
                                      int samples_per_unit) const {
  return bowen_distance(v, w, 0.0, samples_per_unit);
}

double SurfaceModel::bowen_distance(const UnitTangentVector& v, const UnitTangentVector& w,
                                    double t, int samples_per_unit) const {
  double horizon = t + 1.0;
  int n = std::max(1, int(std::ceil(horizon * samples_per_unit)));
  double dt = horizon / n;
  OrbitSamples ov = flow_samples(v, 0.0, horizon, dt);
  OrbitSamples ow = flow_samples(w, 0.0, horizon, dt);
  return orbit_max_distance(ov, ow);
}

double SurfaceModel::orbit_max_distance(const OrbitSamples& a, const OrbitSamples& b) const {
  if (a.size() != b.size()) throw ModelError("orbit_max_distance: sample grids differ");
  double m = 0.0;
  for (int i = 0; i < a.size(); ++i)
    m = std::max(m, metric_dist(a.pts[i].x, a.pts[i].y, b.pts[i].x, b.pts[i].y));
  return m;
}

std::array<double, 3> SurfaceModel::chart_gap(const UnitTangentVector& p,
                                              const UnitTangentVector& q) const {
  if (kind == ModelKind::FlatCylinderFunnels) {
    double dphi = wrap_pi(q.y - p.y);
    return {q.x - p.x, dphi, wrap_pi(q.theta - p.theta)};
  }
  if (!is_surface()) throw ModelError("synthetic-driver has no chart");
  UnitTangentVector a = p, b = q;
  fold(a);
  fold(b);
  cplx za(a.x, a.y), zb(b.x, b.y);
  // folded representatives can land near opposite edges of the domain; pick
  // the deck image of q that is chart-closest to p
  cplx best_z = zb;
  double best_th = b.theta;
  double best = std::abs(zb - za);
  const auto& trans = sorted_translates(group(), deck_radius);
  for (const auto& tr : trans) {
    cplx z = tr.g.apply(zb);
    double d = std::abs(z - za);
    if (d < best) {
      best = d;
      best_z = z;
      best_th = b.theta + std::arg(tr.g.deriv(zb));
    }
  }
  return {best_z.real() - za.real(), best_z.imag() - za.imag(), wrap_pi(best_th - a.theta)};
}

bool SurfaceModel::in_singular_set(const UnitTangentVector& v, double tol) const {
  if (kind != ModelKind::FlatCylinderFunnels) return false;
  if (std::fabs(v.x) > cyl_half_width + tol) return false;
  double d1 = std::fabs(wrap_pi(v.theta - M_PI / 2.0));
  double d2 = std::fabs(wrap_pi(v.theta + M_PI / 2.0));
  return std::min(d1, d2) <= tol;
}

double SurfaceModel::sing_distance(const UnitTangentVector& v, int samples_per_unit) const {
  if (!is_surface()) throw ModelError("synthetic-driver has no singular set");
  if (!has_singular_set()) return kInf; // empty Sing: documented sentinel
  // Footprints of v over the Knieper window
  int n = samples_per_unit;
  OrbitSamples orb = flow_samples(v, 0.0, 1.0, 1.0 / n);
  // Singular orbits are rigid rotations at height |h| <= w: footprint
  // (h, psi + sigma t / a). Minimize the windowed footprint sup over
  // (h, psi, sigma) with a coarse grid plus local refinement.
  double a = cyl_radius, w = cyl_half_width;
  auto objective = [&](double h, double psi, int sigma) {
    double worst = 0.0;
    for (int i = 0; i <= n; ++i) {
      double t = double(i) / n;
      double d = metric_dist(orb.pts[i].x, orb.pts[i].y, h, psi + sigma * t / a);
      worst = std::max(worst, d);
      if (worst == kInf) break;
    }
    return worst;
  };
  double best = kInf;
  for (int sigma = -1; sigma <= 1; sigma += 2) {
    // coarse grid
    double bh = 0.0, bp = 0.0, bv = kInf;
    for (int i = 0; i <= 12; ++i) {
      double h = -w + 2.0 * w * i / 12.0;
      for (int j = 0; j < 16; ++j) {
        double psi = -M_PI + 2.0 * M_PI * j / 16.0;
        double val = objective(h, psi, sigma);
        if (val < bv) {
          bv = val;
          bh = h;
          bp = psi;
        }
      }
    }
    // Nelder-Mead refinement in (h, psi)
    double step_h = w / 6.0, step_p = M_PI / 8.0;
    struct P {
      double h, p, v;
    };
    auto eval = [&](double h, double p) {
      h = std::clamp(h, -w, w);
      return objective(h, p, sigma);
    };
    P simplex[3] = {{bh, bp, bv},
                    {std::clamp(bh + step_h, -w, w), bp, 0},
                    {bh, bp + step_p, 0}};
    simplex[1].v = eval(simplex[1].h, simplex[1].p);
    simplex[2].v = eval(simplex[2].h, simplex[2].p);
    for (int it = 0; it < 60; ++it) {
      std::sort(simplex, simplex + 3, [](const P& x, const P& y) { return x.v < y.v; });
      if (simplex[2].v - simplex[0].v < 1e-10) break;
      double ch = 0.5 * (simplex[0].h + simplex[1].h);
      double cp = 0.5 * (simplex[0].p + simplex[1].p);
      P refl{ch + (ch - simplex[2].h), cp + (cp - simplex[2].p), 0};
      refl.v = eval(refl.h, refl.p);
      if (refl.v < simplex[0].v) {
        P exp_{ch + 2 * (ch - simplex[2].h), cp + 2 * (cp - simplex[2].p), 0};
        exp_.v = eval(exp_.h, exp_.p);
        simplex[2] = exp_.v < refl.v ? exp_ : refl;
      } else if (refl.v < simplex[1].v) {
        simplex[2] = refl;
      } else {
        P con{ch + 0.5 * (simplex[2].h - ch), cp + 0.5 * (simplex[2].p - cp), 0};
        con.v = eval(con.h, con.p);
        if (con.v < simplex[2].v) {
          simplex[2] = con;
        } else {
          for (int k = 1; k < 3; ++k) {
            simplex[k].h = 0.5 * (simplex[k].h + simplex[0].h);
            simplex[k].p = 0.5 * (simplex[k].p + simplex[0].p);
            simplex[k].v = eval(simplex[k].h, simplex[k].p);
          }
        }
      }
    }
    best = std::min(best, simplex[0].v);
  }
  return best;
}

std::vector<UnitTangentVector> SurfaceModel::sing_sample(int n, Rng& rng) const {
  std::vector<UnitTangentVector> out;
  if (!has_singular_set()) return out; // empty for the octagon models
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    UnitTangentVector v;
    v.x = rng.uniform(-cyl_half_width, cyl_half_width);
    v.y = rng.uniform(-M_PI, M_PI);
    v.theta = rng.uniform() < 0.5 ? M_PI / 2.0 : -M_PI / 2.0;
    out.push_back(v);
  }
  return out;
}

UnitTangentVector SurfaceModel::random_vector(Rng& rng, double band) const {
  UnitTangentVector v;
  if (is_octagon()) {
    // area-uniform in the fundamental domain by rejection from a disk
    const double R = 1.8; // covers the octagon's circumradius
    for (int guard = 0; guard < 4096; ++guard) {
      double rho = std::acosh(1.0 + rng.uniform() * (std::cosh(R) - 1.0));
      double alpha = rng.uniform(-M_PI, M_PI);
      cplx z = std::polar(std::tanh(rho / 2.0), alpha);
      if (!group().in_domain(z)) continue;
      v.x = z.real();
      v.y = z.imag();
      v.theta = rng.uniform(-M_PI, M_PI);
      return v;
    }
    throw ModelError("random_vector: rejection sampling failed");
  }
  if (kind == ModelKind::FlatCylinderFunnels) {
    double b = band > 0.0 ? band : cyl_half_width + 1.0;
    v.x = rng.uniform(-b, b);
    v.y = rng.uniform(-M_PI, M_PI);
    v.theta = rng.uniform(-M_PI, M_PI);
    return v;
  }
  throw ModelError("synthetic-driver has no tangent vectors");
}

std::vector<std::pair<std::string, std::string>> SurfaceModel::catalog() {
  return {
      {"constant-octagon",
       "genus-2 hyperbolic octagon quotient, curvature -1 everywhere"},
      {"perturbed-octagon",
       "octagon quotient with a compact radial conformal bump at the center (K <= 0)"},
      {"flat-cylinder-funnels",
       "surface of revolution: flat cylindrical core glued to convex negatively curved funnels"},
      {"synthetic-driver",
       "no geometry; drives matrix cocycles from prescribed curvature signals"},
  };
}

void write_orbit_csv(const std::string& path, const OrbitSamples& orbit) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write orbit csv: " + path);
  f << "t,chart,x,y,angle\n";
  char line[160];
  for (int i = 0; i < orbit.size(); ++i) {
    const auto& p = orbit.pts[i];
    std::snprintf(line, sizeof line, "%.12g,%d,%.17g,%.17g,%.17g\n", orbit.time_of(i), p.chart,
                  p.x, p.y, p.theta);
    f << line;
  }
}

} // namespace rank1
