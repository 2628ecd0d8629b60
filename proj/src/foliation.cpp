#include "rank1/foliation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace rank1 {

namespace {

// Riccati past horizon for leaf direction fields. Convergence at tol 1e-8
// certifies itself by tau-doubling well inside this span on the models here;
// what does not converge by then is the near-Sing case the callers flag.
constexpr double kFieldTau = 32.0;

// turning rate of the side-leaf direction field at x: the converged unstable
// Riccati value for the unstable side, minus the value at the reversed vector
// for the stable side (the stable horocycle curves the opposite way)
bool leaf_rate(const SurfaceModel& model, const UnitTangentVector& x, LeafSide side,
               double* rate) {
  UnitTangentVector probe = side == LeafSide::Unstable ? x : reversed(x);
  UnstableResult r = unstable_riccati_at(model, probe, kFieldTau);
  *rate = side == LeafSide::Unstable ? r.u.a : -r.u.a;
  return r.converged;
}

// leaf ODE, state y = (x1, x2, theta), parameter = metric arc length.
// The footprint moves perpendicular to the vector (chart angle theta + pi/2)
// while the vector turns at the Riccati rate relative to parallel transport:
// dtheta = rate - omega(footprint velocity), omega the connection form of the
// orthonormal chart frame.
bool leaf_rhs(const SurfaceModel& model, const double* y, LeafSide side, double* dy) {
  double rate;
  if (!leaf_rate(model, {y[0], y[1], y[2], 0}, side, &rate)) return false;
  double c = std::cos(y[2]), s = std::sin(y[2]);
  if (model.kind == ModelKind::FlatCylinderFunnels) {
    double r = model.profile(y[0]);
    double r1 = model.profile_d1(y[0]);
    dy[0] = -s;
    dy[1] = c / r;
    dy[2] = rate - (r1 / r) * c; // omega = r' dphi
    return true;
  }
  double phi = model.log_conformal(y[0], y[1]);
  auto g = model.log_conformal_grad(y[0], y[1]);
  double einv = std::exp(-phi);
  dy[0] = -einv * s;
  dy[1] = einv * c;
  dy[2] = rate - einv * (g[0] * c + g[1] * s); // omega = -phi_y dx + phi_x dy
  return true;
}

} // namespace

double local_gap_norm(const SurfaceModel& model, const UnitTangentVector& p,
                      const UnitTangentVector& q) {
  auto g = model.chart_gap(p, q);
  double sx, sy;
  if (model.kind == ModelKind::FlatCylinderFunnels) {
    sx = 1.0;
    sy = model.profile(p.x);
  } else {
    sx = sy = std::exp(model.log_conformal(p.x, p.y));
  }
  double a = sx * g[0], b = sy * g[1];
  return std::sqrt(a * a + b * b + g[2] * g[2]);
}

LeafAdvanceResult leaf_advance(const SurfaceModel& model, const UnitTangentVector& v,
                               LeafSide side, double rho, double step) {
  if (!model.is_surface()) throw FoliationError("synthetic-driver has no leaves");
  LeafAdvanceResult out;
  out.v = v;
  if (rho == 0.0) return out;
  int n = std::max(1, int(std::ceil(std::fabs(rho) / step)));
  double h = rho / n;
  double y[3] = {v.x, v.y, v.theta};
  double k1[3], k2[3], k3[3], k4[3], tmp[3];
  for (int i = 0; i < n; ++i) {
    bool ok = leaf_rhs(model, y, side, k1);
    if (ok) {
      for (int q = 0; q < 3; ++q) tmp[q] = y[q] + 0.5 * h * k1[q];
      ok = leaf_rhs(model, tmp, side, k2);
    }
    if (ok) {
      for (int q = 0; q < 3; ++q) tmp[q] = y[q] + 0.5 * h * k2[q];
      ok = leaf_rhs(model, tmp, side, k3);
    }
    if (ok) {
      for (int q = 0; q < 3; ++q) tmp[q] = y[q] + h * k3[q];
      ok = leaf_rhs(model, tmp, side, k4);
    }
    if (!ok) { // Riccati non-convergence en route: stop where we are
      out.complete = false;
      return out;
    }
    for (int q = 0; q < 3; ++q) y[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
    UnitTangentVector cur{y[0], y[1], y[2], v.chart};
    model.fold(cur);
    y[0] = cur.x;
    y[1] = cur.y;
    y[2] = cur.theta;
    out.v = cur;
    out.arc += h;
  }
  return out;
}

LeafCurve trace_leaf(const SurfaceModel& model, const UnitTangentVector& v, LeafSide side,
                     double radius, double sample_step, bool with_lambda, double step) {
  LeafCurve curve;
  curve.base = v;
  curve.side = side;
  int n = std::max(1, int(std::ceil(radius / sample_step)));
  double h = radius / n;
  std::vector<LeafSample> neg;
  for (int dir = -1; dir <= 1; dir += 2) {
    UnitTangentVector cur = v;
    for (int i = 1; i <= n; ++i) {
      LeafAdvanceResult adv = leaf_advance(model, cur, side, dir * h, step);
      if (!adv.complete) {
        curve.complete = false;
        break;
      }
      cur = adv.v;
      LeafSample smp;
      smp.arc = dir * i * h;
      smp.v = cur;
      if (with_lambda) smp.lambda = lambda_at(model, cur, kFieldTau).lambda;
      if (dir < 0)
        neg.push_back(smp);
      else
        curve.samples.push_back(smp);
    }
  }
  LeafSample base;
  base.arc = 0.0;
  base.v = v;
  if (with_lambda) base.lambda = lambda_at(model, v, kFieldTau).lambda;
  std::vector<LeafSample> all(neg.rbegin(), neg.rend());
  all.push_back(base);
  all.insert(all.end(), curve.samples.begin(), curve.samples.end());
  curve.samples = std::move(all);
  return curve;
}

void write_leaf_csv(const std::string& path, const LeafCurve& leaf) {
  std::ofstream f(path);
  if (!f) throw FoliationError("cannot write leaf csv: " + path);
  f << "arclength,chart,x,y,angle,lambda\n";
  char line[200];
  for (const auto& s : leaf.samples) {
    std::snprintf(line, sizeof line, "%.17g,%d,%.17g,%.17g,%.17g,%.17g\n", s.arc, s.v.chart,
                  s.v.x, s.v.y, s.v.theta, s.lambda);
    f << line;
  }
}

LeafAudit leaf_membership_check(const SurfaceModel& model, const UnitTangentVector& v,
                                const UnitTangentVector& w, LeafSide side, double horizon,
                                double slack) {
  // run the defining property forward for stable, backward for unstable
  double dir = side == LeafSide::Stable ? 1.0 : -1.0;
  int n = std::max(4, int(std::ceil(horizon * 8.0)));
  double dt = horizon / n;
  LeafAudit audit;
  UnitTangentVector a = v, b = w;
  std::vector<double> gap(n + 1);
  for (int i = 0; i <= n; ++i) {
    if (i > 0) {
      a = model.flow(a, dir * dt).end;
      b = model.flow(b, dir * dt).end;
    }
    gap[i] = model.metric_dist(a.x, a.y, b.x, b.y);
  }
  audit.start_gap = gap.front();
  audit.end_gap = gap.back();
  audit.max_gap = *std::max_element(gap.begin(), gap.end());
  int q = std::max(1, n / 4);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < q; ++i) {
    head += gap[i];
    tail += gap[n - i];
  }
  audit.head_mean = head / q;
  audit.tail_mean = tail / q;
  audit.ok = audit.tail_mean <= audit.head_mean * (1.0 + slack) + 1e-9 &&
             audit.max_gap <= audit.start_gap * (1.0 + slack) + 1e-9;
  return audit;
}

namespace {

// closest approach of the side-leaf through v to w: coarse sweep of one
// integration pass per orientation, then golden-section refinement of the
// best bracket (re-advancing only from the nearest recorded sample)
struct LeafClosest {
  double arc = 0.0;
  double resid = kInf;
};

LeafClosest leaf_closest(const SurfaceModel& model, const UnitTangentVector& v,
                         const UnitTangentVector& w, LeafSide side, double R, double step) {
  LeafClosest best;
  best.arc = 0.0;
  best.resid = local_gap_norm(model, v, w);
  UnitTangentVector best_base = v;
  double best_base_arc = 0.0;
  int n = std::max(1, int(std::ceil(R / step)));
  double h = R / n;
  for (int dir = -1; dir <= 1; dir += 2) {
    UnitTangentVector cur = v;
    UnitTangentVector prev = v;
    for (int i = 1; i <= n; ++i) {
      LeafAdvanceResult adv = leaf_advance(model, cur, side, dir * h, step);
      if (!adv.complete) break;
      prev = cur;
      cur = adv.v;
      double r = local_gap_norm(model, cur, w);
      if (r < best.resid) {
        best.resid = r;
        best.arc = dir * i * h;
        best_base = prev; // refine from one sample before the minimum
        best_base_arc = dir * (i - 1) * h;
      }
    }
  }
  // golden-section refine over [best_base_arc, best_base_arc + 2h*dir-ish]:
  // bracket of width 2h around the best sample, clipped to the swept range
  double lo = best.arc - h, hi = best.arc + h;
  auto eval = [&](double arc) {
    LeafAdvanceResult adv = leaf_advance(model, best_base, side, arc - best_base_arc, step);
    if (!adv.complete) return kInf;
    return local_gap_norm(model, adv.v, w);
  };
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 40 && (b - a) > 1e-9; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = eval(x2);
    }
  }
  double arc = 0.5 * (a + b);
  double resid = eval(arc);
  if (resid < best.resid) {
    best.resid = resid;
    best.arc = arc;
  }
  return best;
}

} // namespace

double leaf_arc_to(const SurfaceModel& model, const UnitTangentVector& v,
                   const UnitTangentVector& w, LeafSide side, double R_search, double tol,
                   double step) {
  LeafClosest c = leaf_closest(model, v, w, side, R_search, step);
  if (c.resid > tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "not on the %s leaf within %g (best residual %.3g at arc %.6g)",
                  side == LeafSide::Stable ? "stable" : "unstable", tol, c.resid, c.arc);
    throw FoliationError(buf);
  }
  return c.arc;
}

double leaf_distance(const SurfaceModel& model, const UnitTangentVector& v,
                     const UnitTangentVector& w, LeafSide side, double R_search, double tol,
                     double step) {
  return std::fabs(leaf_arc_to(model, v, w, side, R_search, tol, step));
}

double center_stable_distance(const SurfaceModel& model, const UnitTangentVector& v,
                              const UnitTangentVector& w, double R_search, double tau_max,
                              double tol) {
  // d^cs = min over flow shifts of |tau| + d^s(f_tau v, w); the shift with w
  // actually on the shifted stable leaf is the only one with small residual
  double best_total = kInf, best_tau = 0.0, best_resid = kInf;
  int n = std::max(2, int(std::ceil(tau_max / 0.05)));
  for (int i = -n; i <= n; ++i) {
    double tau = tau_max * double(i) / n;
    UnitTangentVector p = model.flow(v, tau).end;
    LeafClosest c = leaf_closest(model, p, w, LeafSide::Stable, R_search, 0.02);
    if (c.resid > 1e-3) continue; // not on this shifted leaf at all
    double total = std::fabs(tau) + std::fabs(c.arc);
    if (total < best_total) {
      best_total = total;
      best_tau = tau;
      best_resid = c.resid;
    }
  }
  if (best_resid > tol) {
    // refine the shift around the best candidate before giving up
    for (double tau = best_tau - 0.05; tau <= best_tau + 0.05; tau += 0.01) {
      UnitTangentVector p = model.flow(v, tau).end;
      LeafClosest c = leaf_closest(model, p, w, LeafSide::Stable, R_search, 0.02);
      double total = std::fabs(tau) + std::fabs(c.arc);
      if (c.resid <= tol && total < best_total) {
        best_total = total;
        best_resid = c.resid;
      }
    }
  }
  if (best_resid > tol)
    throw FoliationError("center-stable distance: no shift puts the target on the leaf");
  return best_total;
}

LocalProductResult local_product(const SurfaceModel& model, const UnitTangentVector& w1,
                                 const UnitTangentVector& w2, double delta, double kappa,
                                 double tol) {
  double dk = model.knieper_distance(w1, w2);
  if (dk >= delta) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "local product needs d_K < %g, got %.4g", delta, dk);
    throw FoliationError(buf);
  }
  double box = std::max(kappa * dk, 16.0 * tol); // search box for the unknowns

  // residual of the two leaf expressions meeting: advance w1 along the
  // unstable leaf by a, advance w2 along the stable leaf by b then flow by
  // tau; gap measured in metric units at the first point
  auto resid = [&](const double* p, double* F) -> bool {
    LeafAdvanceResult pu = leaf_advance(model, w1, LeafSide::Unstable, p[0]);
    if (!pu.complete) return false;
    LeafAdvanceResult ps = leaf_advance(model, w2, LeafSide::Stable, p[1]);
    if (!ps.complete) return false;
    UnitTangentVector q = model.flow(ps.v, p[2]).end;
    auto g = model.chart_gap(pu.v, q);
    double sx, sy;
    if (model.kind == ModelKind::FlatCylinderFunnels) {
      sx = 1.0;
      sy = model.profile(pu.v.x);
    } else {
      sx = sy = std::exp(model.log_conformal(pu.v.x, pu.v.y));
    }
    F[0] = sx * g[0];
    F[1] = sy * g[1];
    F[2] = g[2];
    return true;
  };
  auto norm3 = [](const double* F) {
    return std::sqrt(F[0] * F[0] + F[1] * F[1] + F[2] * F[2]);
  };

  double p[3] = {0.0, 0.0, 0.0};
  double F[3];
  if (!resid(p, F)) throw FoliationError("local product: Riccati non-convergence at the base");
  double fn = norm3(F);
  LocalProductResult out;
  if (fn <= tol) { // w1 and w2 already coincide as leaf expressions
    LeafAdvanceResult pu = leaf_advance(model, w1, LeafSide::Unstable, 0.0);
    out.point = pu.v;
    out.residual = fn;
    return out;
  }

  // damped Newton with forward-difference Jacobian; fall back to a simplex
  // descent on |F|^2 if a step cannot reduce the residual
  const double fd = 1e-6;
  int it = 0;
  for (; it < 30 && fn > tol; ++it) {
    double J[3][3];
    bool ok = true;
    for (int c = 0; c < 3 && ok; ++c) {
      double pc[3] = {p[0], p[1], p[2]};
      pc[c] += fd;
      double Fc[3];
      ok = resid(pc, Fc);
      if (!ok) break;
      for (int r = 0; r < 3; ++r) J[r][c] = (Fc[r] - F[r]) / fd;
    }
    if (!ok) break;
    // solve J d = -F by Gaussian elimination with partial pivoting
    double A[3][4];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) A[r][c] = J[r][c];
      A[r][3] = -F[r];
    }
    bool singular = false;
    for (int c = 0; c < 3; ++c) {
      int piv = c;
      for (int r = c + 1; r < 3; ++r)
        if (std::fabs(A[r][c]) > std::fabs(A[piv][c])) piv = r;
      if (std::fabs(A[piv][c]) < 1e-14) {
        singular = true;
        break;
      }
      if (piv != c)
        for (int k = c; k < 4; ++k) std::swap(A[piv][k], A[c][k]);
      for (int r = c + 1; r < 3; ++r) {
        double f = A[r][c] / A[c][c];
        for (int k = c; k < 4; ++k) A[r][k] -= f * A[c][k];
      }
    }
    if (singular) break;
    double d[3];
    for (int r = 2; r >= 0; --r) {
      double s = A[r][3];
      for (int c = r + 1; c < 3; ++c) s -= A[r][c] * d[c];
      d[r] = s / A[r][r];
    }
    // damping: halve until the residual drops
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 6; ++half, scale *= 0.5) {
      double pn[3] = {p[0] + scale * d[0], p[1] + scale * d[1], p[2] + scale * d[2]};
      bool inside = std::fabs(pn[0]) <= box && std::fabs(pn[1]) <= box && std::fabs(pn[2]) <= box;
      double Fn[3];
      if (!inside || !resid(pn, Fn)) continue;
      double fnn = norm3(Fn);
      if (fnn < fn) {
        for (int q = 0; q < 3; ++q) {
          p[q] = pn[q];
          F[q] = Fn[q];
        }
        fn = fnn;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }

  if (fn > tol) {
    // derivative-free fallback: Nelder-Mead on |F| over the box
    struct Vert {
      double p[3];
      double f;
    };
    auto feval = [&](const double* q) {
      double Fq[3];
      if (std::fabs(q[0]) > box || std::fabs(q[1]) > box || std::fabs(q[2]) > box) return kInf;
      if (!resid(q, Fq)) return kInf;
      return norm3(Fq);
    };
    double h0 = std::max(0.25 * box, 4.0 * tol);
    Vert simplex[4];
    for (int k = 0; k < 4; ++k) {
      for (int q = 0; q < 3; ++q) simplex[k].p[q] = p[q] + (k == q + 1 ? h0 : 0.0);
      simplex[k].f = feval(simplex[k].p);
    }
    for (int nm = 0; nm < 200; ++nm) {
      std::sort(simplex, simplex + 4, [](const Vert& x, const Vert& y) { return x.f < y.f; });
      if (simplex[0].f <= tol || simplex[3].f - simplex[0].f < 1e-14) break;
      double cen[3] = {0, 0, 0};
      for (int k = 0; k < 3; ++k)
        for (int q = 0; q < 3; ++q) cen[q] += simplex[k].p[q] / 3.0;
      double refl[3];
      for (int q = 0; q < 3; ++q) refl[q] = cen[q] + (cen[q] - simplex[3].p[q]);
      double fr = feval(refl);
      if (fr < simplex[0].f) {
        double ex[3];
        for (int q = 0; q < 3; ++q) ex[q] = cen[q] + 2.0 * (cen[q] - simplex[3].p[q]);
        double fe = feval(ex);
        if (fe < fr) {
          std::copy(ex, ex + 3, simplex[3].p);
          simplex[3].f = fe;
        } else {
          std::copy(refl, refl + 3, simplex[3].p);
          simplex[3].f = fr;
        }
      } else if (fr < simplex[2].f) {
        std::copy(refl, refl + 3, simplex[3].p);
        simplex[3].f = fr;
      } else {
        double con[3];
        for (int q = 0; q < 3; ++q) con[q] = cen[q] + 0.5 * (simplex[3].p[q] - cen[q]);
        double fc = feval(con);
        if (fc < simplex[3].f) {
          std::copy(con, con + 3, simplex[3].p);
          simplex[3].f = fc;
        } else {
          for (int k = 1; k < 4; ++k) {
            for (int q = 0; q < 3; ++q)
              simplex[k].p[q] = 0.5 * (simplex[k].p[q] + simplex[0].p[q]);
            simplex[k].f = feval(simplex[k].p);
          }
        }
      }
    }
    std::sort(simplex, simplex + 4, [](const Vert& x, const Vert& y) { return x.f < y.f; });
    if (simplex[0].f < fn) {
      std::copy(simplex[0].p, simplex[0].p + 3, p);
      fn = simplex[0].f;
      resid(p, F);
    }
  }

  if (fn > tol) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "local product did not converge (residual %.3g)", fn);
    throw FoliationError(buf);
  }
  double cs = std::fabs(p[1]) + std::fabs(p[2]);
  if (std::fabs(p[0]) > kappa * dk + 1e-6 || cs > kappa * dk + 1e-6) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "local product outside the kappa box: d^u %.3g, d^cs %.3g vs kappa*d_K %.3g",
                  std::fabs(p[0]), cs, kappa * dk);
    throw FoliationError(buf);
  }
  LeafAdvanceResult pu = leaf_advance(model, w1, LeafSide::Unstable, p[0]);
  out.point = pu.v;
  out.unstable_arc = p[0];
  out.stable_arc = p[1];
  out.flow_shift = p[2];
  out.residual = fn;
  out.iterations = it;
  return out;
}

ProjectionResult project_to_reg(const SurfaceModel& model, const UnitTangentVector& v,
                                LeafSide side, double eta0, double R, double scan_step) {
  ProjectionResult out;
  double max_seen = -kInf;
  LambdaResult l0 = lambda_at(model, v, kFieldTau);
  max_seen = l0.lambda;
  if (l0.lambda >= eta0) { // identity shortcut
    out.w = v;
    out.lambda = l0.lambda;
    return out;
  }
  int n = std::max(1, int(std::ceil(R / scan_step)));
  double h = R / n;
  struct March {
    UnitTangentVector at;
    double arc = 0.0;
    bool alive = true;
  };
  March m[2] = {{v, 0.0, true}, {v, 0.0, true}};
  double dirs[2] = {1.0, -1.0};
  for (int i = 1; i <= n; ++i) {
    for (int k = 0; k < 2; ++k) {
      if (!m[k].alive) continue;
      LeafAdvanceResult adv = leaf_advance(model, m[k].at, side, dirs[k] * h);
      if (!adv.complete) {
        m[k].alive = false;
        continue;
      }
      UnitTangentVector prev = m[k].at;
      double prev_arc = m[k].arc;
      m[k].at = adv.v;
      m[k].arc += dirs[k] * h;
      LambdaResult lam = lambda_at(model, m[k].at, kFieldTau);
      max_seen = std::max(max_seen, lam.lambda);
      if (lam.lambda >= eta0) {
        // earliest qualifying point: bisect the bracket [prev, current]
        double lo = 0.0, hi = dirs[k] * h;
        UnitTangentVector best = m[k].at;
        double best_lam = lam.lambda;
        for (int b = 0; b < 12; ++b) {
          double mid = 0.5 * (lo + hi);
          LeafAdvanceResult step_adv = leaf_advance(model, prev, side, mid);
          if (!step_adv.complete) break;
          LambdaResult lm = lambda_at(model, step_adv.v, kFieldTau);
          if (lm.lambda >= eta0) {
            hi = mid;
            best = step_adv.v;
            best_lam = lm.lambda;
          } else {
            lo = mid;
          }
        }
        out.w = best;
        out.arc = prev_arc + hi;
        out.lambda = best_lam;
        out.moved = true;
        return out;
      }
    }
    if (!m[0].alive && !m[1].alive) break;
  }
  char buf[140];
  std::snprintf(buf, sizeof buf,
                "projection exhausted radius %g without lambda >= %g (max lambda seen %.4g)", R,
                eta0, max_seen);
  throw FoliationError(buf);
}

RegularizedSegment regularize_segment(const SurfaceModel& model, const UnitTangentVector& v,
                                      double t, double eta0, double R, double T, double delta,
                                      double eta_check) {
  if (t <= 2.0 * T) throw FoliationError("regularize_segment needs t > 2T");
  RegularizedSegment seg;
  seg.t = t;
  seg.T_used = T;
  seg.delta_used = delta;
  seg.eta_checked = eta_check;

  ProjectionResult ps = project_to_reg(model, v, LeafSide::Stable, eta0, R);
  seg.stable_arc = ps.arc;
  UnitTangentVector mid_end = model.flow(ps.w, t).end;
  ProjectionResult pu = project_to_reg(model, mid_end, LeafSide::Unstable, eta0, R);
  seg.unstable_arc = pu.arc;
  seg.w = model.flow(pu.w, -t).end;

  // verify the two claimed properties directly on the returned segment
  seg.lambda_start = lambda_at(model, seg.w, 2.0 * kFieldTau).lambda;
  seg.lambda_end = lambda_at(model, model.flow(seg.w, t).end, 2.0 * kFieldTau).lambda;
  seg.endpoints_regular = seg.lambda_start >= eta_check && seg.lambda_end >= eta_check;

  seg.worst_mid_sing_gap = 0.0;
  if (model.has_singular_set()) {
    double span = t - 2.0 * T;
    int n = std::max(1, int(std::ceil(span / 0.5)));
    UnitTangentVector cur = model.flow(seg.w, T).end;
    for (int i = 0; i <= n; ++i) {
      if (i > 0) cur = model.flow(cur, span / n).end;
      seg.worst_mid_sing_gap = std::max(seg.worst_mid_sing_gap, model.sing_distance(cur));
    }
    seg.mid_near_sing = seg.worst_mid_sing_gap < delta;
  } else {
    seg.mid_near_sing = true; // vacuous without a singular set
  }
  return seg;
}

FoliationCalibration default_calibration(const SurfaceModel& model) {
  FoliationCalibration cal;
  switch (model.kind) {
    case ModelKind::ConstantOctagon:
    case ModelKind::PerturbedOctagon:
      // lambda is bounded away from zero, projections are identities;
      // kappa covers the leaf-frame skew of the local product
      cal.eta0 = 0.3;
      cal.R = 0.5;
      cal.delta = 0.05;
      cal.kappa = 4.0;
      cal.T = 4.0;
      break;
    case ModelKind::FlatCylinderFunnels:
      cal.eta0 = 0.05;
      cal.R = 2.5;
      cal.delta = 0.1;
      cal.kappa = 6.0;
      cal.T = 8.0;
      break;
    case ModelKind::SyntheticDriver:
      break;
  }
  return cal;
}

void write_calibration_json(const std::string& path, const SurfaceModel& model,
                            const FoliationCalibration& cal) {
  std::ofstream f(path);
  if (!f) throw FoliationError("cannot write calibration json: " + path);
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "{\n  \"model\": \"%s\",\n  \"eta0\": %.17g,\n  \"R\": %.17g,\n"
                "  \"delta\": %.17g,\n  \"kappa\": %.17g,\n  \"T\": %.17g\n}\n",
                model.name().c_str(), cal.eta0, cal.R, cal.delta, cal.kappa, cal.T);
  f << buf;
}

} // namespace rank1
