#include "rank1/linearization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rank1 {

SymMat CurvatureSignal::at(double t) const {
  if (k.empty()) throw std::runtime_error("empty curvature signal");
  if (k.size() == 1) return k[0];
  double x = (t - t0) / dt;
  if (x <= 0.0) return k.front();
  if (x >= double(k.size() - 1)) return k.back();
  int i = int(x);
  double f = x - i;
  return k[i] * (1.0 - f) + k[i + 1] * f;
}

CurvatureSignal CurvatureSignal::time_reversed() const {
  CurvatureSignal r;
  r.m = m;
  r.dt = dt;
  r.t0 = -t_end();
  r.k.assign(k.rbegin(), k.rend());
  return r;
}

CurvatureSignal constant_signal(const SymMat& K, double t0, double t1, double dt) {
  CurvatureSignal s;
  s.m = K.m;
  s.t0 = t0;
  s.dt = dt;
  int n = std::max(1, int(std::lround((t1 - t0) / dt)));
  s.k.assign(n + 1, K);
  return s;
}

CurvatureSignal piecewise_signal(const std::vector<SymMat>& values, double t0, double t1,
                                 double dt) {
  if (values.empty()) throw std::runtime_error("piecewise_signal: no values");
  CurvatureSignal s;
  s.m = values[0].m;
  s.t0 = t0;
  s.dt = dt;
  int n = std::max(1, int(std::lround((t1 - t0) / dt)));
  for (int i = 0; i <= n; ++i) {
    double f = double(i) / n;
    size_t idx = std::min(values.size() - 1, size_t(f * double(values.size())));
    s.k.push_back(values[idx]);
  }
  return s;
}

CurvatureSignal heintze_signal(double chi, double t0, double t1, double dt) {
  // center geodesic of the warped product: one flat direction, one direction
  // of curvature -chi^2
  return constant_signal(SymMat::diag(0.0, -chi * chi), t0, t1, dt);
}

CurvatureSignal curvature_signal_along(const SurfaceModel& model, const UnitTangentVector& v,
                                       double t0, double t1, double dt) {
  OrbitSamples orb = model.flow_samples(v, t0, t1, dt);
  CurvatureSignal s;
  s.m = 1;
  s.t0 = t0;
  s.dt = dt;
  s.k.reserve(orb.pts.size());
  for (const auto& p : orb.pts) s.k.push_back(SymMat::scalar(model.curvature(p.x, p.y)));
  return s;
}

void write_signal_csv(const std::string& path, const CurvatureSignal& sig) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write signal csv: " + path);
  f << (sig.m == 1 ? "t,k\n" : "t,k11,k12,k22\n");
  char line[160];
  for (size_t i = 0; i < sig.k.size(); ++i) {
    double t = sig.t0 + sig.dt * double(i);
    if (sig.m == 1)
      std::snprintf(line, sizeof line, "%.12g,%.17g\n", t, sig.k[i].a);
    else
      std::snprintf(line, sizeof line, "%.12g,%.17g,%.17g,%.17g\n", t, sig.k[i].a, sig.k[i].b,
                    sig.k[i].c);
    f << line;
  }
}

CurvatureSignal load_signal_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read signal csv: " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("signal csv empty: " + path);
  CurvatureSignal s;
  std::vector<double> ts;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(in, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() == 2) {
      s.m = 1;
      s.k.push_back(SymMat::scalar(row[1]));
    } else if (row.size() == 4) {
      s.m = 2;
      s.k.push_back(SymMat{2, row[1], row[2], row[3]});
    } else {
      throw std::runtime_error("signal csv: expected 2 or 4 columns");
    }
    ts.push_back(row[0]);
  }
  if (ts.size() < 2) throw std::runtime_error("signal csv: need at least 2 samples");
  s.t0 = ts.front();
  s.dt = (ts.back() - ts.front()) / double(ts.size() - 1);
  return s;
}

JacobiState jacobi_evolve(const CurvatureSignal& sig, const JacobiState& y0, double from,
                          double to, double step) {
  int m = sig.m;
  if (int(y0.j.size()) != m || int(y0.jp.size()) != m)
    throw std::runtime_error("jacobi_evolve: state dimension mismatch");
  auto deriv = [&](double t, const JacobiState& y, JacobiState& dy) {
    SymMat K = sig.at(t);
    dy.j = y.jp;
    dy.jp.resize(m);
    if (m == 1) {
      dy.jp[0] = -K.a * y.j[0];
    } else {
      dy.jp[0] = -(K.a * y.j[0] + K.b * y.j[1]);
      dy.jp[1] = -(K.b * y.j[0] + K.c * y.j[1]);
    }
  };
  double span = to - from;
  int n = std::max(1, int(std::ceil(std::fabs(span) / step)));
  double h = span / n;
  JacobiState y = y0;
  JacobiState k1, k2, k3, k4, tmp;
  auto axpy = [&](const JacobiState& a, const JacobiState& b, double f, JacobiState& out) {
    out.j.resize(m);
    out.jp.resize(m);
    for (int i = 0; i < m; ++i) {
      out.j[i] = a.j[i] + f * b.j[i];
      out.jp[i] = a.jp[i] + f * b.jp[i];
    }
  };
  double t = from;
  for (int i = 0; i < n; ++i) {
    deriv(t, y, k1);
    axpy(y, k1, h / 2, tmp);
    deriv(t + h / 2, tmp, k2);
    axpy(y, k2, h / 2, tmp);
    deriv(t + h / 2, tmp, k3);
    axpy(y, k3, h, tmp);
    deriv(t + h, tmp, k4);
    for (int q = 0; q < m; ++q) {
      y.j[q] += h / 6 * (k1.j[q] + 2 * k2.j[q] + 2 * k3.j[q] + k4.j[q]);
      y.jp[q] += h / 6 * (k1.jp[q] + 2 * k2.jp[q] + 2 * k3.jp[q] + k4.jp[q]);
    }
    t = from + (i + 1) * h;
  }
  return y;
}

namespace {

// dU/dt = -(U^2 + K(t)); symmetric part kept exactly symmetric by using
// the symmetrized square
SymMat riccati_rhs(const CurvatureSignal& sig, double t, const SymMat& u) {
  SymMat k = sig.at(t);
  return (u.square() + k) * -1.0;
}

// scalar branch in log coordinates, used when u has decayed to the lower
// boundary of the invariant domain: l = log u evolves by
// dl/dt = -u - K/u, which keeps u positive by construction and avoids
// sign flutter from roundoff at u ~ 0
double riccati_log_rhs(const CurvatureSignal& sig, double t, double l) {
  double u = std::exp(l);
  return -u - sig.at(t).a / u;
}

} // namespace

RiccatiResult riccati_evolve(const CurvatureSignal& sig, const SymMat& u0, double from, double to,
                             double step) {
  if (u0.m != sig.m) throw std::runtime_error("riccati_evolve: dimension mismatch");
  RiccatiResult res;
  res.u = u0;
  double span = to - from;
  if (span == 0.0) return res;
  int n = std::max(1, int(std::ceil(std::fabs(span) / step)));
  double h = span / n;
  const double cap = 1e9;
  const double log_enter = 1e-12; // switch threshold at the lower boundary
  const double log_exit = 1e-10;
  bool in_log = false;
  double l = 0.0;
  SymMat u = u0;
  for (int i = 0; i < n; ++i) {
    double t = from + i * h;
    if (sig.m == 1 && !in_log && h > 0 && u.a > 0.0 && u.a < log_enter) {
      in_log = true;
      l = std::log(u.a);
    }
    if (in_log) {
      double k1 = riccati_log_rhs(sig, t, l);
      double k2 = riccati_log_rhs(sig, t + h / 2, l + h / 2 * k1);
      double k3 = riccati_log_rhs(sig, t + h / 2, l + h / 2 * k2);
      double k4 = riccati_log_rhs(sig, t + h, l + h * k3);
      l += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      u = SymMat::scalar(std::exp(l));
      if (u.a > log_exit) in_log = false;
      continue;
    }
    SymMat k1 = riccati_rhs(sig, t, u);
    SymMat k2 = riccati_rhs(sig, t + h / 2, u + k1 * (h / 2));
    SymMat k3 = riccati_rhs(sig, t + h / 2, u + k2 * (h / 2));
    SymMat k4 = riccati_rhs(sig, t + h, u + k3 * h);
    u = u + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    // symmetrization is implicit in SymMat; guard against blow-up
    if (!(u.norm() < cap) || std::isnan(u.norm())) {
      res.blew_up = true;
      res.blowup_time = t + h;
      res.u = u;
      return res;
    }
  }
  res.u = u;
  return res;
}

UnstableResult unstable_limit(const CurvatureSignal& sig, double tol, double tau0, double step) {
  UnstableResult out;
  double end = sig.t_end();
  double span = end - sig.t0;
  double tau = tau0;
  bool have_prev = false;
  SymMat prev = SymMat::zero(sig.m);
  for (;;) {
    double start = end - std::min(tau, span);
    RiccatiResult r = riccati_evolve(sig, SymMat::zero(sig.m), start, end, step);
    if (r.blew_up) { // cannot happen for admissible signals; report honestly
      out.converged = false;
      out.u = r.u;
      out.tau_used = tau;
      return out;
    }
    if (have_prev) {
      out.delta = (r.u - prev).norm();
      if (out.delta <= tol) {
        out.converged = true;
        out.u = r.u;
        out.tau_used = std::min(tau, span);
        return out;
      }
    }
    prev = r.u;
    have_prev = true;
    if (tau >= span) { // exhausted the recorded past without converging
      out.converged = false;
      out.u = r.u;
      out.tau_used = span;
      return out;
    }
    tau *= 2.0;
  }
}

UnstableResult unstable_riccati_at(const SurfaceModel& model, const UnitTangentVector& v,
                                   double tau_max, double tol, double step) {
  CurvatureSignal past = curvature_signal_along(model, v, -tau_max, 0.0, 0.01);
  return unstable_limit(past, tol, 4.0, step);
}

LambdaResult lambda_at(const SurfaceModel& model, const UnitTangentVector& v, double tau_max,
                       double tol, double step) {
  LambdaResult out;
  UnstableResult uu = unstable_riccati_at(model, v, tau_max, tol, step);
  UnstableResult us = unstable_riccati_at(model, reversed(v), tau_max, tol, step);
  out.lambda_u = uu.u.min_eig();
  out.lambda_s = us.u.min_eig();
  out.converged_u = uu.converged;
  out.converged_s = us.converged;
  out.lambda = std::min(out.lambda_u, out.lambda_s);
  return out;
}

double geometric_potential(const SurfaceModel& model, const UnitTangentVector& v, double tau_max,
                           double tol) {
  UnstableResult uu = unstable_riccati_at(model, v, tau_max, tol);
  return -uu.u.trace();
}

double LambdaTrack::interp(const std::vector<double>& arr, double t) const {
  double x = (t - t0) / dt;
  if (x <= 0.0) return arr.front();
  if (x >= double(arr.size() - 1)) return arr.back();
  int i = int(x);
  double f = x - i;
  return arr[i] * (1.0 - f) + arr[i + 1] * f;
}

double LambdaTrack::lambda_integral(double a, double b) const {
  return interp(cum_lam, b) - interp(cum_lam, a);
}

double LambdaTrack::psi_integral(double a, double b) const {
  return interp(cum_psi, b) - interp(cum_psi, a);
}

LambdaTrack lambda_track(const SurfaceModel& model, const UnitTangentVector& v, double T,
                         double dt, double tau_pre, double step) {
  LambdaTrack track;
  track.t0 = 0.0;
  track.dt = dt;
  OrbitSamples orb = model.flow_samples(v, -tau_pre, T + tau_pre, dt);
  track.escaped = orb.escaped;
  CurvatureSignal sig;
  sig.m = 1;
  sig.t0 = -tau_pre;
  sig.dt = dt;
  sig.k.reserve(orb.pts.size());
  for (const auto& p : orb.pts) sig.k.push_back(SymMat::scalar(model.curvature(p.x, p.y)));
  // forward pass: U^u approximated by the solution grown from 0 at -tau_pre
  {
    SymMat u = SymMat::zero(sig.m);
    int keep = int(std::lround(T / dt));
    RiccatiResult r = riccati_evolve(sig, u, -tau_pre, 0.0, step);
    u = r.u;
    track.lam_u.push_back(u.min_eig());
    track.psi_u.push_back(-u.trace());
    for (int i = 1; i <= keep; ++i) {
      r = riccati_evolve(sig, u, (i - 1) * dt, i * dt, step);
      u = r.u;
      track.lam_u.push_back(u.min_eig());
      track.psi_u.push_back(-u.trace());
    }
  }
  // backward pass: the stable solution S satisfies dS/dsigma = -S^2 - K(-sigma)
  // in reversed time; grow it from 0 at T + tau_pre and record on [0, T]
  {
    CurvatureSignal rev = sig.time_reversed();
    // reversed signal lives on [-(T+tau_pre), tau_pre]; position of orbit
    // time t is reversed time -t
    SymMat s = SymMat::zero(sig.m);
    int keep = int(std::lround(T / dt));
    RiccatiResult r = riccati_evolve(rev, s, -(T + tau_pre), -T, step);
    s = r.u;
    std::vector<double> lam_s_rev;
    lam_s_rev.push_back(s.min_eig());
    for (int i = 1; i <= keep; ++i) {
      r = riccati_evolve(rev, s, -T + (i - 1) * dt, -T + i * dt, step);
      s = r.u;
      lam_s_rev.push_back(s.min_eig());
    }
    // reversed-time index i corresponds to orbit time T - i*dt
    track.lam_s.assign(lam_s_rev.rbegin(), lam_s_rev.rend());
  }
  int n = int(track.lam_u.size());
  track.lam.resize(n);
  for (int i = 0; i < n; ++i) track.lam[i] = std::min(track.lam_u[i], track.lam_s[i]);
  track.cum_lam.assign(n, 0.0);
  track.cum_psi.assign(n, 0.0);
  for (int i = 1; i < n; ++i) {
    track.cum_lam[i] = track.cum_lam[i - 1] + 0.5 * dt * (track.lam[i - 1] + track.lam[i]);
    track.cum_psi[i] = track.cum_psi[i - 1] + 0.5 * dt * (track.psi_u[i - 1] + track.psi_u[i]);
  }
  return track;
}

DecayFit fit_exponential_decay(const std::vector<double>& times, const std::vector<double>& values,
                               double floor) {
  DecayFit fit;
  fit.times = times;
  fit.values = values;
  std::vector<double> xs, ys;
  for (size_t i = 0; i < values.size(); ++i)
    if (values[i] > floor) {
      xs.push_back(times[i]);
      ys.push_back(std::log(values[i]));
    }
  if (xs.size() < 2) {
    fit.collapsed = true;
    fit.rate = kInf;
    return fit;
  }
  double n = double(xs.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::fabs(denom) < 1e-30) {
    fit.collapsed = true;
    fit.rate = kInf;
    return fit;
  }
  double slope = (n * sxy - sx * sy) / denom;
  double icept = (sy - slope * sx) / n;
  fit.rate = -slope;
  fit.intercept = std::exp(icept);
  double ss = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (icept + slope * xs[i]);
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

DecayFit bowen_discrepancy(const SurfaceModel& model, const UnitTangentVector& v,
                           const UnitTangentVector& w, double T, double dt, double tau_pre) {
  LambdaTrack tv = lambda_track(model, v, T, dt, tau_pre);
  LambdaTrack tw = lambda_track(model, w, T, dt, tau_pre);
  std::vector<double> times, vals;
  for (int i = 0; i < tv.size(); ++i) {
    times.push_back(tv.time_of(i));
    // psi_u = -trace, so the trace gap is the psi gap
    vals.push_back(std::fabs(tv.psi_u[i] - tw.psi_u[i]));
  }
  return fit_exponential_decay(times, vals);
}

} // namespace rank1
