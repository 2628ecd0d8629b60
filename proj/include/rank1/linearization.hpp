#pragma once
#include <functional>
#include <string>
#include <vector>

#include "rank1/surface.hpp"
#include "rank1/symmat.hpp"

namespace rank1 {

// Curvature operator along an orbit (or a synthetic recipe), sampled on a
// uniform grid and linearly interpolated in between. m = 1 for surfaces,
// m = 2 for the synthetic warped-product signals.
struct CurvatureSignal {
  int m = 1;
  double t0 = 0.0, dt = 0.01;
  std::vector<SymMat> k;

  double t_end() const { return t0 + dt * (double(k.size()) - 1.0); }
  SymMat at(double t) const;
  // the signal read backwards: value at s equals the original at -s
  CurvatureSignal time_reversed() const;
};

CurvatureSignal constant_signal(const SymMat& K, double t0, double t1, double dt);
// piecewise-constant-in-chunks smooth blend: values[i] holds on equal chunks,
// linear interpolation happens at the sample level
CurvatureSignal piecewise_signal(const std::vector<SymMat>& values, double t0, double t1,
                                 double dt);
// warped-product family: one flat direction and one with curvature -chi^2
CurvatureSignal heintze_signal(double chi, double t0, double t1, double dt);
// curvature of the model surface along the orbit of v (m = 1)
CurvatureSignal curvature_signal_along(const SurfaceModel& model, const UnitTangentVector& v,
                                       double t0, double t1, double dt);

void write_signal_csv(const std::string& path, const CurvatureSignal& sig);
CurvatureSignal load_signal_csv(const std::string& path);

// --- Jacobi fields ---
// J'' + K(t) J = 0 for vector J in R^m; state (J, J')
struct JacobiState {
  std::vector<double> j, jp; // each of size m
};
JacobiState jacobi_evolve(const CurvatureSignal& sig, const JacobiState& y0, double from,
                          double to, double step = 0.005);

// --- Riccati ---
// U' + U^2 + K(t) = 0 on symmetric m x m matrices. The flow preserves
// D = {0 <= U <= b I} when -b^2 <= K <= 0; solutions from far outside D can
// blow up in finite time, which is caught and reported.
struct RiccatiResult {
  SymMat u;
  bool blew_up = false;
  double blowup_time = 0.0;
};
RiccatiResult riccati_evolve(const CurvatureSignal& sig, const SymMat& u0, double from, double to,
                             double step = 0.005);

// limit of R_{-tau,end}(0) under tau-doubling; the unstable solution at the
// signal's end time. Non-convergence within the signal's span is the
// numerical signature of a singular (flat) past and is reported, not thrown.
struct UnstableResult {
  SymMat u;
  bool converged = false;
  double tau_used = 0.0;
  double delta = 0.0; // last doubling difference
};
UnstableResult unstable_limit(const CurvatureSignal& sig, double tol = 1e-8, double tau0 = 4.0,
                              double step = 0.005);

// unstable Riccati solution at v from the orbit's past
UnstableResult unstable_riccati_at(const SurfaceModel& model, const UnitTangentVector& v,
                                   double tau_max = 64.0, double tol = 1e-8,
                                   double step = 0.005);

// min unstable expansion rates: lambda_u from the past of v, lambda_s is
// lambda_u of the reversed vector, lambda = min of the two
struct LambdaResult {
  double lambda_u = 0.0, lambda_s = 0.0, lambda = 0.0;
  bool converged_u = false, converged_s = false;
  bool converged() const { return converged_u && converged_s; }
};
LambdaResult lambda_at(const SurfaceModel& model, const UnitTangentVector& v,
                       double tau_max = 64.0, double tol = 1e-8, double step = 0.005);

// geometric potential: negative trace of the unstable Riccati solution
double geometric_potential(const SurfaceModel& model, const UnitTangentVector& v,
                           double tau_max = 64.0, double tol = 1e-8);

// lambda_u, lambda_s, lambda and psi_u sampled along one orbit on a uniform
// grid over [0, T]. One forward and one backward Riccati pass over
// [-tau_pre, T + tau_pre]; the finite past/future makes the values
// conservative (never above the true limits).
struct LambdaTrack {
  double t0 = 0.0, dt = 0.0;
  std::vector<double> lam_u, lam_s, lam, psi_u;
  std::vector<double> cum_lam; // trapezoid cumulative integral of lam, cum[0]=0
  std::vector<double> cum_psi;
  bool escaped = false;
  int size() const { return int(lam.size()); }
  double time_of(int i) const { return t0 + i * dt; }
  // integral of lambda over [a, b] (linear interpolation of the cumulative)
  double lambda_integral(double a, double b) const;
  double psi_integral(double a, double b) const;
  double interp(const std::vector<double>& arr, double t) const;
};
LambdaTrack lambda_track(const SurfaceModel& model, const UnitTangentVector& v, double T,
                         double dt = 0.01, double tau_pre = 24.0, double step = 0.005);

// |tr U^u_v(t) - tr U^u_w(t)| sampled over [0, T] plus an exponential fit
// log d = log q - rate * t restricted to samples above the 1e-12 floor.
struct DecayFit {
  double rate = 0.0;       // +inf when collapsed
  double intercept = 0.0;  // q
  double residual = 0.0;   // rms of the log-linear fit
  bool collapsed = false;  // all samples at or below the floor
  std::vector<double> times;
  std::vector<double> values;
};
DecayFit bowen_discrepancy(const SurfaceModel& model, const UnitTangentVector& v,
                           const UnitTangentVector& w, double T, double dt = 0.1,
                           double tau_pre = 24.0);
DecayFit fit_exponential_decay(const std::vector<double>& times, const std::vector<double>& values,
                               double floor = 1e-12);

} // namespace rank1
