#include "rank1/potential.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "rank1/linearization.hpp"

namespace rank1 {

namespace {

double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

} // namespace

double SampledField::at(const SurfaceModel& model, const UnitTangentVector& v) const {
  UnitTangentVector p = v;
  model.fold(p);
  double fx = (p.x - x0) / (x1 - x0) * (nx - 1);
  double fy = (p.y - y0) / (y1 - y0) * (ny - 1);
  double ft = (wrap_pi(p.theta) + M_PI) / (2.0 * M_PI) * nth; // periodic
  fx = std::clamp(fx, 0.0, double(nx - 1));
  fy = std::clamp(fy, 0.0, double(ny - 1));
  int ix = std::min(int(fx), nx - 2);
  int iy = std::min(int(fy), ny - 2);
  int it = int(ft) % nth;
  double ax = fx - ix, ay = fy - iy, at = ft - int(ft);
  auto val = [&](int i, int j, int k) {
    return double(vals[size_t((i * ny + j) * nth + (k % nth))]);
  };
  double out = 0.0;
  for (int di = 0; di < 2; ++di)
    for (int dj = 0; dj < 2; ++dj)
      for (int dk = 0; dk < 2; ++dk) {
        double w = (di ? ax : 1.0 - ax) * (dj ? ay : 1.0 - ay) * (dk ? at : 1.0 - at);
        out += w * val(ix + di, iy + dj, it + dk);
      }
  return out;
}

SampledField holder_bump_field(const SurfaceModel& model, double amp, double alpha, double cx,
                               double cy, double cth, double rad, int nx, int ny, int nth) {
  SampledField f;
  f.nx = nx;
  f.ny = ny;
  f.nth = nth;
  f.holder_exponent = alpha;
  f.label = "bump";
  if (model.is_octagon()) {
    double R = 0.85; // chart box covering the fundamental domain
    f.x0 = -R;
    f.x1 = R;
    f.y0 = -R;
    f.y1 = R;
  } else {
    f.x0 = -model.height_window;
    f.x1 = model.height_window;
    f.y0 = -M_PI;
    f.y1 = M_PI;
  }
  f.vals.resize(size_t(nx) * ny * nth);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      for (int k = 0; k < nth; ++k) {
        double x = f.x0 + (f.x1 - f.x0) * i / (nx - 1);
        double y = f.y0 + (f.y1 - f.y0) * j / (ny - 1);
        double th = -M_PI + 2.0 * M_PI * k / nth;
        double d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy) +
                             wrap_pi(th - cth) * wrap_pi(th - cth));
        double s = std::max(0.0, 1.0 - d / rad);
        f.vals[size_t((i * ny + j) * nth + k)] = float(amp * std::pow(s, alpha));
      }
  return f;
}

Potential Potential::zero() { return Potential(); }

Potential Potential::constant(double c) {
  Potential p;
  p.kind_ = Kind::Constant;
  p.c_ = c;
  p.desc_ = "const(" + fmt(c) + ")";
  return p;
}

Potential Potential::q_phi_u(double q) {
  Potential p;
  p.kind_ = Kind::QPhiU;
  p.c_ = q;
  p.desc_ = fmt(q) + "*phi_u";
  return p;
}

Potential Potential::sampled(SampledField f) {
  Potential p;
  p.kind_ = Kind::Sampled;
  p.desc_ = "field(" + f.label + ",alpha=" + fmt(f.holder_exponent) + ")";
  p.field_ = std::make_shared<SampledField>(std::move(f));
  return p;
}

Potential Potential::combination(std::vector<std::pair<double, Potential>> terms) {
  Potential p;
  p.kind_ = Kind::LinComb;
  p.desc_ = "lin(";
  for (size_t i = 0; i < terms.size(); ++i) {
    if (i) p.desc_ += "+";
    p.desc_ += fmt(terms[i].first) + "*" + terms[i].second.describe();
  }
  p.desc_ += ")";
  p.terms_ = std::move(terms);
  return p;
}

Potential Potential::ergodic_average(Potential base, double T) {
  if (!(T > 0.0)) throw PotentialError("ergodic average needs a positive window");
  if (base.kind_ == Kind::Constant || base.kind_ == Kind::Zero) return base;
  Potential p;
  p.kind_ = Kind::ErgodicAvg;
  p.avg_T_ = T;
  p.desc_ = "avg_T" + fmt(T) + "(" + base.describe() + ")";
  p.base_ = std::make_shared<Potential>(std::move(base));
  return p;
}

const Potential& Potential::base() const {
  if (!base_) throw PotentialError("not an ergodic average");
  return *base_;
}

const SampledField& Potential::field() const {
  if (!field_) throw PotentialError("not a sampled field");
  return *field_;
}

const std::vector<std::pair<double, Potential>>& Potential::terms() const { return terms_; }

double Potential::phi_u_coeff() const {
  switch (kind_) {
    case Kind::QPhiU: return c_;
    case Kind::LinComb: {
      double q = 0.0;
      for (const auto& [w, p] : terms_) q += w * p.phi_u_coeff();
      return q;
    }
    default: return 0.0;
  }
}

double Potential::constant_part() const {
  switch (kind_) {
    case Kind::Constant: return c_;
    case Kind::LinComb: {
      double c = 0.0;
      for (const auto& [w, p] : terms_) c += w * p.constant_part();
      return c;
    }
    default: return 0.0;
  }
}

bool Potential::has_general_part() const {
  switch (kind_) {
    case Kind::Sampled:
    case Kind::ErgodicAvg: return true;
    case Kind::LinComb:
      for (const auto& [w, p] : terms_) {
        (void)w;
        if (p.has_general_part()) return true;
      }
      return false;
    default: return false;
  }
}

namespace {

// leaves of the flattened combination that need quadrature
void collect_general(const Potential& pot, double w,
                     std::vector<std::pair<double, const Potential*>>& out) {
  switch (pot.kind()) {
    case Potential::Kind::Sampled:
    case Potential::Kind::ErgodicAvg: out.emplace_back(w, &pot); break;
    case Potential::Kind::LinComb:
      for (const auto& [wi, p] : pot.terms()) collect_general(p, w * wi, out);
      break;
    default: break;
  }
}

// pointwise values of pot along precomputed orbit samples; a track covering
// the sample span supplies the expansion potential so no per-sample Riccati
// runs are needed. Deeper nesting (an average of an average) falls back to
// direct evaluation.
std::vector<double> orbit_values(const SurfaceModel& model, const Potential& pot,
                                 const OrbitSamples& smp, const LambdaTrack* track) {
  std::vector<double> vals(smp.pts.size(), 0.0);
  double c = pot.constant_part();
  double q = pot.phi_u_coeff();
  std::vector<std::pair<double, const Potential*>> gens;
  collect_general(pot, 1.0, gens);
  for (size_t i = 0; i < vals.size(); ++i) {
    double s = smp.t0 + double(i) * smp.dt;
    double v = c;
    if (q != 0.0) {
      if (!track) throw PotentialError("expansion term without a prepared track");
      v += q * track->interp(track->psi_u, s);
    }
    for (const auto& [w, p] : gens) {
      if (p->kind() == Potential::Kind::Sampled)
        v += w * p->field().at(model, smp.pts[i]);
      else
        v += w * p->eval(model, smp.pts[i]);
    }
    vals[i] = v;
  }
  return vals;
}

} // namespace

double Potential::eval(const SurfaceModel& model, const UnitTangentVector& v) const {
  switch (kind_) {
    case Kind::Zero: return 0.0;
    case Kind::Constant: return c_;
    case Kind::QPhiU: return c_ * geometric_potential(model, v);
    case Kind::Sampled: return field_->at(model, v);
    case Kind::LinComb: {
      double s = 0.0;
      for (const auto& [w, p] : terms_) s += w * p.eval(model, v);
      return s;
    }
    case Kind::ErgodicAvg: return base_->birkhoff(model, v, avg_T_, 0.02) / avg_T_;
  }
  return 0.0;
}

double Potential::birkhoff(const SurfaceModel& model, const UnitTangentVector& v, double t,
                           double dt) const {
  if (t <= 0.0) return 0.0;
  double c_tot = constant_part();
  double q_tot = phi_u_coeff();
  std::vector<std::pair<double, const Potential*>> gens;
  collect_general(*this, 1.0, gens);

  double max_T = 0.0;
  bool gens_need_track = false;
  for (const auto& [w, p] : gens) {
    (void)w;
    if (p->kind() == Kind::ErgodicAvg) {
      max_T = std::max(max_T, p->avg_window());
      if (p->base().phi_u_coeff() != 0.0) gens_need_track = true;
    }
  }

  double res = c_tot * t;
  LambdaTrack track;
  bool have_track = false;
  if (q_tot != 0.0 || gens_need_track) {
    track = lambda_track(model, v, t + max_T, std::max(dt, 0.02), 12.0, 0.01);
    have_track = true;
  }
  if (q_tot != 0.0) res += q_tot * track.psi_integral(0.0, t);

  if (!gens.empty()) {
    OrbitSamples smp = model.flow_samples(v, 0.0, t + max_T, dt);
    for (const auto& [w, p] : gens) {
      if (p->kind() == Kind::Sampled) {
        // trapezoid over [0, t]
        size_t n = std::min(smp.pts.size(), size_t(std::llround(t / dt)) + 1);
        double acc = 0.0;
        double prev = p->field().at(model, smp.pts[0]);
        for (size_t i = 1; i < n; ++i) {
          double cur = p->field().at(model, smp.pts[i]);
          acc += 0.5 * dt * (prev + cur);
          prev = cur;
        }
        res += w * acc;
      } else { // ErgodicAvg: one pass over the base, then a window average
        double T = p->avg_window();
        std::vector<double> bvals =
            orbit_values(model, p->base(), smp, have_track ? &track : nullptr);
        std::vector<double> G(bvals.size(), 0.0);
        for (size_t i = 1; i < bvals.size(); ++i)
          G[i] = G[i - 1] + 0.5 * dt * (bvals[i - 1] + bvals[i]);
        auto Gat = [&](double s) {
          double x = s / dt;
          if (x <= 0.0) return G.front();
          if (x >= double(G.size() - 1)) return G.back();
          int i = int(x);
          return G[i] * (1.0 - (x - i)) + G[i + 1] * (x - i);
        };
        // (1/T) int_0^T (G(s+t) - G(s)) ds, trapezoid in s
        int m = std::max(1, int(std::llround(T / dt)));
        double acc = 0.0;
        for (int i = 0; i <= m; ++i) {
          double s = T * double(i) / m;
          double f = Gat(s + t) - Gat(s);
          acc += (i == 0 || i == m) ? 0.5 * f : f;
        }
        res += w * (acc * (T / m) / T);
      }
    }
  }
  return res;
}

} // namespace rank1
