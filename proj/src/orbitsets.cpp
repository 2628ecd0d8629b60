#include "rank1/orbitsets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "rank1/parallel.hpp"

namespace rank1 {

namespace {

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

std::vector<double> cum_trapezoid(const std::vector<double>& f, double dt) {
  std::vector<double> c(f.size(), 0.0);
  for (size_t i = 1; i < f.size(); ++i) c[i] = c[i - 1] + 0.5 * dt * (f[i - 1] + f[i]);
  return c;
}

double interp_cum(const std::vector<double>& c, double dt, double t) {
  if (c.empty()) return 0.0;
  double x = t / dt;
  if (x <= 0.0) return c.front();
  if (x >= double(c.size() - 1)) return c.back();
  int i = int(x);
  double f = x - i;
  return c[i] * (1.0 - f) + c[i + 1] * f;
}

} // namespace

double lambda_integral(const SurfaceModel& model, const UnitTangentVector& v, double t,
                       double dt) {
  LambdaTrack track = lambda_track(model, v, t, dt);
  return track.lambda_integral(0.0, t);
}

bool in_B_profile(const std::vector<double>& lam, double dt, double eta) {
  if (lam.size() < 2) return false; // the length-0 segment has average >= anything
  std::vector<double> c = cum_trapezoid(lam, dt);
  double T = dt * double(lam.size() - 1);
  return c.back() < eta * T;
}

bool in_G_profile(const std::vector<double>& lam, double dt, double eta) {
  size_t n = lam.size();
  if (n == 0) return false;
  std::vector<double> c = cum_trapezoid(lam, dt);
  double eps = 1e-12 * (1.0 + std::fabs(eta) * dt * double(n));
  for (size_t i = 0; i < n; ++i) {
    double tau = dt * double(i);
    if (c[i] < eta * tau - eps) return false;                       // from the start
    if (c[n - 1] - c[n - 1 - i] < eta * tau - eps) return false;    // back from the end
  }
  return true;
}

bool in_B(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta,
          double dt) {
  LambdaTrack track = lambda_track(model, v, t, dt);
  return in_B_profile(track.lam, track.dt, eta);
}

bool in_G(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta,
          double dt) {
  LambdaTrack track = lambda_track(model, v, t, dt);
  return in_G_profile(track.lam, track.dt, eta);
}

bool in_C(const SurfaceModel& model, const UnitTangentVector& v, double t, double eta) {
  LambdaResult a = lambda_at(model, v);
  if (a.lambda < eta) return false;
  LambdaResult b = lambda_at(model, model.flow(v, t).end);
  return b.lambda >= eta;
}

Decomposition decompose_profile(const std::vector<double>& lam, double dt, double eta) {
  Decomposition d;
  d.eta = eta;
  size_t n = lam.size();
  if (n < 2) return d;
  std::vector<double> c = cum_trapezoid(lam, dt);
  double T = dt * double(n - 1);
  d.t = T;

  // longest prefix with forward average below eta: scan phi(tau) =
  // integral - eta*tau from the top, refine the last sign change linearly
  // (the cumulative is piecewise linear, so the root is exact)
  auto phi_f = [&](size_t i) { return c[i] - eta * dt * double(i); };
  double p = 0.0;
  if (phi_f(n - 1) < 0.0) {
    p = T;
  } else {
    for (size_t i = n - 1; i-- > 0;) {
      if (phi_f(i) < 0.0) {
        double a = phi_f(i), b = phi_f(i + 1);
        p = dt * (double(i) + a / (a - b));
        break;
      }
    }
  }

  // longest suffix of the remainder, same scan on the reversed averages
  double rem = T - p;
  auto phi_b = [&](double sigma) { return (c[n - 1] - interp_cum(c, dt, T - sigma)) - eta * sigma; };
  double s = 0.0;
  size_t m = size_t(std::floor(rem / dt + 1e-12));
  if (phi_b(rem) < 0.0) {
    s = rem;
  } else {
    for (size_t j = m + 1; j-- > 1;) {
      double sig = std::min(dt * double(j), rem);
      double sig_lo = dt * double(j - 1);
      if (phi_b(sig_lo) < 0.0) {
        double a = phi_b(sig_lo), b = phi_b(sig);
        s = b >= 0.0 ? sig_lo + (sig - sig_lo) * a / (a - b) : sig;
        break;
      }
    }
  }

  d.p = p;
  d.s = s;
  d.g = T - p - s;

  // the core must pass the two-sided running-average check; maximality of p
  // and s forces this in exact arithmetic, so a failure here beyond
  // quadrature slack means the scan above is broken
  if (d.g > dt) {
    double maxlam = *std::max_element(lam.begin(), lam.end());
    double slack = dt * (eta + maxlam) + 1e-9;
    int gm = int(std::floor(d.g / dt));
    for (int j = 0; j <= gm; ++j) {
      double tau = dt * double(j);
      double fwd = interp_cum(c, dt, p + tau) - interp_cum(c, dt, p);
      double bwd = interp_cum(c, dt, p + d.g) - interp_cum(c, dt, p + d.g - tau);
      if (fwd < eta * tau - slack || bwd < eta * tau - slack)
        throw OrbitSetsError("decomposition core failed its average re-check");
    }
  }
  return d;
}

Decomposition decompose(const SurfaceModel& model, const UnitTangentVector& v, double t,
                        double eta, double dt) {
  LambdaTrack track = lambda_track(model, v, t, dt);
  return decompose_profile(track.lam, track.dt, eta);
}

SegmentRecord classify_segment(const SurfaceModel& model, const UnitTangentVector& v, double t,
                               double eta, double dt) {
  LambdaTrack track = lambda_track(model, v, t, dt);
  SegmentRecord rec;
  rec.model = model.name();
  rec.v = v;
  rec.t = t;
  rec.eta = eta;
  rec.lambda_int = track.lambda_integral(0.0, t);
  rec.lambda_start = track.lam.front();
  rec.lambda_end = track.lam.back();
  rec.tag_B = in_B_profile(track.lam, track.dt, eta);
  rec.tag_G = in_G_profile(track.lam, track.dt, eta);
  rec.tag_C = rec.lambda_start >= eta && rec.lambda_end >= eta;
  rec.dec = decompose_profile(track.lam, track.dt, eta);
  return rec;
}

void append_segment_records(const std::string& path, const std::vector<SegmentRecord>& recs) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw OrbitSetsError("cannot open segment store: " + path);
  for (const auto& r : recs) {
    nlohmann::json j;
    j["model"] = r.model;
    j["chart"] = r.v.chart;
    j["x"] = r.v.x;
    j["y"] = r.v.y;
    j["theta"] = r.v.theta;
    j["t"] = r.t;
    j["eta"] = r.eta;
    j["lambda_int"] = r.lambda_int;
    j["lambda_start"] = r.lambda_start;
    j["lambda_end"] = r.lambda_end;
    j["tags"] = nlohmann::json::object(
        {{"B", r.tag_B}, {"G", r.tag_G}, {"C", r.tag_C}});
    j["decomposition"] =
        nlohmann::json::object({{"p", r.dec.p}, {"g", r.dec.g}, {"s", r.dec.s}});
    f << j.dump() << "\n";
  }
}

std::vector<SegmentRecord> load_segment_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw OrbitSetsError("cannot read segment store: " + path);
  std::vector<SegmentRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw OrbitSetsError("segment store line " + std::to_string(lineno) + " is not JSON");
    SegmentRecord r;
    r.model = j.value("model", "");
    r.v.chart = j.value("chart", 0);
    r.v.x = j.value("x", 0.0);
    r.v.y = j.value("y", 0.0);
    r.v.theta = j.value("theta", 0.0);
    r.t = j.value("t", 0.0);
    r.eta = j.value("eta", 0.0);
    r.lambda_int = j.value("lambda_int", 0.0);
    r.lambda_start = j.value("lambda_start", 0.0);
    r.lambda_end = j.value("lambda_end", 0.0);
    if (j.contains("tags")) {
      r.tag_B = j["tags"].value("B", false);
      r.tag_G = j["tags"].value("G", false);
      r.tag_C = j["tags"].value("C", false);
    }
    if (j.contains("decomposition")) {
      r.dec.p = j["decomposition"].value("p", 0.0);
      r.dec.g = j["decomposition"].value("g", 0.0);
      r.dec.s = j["decomposition"].value("s", 0.0);
      r.dec.t = r.t;
      r.dec.eta = r.eta;
    }
    out.push_back(r);
  }
  return out;
}

// --- expanding-curve transition search ---------------------------------------

namespace {

struct CurvePt {
  UnitTangentVector at;
  bool alive = true;
};

// initial leaf arc [-r, r] sampled at `spacing`
std::vector<CurvePt> seed_curve(const SurfaceModel& model, const UnitTangentVector& base,
                                LeafSide side, double r, double spacing) {
  std::vector<CurvePt> neg, pos;
  for (int dir = -1; dir <= 1; dir += 2) {
    UnitTangentVector cur = base;
    double arc = 0.0;
    while (arc + 0.5 * spacing < r) {
      LeafAdvanceResult adv = leaf_advance(model, cur, side, dir * spacing, spacing);
      if (!adv.complete) break;
      cur = adv.v;
      arc += spacing;
      (dir < 0 ? neg : pos).push_back({cur, true});
    }
  }
  std::vector<CurvePt> out(neg.rbegin(), neg.rend());
  out.push_back({base, true});
  out.insert(out.end(), pos.begin(), pos.end());
  return out;
}

// flow every live sample by dt (sign gives the direction); dead samples keep
// their last state so the curve ordering stays intact
void advance_curve(const SurfaceModel& model, std::vector<CurvePt>& pts, double dt) {
  parallel_for(pts.size(), [&](size_t i) {
    if (!pts[i].alive) return;
    FlowResult fr = model.flow(pts[i].at, dt);
    pts[i].at = fr.end;
    if (fr.escaped) pts[i].alive = false; // left the tracked band, no meet out there
  });
}

// keep adjacent samples within max_gap by inserting chart-chord midpoints.
// At these gaps the leaf deviates from its chord by O(gap^2), far below the
// meet threshold, and the spurious transverse component decays under the flow.
void refine_curve(const SurfaceModel& model, std::vector<CurvePt>& pts, double max_gap,
                  size_t cap) {
  std::vector<CurvePt> out;
  out.reserve(pts.size() + pts.size() / 4);
  for (size_t i = 0; i < pts.size(); ++i) {
    if (i + 1 < pts.size() && pts[i].alive && pts[i + 1].alive) {
      out.push_back(pts[i]);
      double g = local_gap_norm(model, pts[i].at, pts[i + 1].at);
      if (g > max_gap && g < 1.0) { // a chord across a fold jump is meaningless
        int m = std::min(8, int(std::ceil(g / max_gap)));
        auto disp = model.chart_gap(pts[i].at, pts[i + 1].at);
        for (int k = 1; k < m; ++k) {
          double f = double(k) / m;
          UnitTangentVector mid{pts[i].at.x + f * disp[0], pts[i].at.y + f * disp[1],
                                pts[i].at.theta + f * disp[2], pts[i].at.chart};
          mid.theta = wrap_angle(mid.theta);
          model.fold(mid);
          out.push_back({mid, true});
        }
      }
    } else {
      out.push_back(pts[i]);
    }
  }
  if (out.size() > cap)
    throw OrbitSetsError("transition search exceeded its sample budget (" +
                         std::to_string(out.size()) + " curve points)");
  pts = std::move(out);
}

uint64_t cell_key(double x, double y, double th, double cell) {
  auto q = [&](double v) { return uint64_t(int64_t(std::floor(v / cell)) + (1 << 20)); };
  uint64_t h = 1469598103934665603ull;
  for (uint64_t part : {q(x), q(y), q(th)}) {
    h ^= part;
    h *= 1099511628211ull;
  }
  return h;
}

struct MeetCandidate {
  size_t iu = 0, is = 0;
  double gap = 0.0;
};

// hash the s-curve samples into delta-cells (octagon points also under their
// nearby deck translates so boundary pairs are seen), then probe every
// u-sample's neighborhood
std::vector<MeetCandidate> find_meets(const SurfaceModel& model,
                                      const std::vector<CurvePt>& ucurve,
                                      const std::vector<CurvePt>& scurve, double delta) {
  double cell = delta;
  std::unordered_multimap<uint64_t, size_t> grid;
  grid.reserve(scurve.size() * 2);
  const std::vector<Mobius>* translates = nullptr;
  if (model.is_octagon()) translates = &model.group().translates(3.2);
  for (size_t i = 0; i < scurve.size(); ++i) {
    if (!scurve[i].alive) continue;
    const auto& p = scurve[i].at;
    if (translates) {
      for (const Mobius& g : *translates) {
        cplx z = g.apply(cplx(p.x, p.y));
        double th = wrap_angle(p.theta + std::arg(g.deriv(cplx(p.x, p.y))));
        grid.emplace(cell_key(z.real(), z.imag(), th, cell), i);
      }
    } else {
      grid.emplace(cell_key(p.x, p.y, p.theta, cell), i);
      // cover the phi wrap seam
      if (p.y > M_PI - cell) grid.emplace(cell_key(p.x, p.y - 2.0 * M_PI, p.theta, cell), i);
      if (p.y < -M_PI + cell) grid.emplace(cell_key(p.x, p.y + 2.0 * M_PI, p.theta, cell), i);
    }
  }
  std::vector<MeetCandidate> cands;
  for (size_t iu = 0; iu < ucurve.size(); ++iu) {
    if (!ucurve[iu].alive) continue;
    const auto& p = ucurve[iu].at;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dt = -1; dt <= 1; ++dt) {
          uint64_t key =
              cell_key(p.x + dx * cell, p.y + dy * cell, p.theta + dt * cell, cell);
          auto range = grid.equal_range(key);
          for (auto it = range.first; it != range.second; ++it) {
            double g = local_gap_norm(model, p, scurve[it->second].at);
            if (g < 1.3 * delta) cands.push_back({iu, it->second, g});
          }
        }
  }
  std::sort(cands.begin(), cands.end(),
            [](const MeetCandidate& a, const MeetCandidate& b) { return a.gap < b.gap; });
  if (cands.size() > 8) cands.resize(8);
  return cands;
}

} // namespace

Transition find_transition(const SurfaceModel& model, const UnitTangentVector& from,
                           const UnitTangentVector& to, double r_u, double r_s, double delta,
                           double kappa, double tau_max,
                           std::optional<std::pair<double, double>> window) {
  const double spacing = 0.5 * delta;
  const size_t cap = 600000;
  std::vector<CurvePt> uc = seed_curve(model, from, LeafSide::Unstable, r_u, spacing);
  std::vector<CurvePt> sc = seed_curve(model, to, LeafSide::Stable, r_s, spacing);
  if (uc.size() < 3 || sc.size() < 3)
    throw OrbitSetsError("transition search: could not seed the leaf curves (near Sing?)");
  double tau_u = 0.0, tau_s = 0.0;
  const double dtau = 0.25;
  double lo = 0.0, hi = tau_max;
  if (window) {
    lo = std::max(0.0, window->first);
    hi = window->second;
  }
  double best_gap = kInf;
  while (tau_u + tau_s <= hi + dtau) {
    // grow the side that is behind; expansion keeps the sample count of the
    // two sides comparable, which is the cheapest way to cover pairs
    if (tau_u <= tau_s) {
      advance_curve(model, uc, dtau);
      tau_u += dtau;
      refine_curve(model, uc, spacing, cap);
    } else {
      advance_curve(model, sc, -dtau);
      tau_s += dtau;
      refine_curve(model, sc, spacing, cap);
    }
    if (tau_u + tau_s < lo - 0.75) continue;
    auto cands = find_meets(model, uc, sc, delta);
    for (const auto& cand : cands) {
      best_gap = std::min(best_gap, cand.gap);
      const UnitTangentVector& q = uc[cand.iu].at;
      const UnitTangentVector& m = sc[cand.is].at;
      double dk = model.knieper_distance(q, m);
      if (dk > 2.0 * delta) continue;
      LocalProductResult lp;
      try {
        lp = local_product(model, q, m, 3.0 * delta + dk, kappa);
      } catch (const FoliationError&) {
        continue;
      }
      Transition tr;
      tr.z = lp.point;
      tr.tau_u = tau_u;
      tr.tail_time = tau_s - lp.flow_shift;
      tr.total = tr.tau_u + tr.tail_time;
      tr.meet_gap = dk;
      tr.residual = lp.residual;
      if (tr.total < 0.0) continue;
      if (window && (tr.total < lo || tr.total > hi)) continue;
      return tr;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "no transition within time budget %.3g (closest approach %.4g vs target %.4g)",
                hi, best_gap, delta);
  throw OrbitSetsError(buf);
}

GluedOrbit shadow_segments(const SurfaceModel& model,
                           const std::vector<std::pair<UnitTangentVector, double>>& segments,
                           double rho, double kappa,
                           const std::vector<std::pair<double, double>>* windows,
                           double tau_max) {
  size_t k = segments.size();
  if (k == 0) throw OrbitSetsError("nothing to glue");
  GluedOrbit out;
  if (k == 1) {
    out.w = segments[0].first;
    out.offsets = {0.0};
    out.waypoints = {{0.0, segments[0].first}};
    out.verify_dt = {0.0};
    return out;
  }
  if (windows && windows->size() != k - 1)
    throw OrbitSetsError("need one transition window per gap");

  // reference segment: highest lambda-average among inputs of length >= 1;
  // every gap is bridged end -> reference -> next, which keeps each leaf
  // search anchored at a segment whose endpoints are comfortably regular
  int ref = -1;
  double best_avg = -kInf;
  for (size_t j = 0; j < k; ++j) {
    if (segments[j].second < 1.0) continue;
    double avg = lambda_integral(model, segments[j].first, segments[j].second) /
                 segments[j].second;
    if (avg > best_avg) {
      best_avg = avg;
      ref = int(j);
    }
  }
  if (ref < 0) throw OrbitSetsError("gluing needs a reference segment of length >= 1");
  const UnitTangentVector v0 = segments[ref].first;
  const double t0 = segments[ref].second;

  double r = std::min(0.3 * rho, 0.05);
  double delta = std::clamp(rho / (2.0 * kappa), 0.004, 0.05);

  UnitTangentVector E = model.flow(segments[0].first, segments[0].second).end;
  double L = segments[0].second;
  out.offsets.assign(k, 0.0);
  out.verify_dt.assign(k, 0.0);
  out.waypoints.assign(k, {0.0, UnitTangentVector{}});

  UnitTangentVector first_z;
  double first_back = 0.0;
  for (size_t j = 1; j < k; ++j) {
    Transition ta;
    try {
      ta = find_transition(model, E, v0, r, r, delta, kappa, tau_max);
    } catch (const OrbitSetsError& e) {
      throw OrbitSetsError("gluing step " + std::to_string(j) + " (into the reference): " +
                           e.what());
    }
    if (j == 1) {
      first_z = ta.z;
      first_back = ta.tau_u + segments[0].second;
    }
    UnitTangentVector mid_end = model.flow(ta.z, ta.tail_time + t0).end;
    double L_mid_end = L + ta.total + t0;

    std::optional<std::pair<double, double>> win;
    if (windows) {
      double lo = (*windows)[j - 1].first - t0 - ta.total;
      double hi = (*windows)[j - 1].second - t0 - ta.total;
      if (hi < 0.0)
        throw OrbitSetsError("transition window " + std::to_string(j - 1) +
                             " already exceeded before the second hop");
      win = std::make_pair(std::max(0.0, lo), hi);
    }
    Transition tb;
    try {
      tb = find_transition(model, mid_end, segments[j].first, r, r, delta, kappa, tau_max, win);
    } catch (const OrbitSetsError& e) {
      throw OrbitSetsError("gluing step " + std::to_string(j) + " (out of the reference): " +
                           e.what());
    }
    double transition = ta.total + t0 + tb.total;
    out.transitions.push_back(transition);
    out.max_transition = std::max(out.max_transition, transition);

    out.offsets[j] = L_mid_end + tb.total;
    UnitTangentVector land = model.flow(tb.z, tb.tail_time).end;
    out.waypoints[j] = {out.offsets[j], land};
    E = model.flow(land, segments[j].second).end;
    L = out.offsets[j] + segments[j].second;
  }

  out.w = model.flow(first_z, -first_back).end;
  out.waypoints[0] = {0.0, out.w};
  for (size_t j = 0; j < k; ++j) {
    out.verify_dt[j] = model.bowen_distance(out.waypoints[j].second, segments[j].first,
                                            segments[j].second);
    if (out.verify_dt[j] > rho) {
      char buf[120];
      std::snprintf(buf, sizeof buf, "glued orbit misses segment %zu: d_t %.4g > rho %.4g", j,
                    out.verify_dt[j], rho);
      throw OrbitSetsError(buf);
    }
  }
  return out;
}

// --- closing ------------------------------------------------------------------

namespace {

// dense pivoted solve, small systems only
bool solve_dense(std::vector<double>& A, std::vector<double>& b, int n) {
  for (int c = 0; c < n; ++c) {
    int piv = c;
    for (int r = c + 1; r < n; ++r)
      if (std::fabs(A[r * n + c]) > std::fabs(A[piv * n + c])) piv = r;
    if (std::fabs(A[piv * n + c]) < 1e-14) return false;
    if (piv != c) {
      for (int j = c; j < n; ++j) std::swap(A[piv * n + j], A[c * n + j]);
      std::swap(b[piv], b[c]);
    }
    for (int r = c + 1; r < n; ++r) {
      double f = A[r * n + c] / A[c * n + c];
      for (int j = c; j < n; ++j) A[r * n + j] -= f * A[c * n + j];
      b[r] -= f * b[c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j) s -= A[r * n + j] * b[j];
    b[r] = s / A[r * n + r];
  }
  return true;
}

struct Ring {
  std::vector<UnitTangentVector> c;
  double period = 0.0;
  int M() const { return int(c.size()); }
  double leg() const { return period / c.size(); }
};

// per-leg mismatch, 3 components per leg: displacement from checkpoint i+1 to
// the flowed image of checkpoint i
std::vector<double> ring_residual(const SurfaceModel& model, const Ring& ring) {
  int M = ring.M();
  std::vector<double> F(3 * M);
  std::vector<UnitTangentVector> img(M);
  parallel_for(M, [&](size_t i) { img[i] = model.flow(ring.c[i], ring.leg()).end; });
  for (int i = 0; i < M; ++i) {
    auto g = model.chart_gap(ring.c[(i + 1) % M], img[i]);
    F[3 * i] = g[0];
    F[3 * i + 1] = g[1];
    F[3 * i + 2] = g[2];
  }
  return F;
}

double ring_gap(const SurfaceModel& model, const Ring& ring) {
  double worst = 0.0;
  for (int i = 0; i < ring.M(); ++i) {
    UnitTangentVector img = model.flow(ring.c[i], ring.leg()).end;
    worst = std::max(worst, local_gap_norm(model, ring.c[(i + 1) % ring.M()], img));
  }
  return worst;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

} // namespace

ClosedOrbitCandidate close_orbit(const SurfaceModel& model, const UnitTangentVector& v, double t,
                                 double eps, double kappa, double residual_tol, double tau_max) {
  UnitTangentVector end = model.flow(v, t).end;
  double d_direct = model.knieper_distance(v, end);
  ClosedOrbitCandidate out;
  Ring ring;
  UnitTangentVector start = v;
  if (d_direct < 0.12) {
    ring.period = t;
    out.transition = 0.0;
  } else {
    double r = std::min(eps, 0.05);
    double delta = std::min(0.5 * eps, 0.03);
    Transition tr = find_transition(model, end, v, r, r, delta, kappa, tau_max);
    ring.period = t + tr.total;
    out.transition = tr.total;
    // restart the loop at the stable landing so checkpoint 0 sits near v
    start = model.flow(tr.z, tr.tail_time).end;
  }

  int M = std::max(2, int(std::ceil(ring.period / 2.5)));
  ring.c.resize(M);
  ring.c[0] = start;
  for (int i = 1; i < M; ++i) ring.c[i] = model.flow(ring.c[i - 1], ring.period / M).end;

  // damped Newton on the checkpoint ring plus the period, with one gauge row
  // pinning the flow-direction slide of checkpoint 0
  const int n = 3 * M + 1;
  std::vector<double> F = ring_residual(model, ring);
  double fn = norm2(F);
  int it = 0;
  for (; it < 40; ++it) {
    if (ring_gap(model, ring) < 0.5 * residual_tol) break;
    std::vector<double> J(n * n, 0.0);
    // columns for checkpoint coordinates
    for (int ci = 0; ci < M; ++ci) {
      for (int coord = 0; coord < 3; ++coord) {
        double h = 1e-7;
        Ring pert = ring;
        auto& p = pert.c[ci];
        if (coord == 0) p.x += h;
        if (coord == 1) p.y += h;
        if (coord == 2) p.theta += h;
        // legs touched: ci (flow source) and ci-1 (gap target)
        UnitTangentVector img = model.flow(p, ring.leg()).end;
        auto gf = model.chart_gap(ring.c[(ci + 1) % M], img);
        UnitTangentVector imgprev = model.flow(ring.c[(ci - 1 + M) % M], ring.leg()).end;
        auto gb = model.chart_gap(p, imgprev);
        int col = 3 * ci + coord;
        for (int r = 0; r < 3; ++r) {
          J[(3 * ci + r) * n + col] = (gf[r] - F[3 * ci + r]) / h;
          int prow = 3 * ((ci - 1 + M) % M) + r;
          J[prow * n + col] = (gb[r] - F[prow]) / h;
        }
      }
    }
    // period column
    {
      double h = 1e-7;
      Ring pert = ring;
      pert.period += h;
      std::vector<double> Fp = ring_residual(model, pert);
      for (int r = 0; r < 3 * M; ++r) J[r * n + (n - 1)] = (Fp[r] - F[r]) / h;
    }
    // gauge row: no sliding of checkpoint 0 along the flow
    {
      double h = 1e-4;
      UnitTangentVector fwd = model.flow(ring.c[0], h).end;
      auto dir = model.chart_gap(ring.c[0], fwd);
      double nrm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      int row = n - 1;
      J[row * n + 0] = dir[0] / nrm;
      J[row * n + 1] = dir[1] / nrm;
      J[row * n + 2] = dir[2] / nrm;
    }
    std::vector<double> rhs(n, 0.0);
    for (int r = 0; r < 3 * M; ++r) rhs[r] = -F[r];
    if (!solve_dense(J, rhs, n))
      throw OrbitSetsError("closing: singular correction system (flow-tangent ring?)");
    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 8; ++half, scale *= 0.5) {
      Ring trial = ring;
      for (int ci = 0; ci < M; ++ci) {
        trial.c[ci].x += scale * rhs[3 * ci];
        trial.c[ci].y += scale * rhs[3 * ci + 1];
        trial.c[ci].theta += scale * rhs[3 * ci + 2];
        model.fold(trial.c[ci]);
      }
      trial.period += scale * rhs[n - 1];
      if (trial.period <= 0.5 * ring.period) continue;
      std::vector<double> Ft = ring_residual(model, trial);
      double fnt = norm2(Ft);
      if (fnt < fn) {
        ring = trial;
        F = std::move(Ft);
        fn = fnt;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  out.iterations = it;

  double final_gap = ring_gap(model, ring);
  if (final_gap > residual_tol) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "closing stalled at residual %.3g (tolerance %.3g)",
                  final_gap, residual_tol);
    throw OrbitSetsError(buf);
  }
  // certified residual: worst per-leg return distance in the orbit metric
  double resid = 0.0;
  for (int i = 0; i < ring.M(); ++i) {
    UnitTangentVector img = model.flow(ring.c[i], ring.leg()).end;
    resid = std::max(resid, model.knieper_distance(ring.c[(i + 1) % ring.M()], img));
  }
  out.residual = resid;
  out.period = ring.period;
  out.checkpoints = ring.c;
  out.leg_time = ring.leg();

  // phase-align the reported point with the input segment start
  double best = kInf, best_off = 0.0;
  int best_i = 0;
  for (int i = 0; i < ring.M(); ++i) {
    for (double s = 0.0; s < ring.leg(); s += 0.1) {
      UnitTangentVector p = s == 0.0 ? ring.c[i] : model.flow(ring.c[i], s).end;
      double g = local_gap_norm(model, p, v);
      if (g < best) {
        best = g;
        best_i = i;
        best_off = s;
      }
    }
  }
  // golden refinement of the offset around the best coarse sample
  {
    double a = std::max(0.0, best_off - 0.1), b = best_off + 0.1;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    auto eval = [&](double s) {
      return local_gap_norm(model, model.flow(ring.c[best_i], s).end, v);
    };
    double f1 = eval(x1), f2 = eval(x2);
    for (int g = 0; g < 30; ++g) {
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
    best_off = 0.5 * (a + b);
  }
  out.w = model.flow(ring.c[best_i], best_off).end;
  out.shadow_dt = model.bowen_distance(v, out.w, t);
  return out;
}

} // namespace rank1
