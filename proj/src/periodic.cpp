#include "rank1/periodic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <unordered_set>
#include <sstream>

#include <json.hpp>

#include "rank1/geometry.hpp"
#include "rank1/linearization.hpp"
#include "rank1/orbitsets.hpp"
#include "rank1/parallel.hpp"

namespace rank1 {

namespace {

int inverse_letter(int a) { return (a + 4) & 7; }

// free reduction followed by cyclic reduction
std::string reduce_word(const std::string& w) {
  std::string r;
  for (char ch : w) {
    if (ch < '0' || ch > '7') throw PeriodicError("word letters must be in 0..7");
    if (!r.empty() && inverse_letter(r.back() - '0') == ch - '0')
      r.pop_back();
    else
      r.push_back(ch);
  }
  while (r.size() >= 2 && inverse_letter(r.front() - '0') == r.back() - '0') {
    r.erase(r.begin());
    r.pop_back();
  }
  return r;
}

std::string inverse_word(const std::string& w) {
  std::string r(w.rbegin(), w.rend());
  for (char& ch : r) ch = char('0' + inverse_letter(ch - '0'));
  return r;
}

std::string min_rotation(std::string w) {
  std::string best = w;
  for (size_t i = 1; i < w.size(); ++i) {
    std::rotate(w.begin(), w.begin() + 1, w.end());
    if (w < best) best = w;
  }
  return best;
}

}  // namespace

std::string canonical_word_key(const std::string& word) {
  std::string r = reduce_word(word);
  if (r.empty()) return r;
  return std::min(min_rotation(r), min_rotation(inverse_word(r)));
}

bool primitive_word(const std::string& word) {
  std::string r = reduce_word(word);
  size_t n = r.size();
  if (n == 0) return false;
  for (size_t d = 1; 2 * d <= n; ++d) {
    if (n % d != 0) continue;
    bool periodic = true;
    for (size_t i = d; i < n && periodic; ++i) periodic = (r[i] == r[i - d]);
    if (periodic) return false;
  }
  return true;
}

double word_length_on(const SurfaceModel& model, const std::string& word) {
  std::string r = reduce_word(word);
  if (r.empty()) return 0.0;
  const OctagonGroup& G = model.group();
  Mobius g = Mobius::identity();
  for (char ch : r) g = g.compose(G.gen(ch - '0'));
  if (!g.is_hyperbolic()) throw PeriodicError("word " + word + " is not hyperbolic");
  return g.translation_length();
}

namespace {

struct WordCandidate {
  std::string word;  // first representative encountered
  std::string key;   // canonical conjugacy key
  Mobius g;
  double len = 0.0;  // translation length in the unperturbed metric
};

// circumradius of the fundamental octagon (center-to-vertex)
const double kCircum = std::acosh(3.0 + 2.0 * std::sqrt(2.0));

// how far g moves the origin: d(0, g 0) = 2 asinh |b|
double origin_displacement(const Mobius& g) { return 2.0 * std::asinh(std::abs(g.b)); }

// the two matrix lifts +-g act identically; fix one sign for deduplication
void normalize_sign(Mobius& g) {
  double re = g.a.real(), im = g.a.imag();
  bool flip = re < 0.0 || (re == 0.0 && (im < 0.0 || (im == 0.0 && g.b.real() < 0.0)));
  if (flip) {
    g.a = -g.a;
    g.b = -g.b;
  }
}

// quantized matrix entries; distinct elements of a ball this small stay far
// apart compared to the grid, and path-to-path roundoff stays far below it
struct QKey {
  long long q[4];
  bool operator==(const QKey& o) const {
    return q[0] == o.q[0] && q[1] == o.q[1] && q[2] == o.q[2] && q[3] == o.q[3];
  }
};
struct QKeyHash {
  size_t operator()(const QKey& k) const {
    uint64_t h = 1469598103934665603ull;
    for (long long v : k.q) {
      h ^= uint64_t(v);
      h *= 1099511628211ull;
    }
    return size_t(h);
  }
};
QKey element_key(const Mobius& g) {
  auto q = [](double x) { return std::llround(x * 1e6); };
  return QKey{{q(g.a.real()), q(g.a.imag()), q(g.b.real()), q(g.b.imag())}};
}

// Breadth-first walk of the group ball around the identity, one node per
// group element (free words alias under the octagon's vertex relation, so
// dedup must happen at the matrix level, not the word level). Every class
// with translation length <= keep_below has a representative whose axis
// crosses the fundamental domain; that element displaces the origin by at
// most keep_below + 2*circumradius, and its side-pairing word follows the
// tiles along the segment [0, g 0], so prefixes stay one circumradius
// further out. Walking the ball of that slightly larger radius therefore
// reaches every class.
std::vector<WordCandidate> enumerate_ball(const OctagonGroup& G, double keep_below,
                                          size_t& tried) {
  double reach = keep_below + 2.0 * kCircum + 0.1;
  double explore = reach + kCircum + 0.1;
  double b_cap = std::sinh(0.5 * explore);

  struct Node {
    Mobius g;
    int parent = -1;
    char letter = 0;
  };
  std::vector<Node> ball;
  std::unordered_set<QKey, QKeyHash> seen_elems;
  ball.push_back({Mobius{}, -1, 0});
  seen_elems.insert(element_key(ball[0].g));

  std::vector<WordCandidate> out;
  std::set<std::string> seen_classes;
  for (size_t head = 0; head < ball.size(); ++head) {
    Mobius cur = ball[head].g;  // copy; push_back below invalidates references
    for (int k = 0; k < 8; ++k) {
      Mobius h = cur.compose(G.gen(k));
      normalize_sign(h);
      if (std::abs(h.b) > b_cap) continue;
      ++tried;
      if (!seen_elems.insert(element_key(h)).second) continue;
      ball.push_back({h, int(head), char('0' + k)});
      if (!h.is_hyperbolic()) continue;
      double len = h.translation_length();
      if (len > keep_below || origin_displacement(h) > reach) continue;
      std::string w;
      for (int at = int(ball.size()) - 1; at > 0; at = ball[at].parent) w += ball[at].letter;
      std::reverse(w.begin(), w.end());
      std::string key = canonical_word_key(w);
      if (seen_classes.insert(key).second) out.push_back({w, key, h, len});
    }
  }
  return out;
}

UnitTangentVector axis_rep(const SurfaceModel& model, const Mobius& g) {
  cplx attracting, repelling;
  g.axis_endpoints(attracting, repelling);
  cplx pt;
  double ang;
  disk_axis_closest_point(repelling, attracting, pt, ang);
  UnitTangentVector v;
  v.x = pt.real();
  v.y = pt.imag();
  v.theta = ang;
  v.chart = 0;
  model.fold(v);
  return v;
}

// folded samples along the unperturbed axis, for the geometric fingerprint
std::vector<UnitTangentVector> axis_prints(const SurfaceModel& model, const Mobius& g,
                                           double len) {
  cplx attracting, repelling;
  g.axis_endpoints(attracting, repelling);
  cplx pt;
  double ang;
  disk_axis_closest_point(repelling, attracting, pt, ang);
  std::vector<UnitTangentVector> out;
  double dt = 0.01;
  int n = std::max(2, int(std::lround(len / dt)));
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    double t = i * dt;
    cplx z = disk_geodesic(pt, ang, t);
    UnitTangentVector v;
    v.x = z.real();
    v.y = z.imag();
    v.theta = disk_geodesic_angle(pt, ang, t);
    v.chart = 0;
    model.fold(v);
    out.push_back(v);
  }
  return out;
}

bool near_some_print(const SurfaceModel& model, const std::vector<UnitTangentVector>& prints,
                     const UnitTangentVector& v) {
  // the rep of a duplicate lies ON the kept orbit, so its gap to the nearest
  // print is bounded by the print spacing; distinct orbits of equal length
  // still cross at points, but there the direction differs by a quarter turn
  // or so, far above this threshold
  double tol = 0.02;
  UnitTangentVector rv = reversed(v);
  model.fold(rv);
  for (const auto& p : prints) {
    auto g1 = model.chart_gap(p, v);
    if (std::max({std::fabs(g1[0]), std::fabs(g1[1]), std::fabs(g1[2])}) < tol) return true;
    auto g2 = model.chart_gap(p, rv);
    if (std::max({std::fabs(g2[0]), std::fabs(g2[1]), std::fabs(g2[2])}) < tol) return true;
  }
  return false;
}

double min_lambda_on_orbit(const SurfaceModel& model, const UnitTangentVector& v, double period,
                           bool* escaped) {
  LambdaTrack lt = lambda_track(model, v, period, 0.02, 12.0, 0.005);
  if (escaped) *escaped = lt.escaped;
  double m = kInf;
  for (double l : lt.lam) m = std::min(m, l);
  return std::isfinite(m) ? m : 0.0;
}

GeodesicEnumeration enumerate_cylinder(const SurfaceModel& model, double L_max,
                                       double reg_threshold) {
  GeodesicEnumeration en;
  en.L_max = L_max;
  // the only closed geodesics are the band circles: outside the band the
  // radius grows strictly, so a Clairaut constant below the funnel radius
  // never turns the orbit around
  double a = model.cyl_radius;
  double w = model.cyl_half_width;
  double period = 2.0 * M_PI * a;
  if (period > L_max) return en;
  // the circles form a continuum; store a small representative family
  std::vector<double> heights = {-w, -0.5 * w, 0.0, 0.5 * w, w};
  for (double s : heights) {
    UnitTangentVector v;
    v.x = s;
    v.y = 0.0;
    v.theta = 0.5 * M_PI;
    v.chart = 0;
    model.fold(v);
    FlowResult fr = model.flow(v, period);
    ClosedGeodesic g;
    g.rep = v;
    g.length = period;
    g.residual = model.knieper_distance(v, fr.end);
    g.prime = true;
    bool esc = false;
    g.min_lambda = min_lambda_on_orbit(model, v, period, &esc);
    g.regular = !esc && g.min_lambda >= reg_threshold;
    g.word = "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "core-circle:s=%+.6f", s);
    g.conj_key = buf;
    en.orbits.push_back(g);
  }
  return en;
}

}  // namespace

GeodesicEnumeration enumerate_closed_geodesics(const SurfaceModel& model, double L_max,
                                               double reg_threshold, double residual_tol) {
  if (!model.is_surface()) throw PeriodicError("model has no geodesic flow");
  if (L_max <= 0.0) throw PeriodicError("length bound must be positive");
  if (L_max > 8.0) throw PeriodicError("length bound beyond the supported enumeration range");

  if (!model.is_octagon()) return enumerate_cylinder(model, L_max, reg_threshold);

  GeodesicEnumeration en;
  en.L_max = L_max;
  const OctagonGroup& G = model.group();

  // the perturbed metric is conformal, exp(2u) with |u| <= |amplitude|, so a
  // class with perturbed length <= L_max has unperturbed length at most
  // L_max * exp(max(0, -amplitude))
  double keep_below = L_max;
  if (model.kind == ModelKind::PerturbedOctagon)
    keep_below = L_max * std::exp(std::max(0.0, -model.bump_amplitude)) + 1e-9;

  std::vector<WordCandidate> cands = enumerate_ball(G, keep_below, en.words_tried);
  std::sort(cands.begin(), cands.end(), [](const WordCandidate& a, const WordCandidate& b) {
    return a.len < b.len || (a.len == b.len && a.key < b.key);
  });

  // geometric deduplication on top of the word keys: the side-pairing group
  // is not free (products around a vertex collapse), so distinct canonical
  // words can still name the same axis. Candidates arrive in ascending
  // length; one whose axis matches a kept class at the same length is a
  // conjugate, at an integer multiple it is a power of it - both dropped.
  std::vector<WordCandidate> unique_cands;
  std::vector<std::vector<UnitTangentVector>> prints;
  for (const auto& c : cands) {
    UnitTangentVector v = axis_rep(model, c.g);
    bool dup = false;
    for (size_t j = 0; j < unique_cands.size() && !dup; ++j) {
      double ratio = c.len / unique_cands[j].len;
      double mult = std::lround(ratio);
      if (mult < 1.0 || std::fabs(ratio - mult) * unique_cands[j].len > 1e-6) continue;
      dup = near_some_print(model, prints[j], v);
    }
    if (dup) continue;
    unique_cands.push_back(c);
    prints.push_back(axis_prints(model, c.g, c.len));
  }

  struct PolishOut {
    bool ok = false;
    ClosedGeodesic geo;
  };
  std::atomic<size_t> failures{0};
  std::vector<PolishOut> polished =
      parallel_map<PolishOut>(unique_cands.size(), [&](size_t i) {
        PolishOut po;
        const WordCandidate& wc = unique_cands[i];
        UnitTangentVector v0 = axis_rep(model, wc.g);
        try {
          ClosedOrbitCandidate c;
          try {
            c = close_orbit(model, v0, wc.len, 0.02, 4.0, residual_tol, 16.0);
          } catch (const std::exception&) {
            // wider transition search for orbits the bump drags furthest
            c = close_orbit(model, v0, wc.len, 0.05, 4.0, residual_tol, 16.0);
          }
          po.geo.rep = c.w;
          po.geo.length = c.period;
          po.geo.residual = c.residual;
          po.geo.prime = true;
          bool esc = false;
          po.geo.min_lambda = min_lambda_on_orbit(model, c.w, c.period, &esc);
          po.geo.regular = !esc && po.geo.min_lambda >= 0.0;  // threshold applied below
          po.geo.word = wc.word;
          po.geo.conj_key = wc.key;
          po.ok = true;
        } catch (const std::exception&) {
          failures.fetch_add(1);
        }
        return po;
      });
  en.refine_failures = failures.load();

  for (auto& po : polished) {
    if (!po.ok) continue;
    if (po.geo.length > L_max + 1e-9) continue;  // perturbation pushed it past the bound
    po.geo.regular = po.geo.regular && po.geo.min_lambda >= reg_threshold;
    en.orbits.push_back(po.geo);
  }
  std::sort(en.orbits.begin(), en.orbits.end(),
            [](const ClosedGeodesic& a, const ClosedGeodesic& b) {
              return a.length < b.length || (a.length == b.length && a.conj_key < b.conj_key);
            });
  return en;
}

double potential_integral(const SurfaceModel& model, const ClosedGeodesic& geo,
                          const Potential& pot, double dt) {
  return pot.birkhoff(model, geo.rep, geo.length, dt);
}

namespace {

void fit_line(const std::vector<double>& xs, const std::vector<double>& ys, double& slope,
              double& intercept, double& residual) {
  size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double det = n * sxx - sx * sx;
  slope = (n * sxy - sx * sy) / det;
  intercept = (sy - slope * sx) / n;
  double rss = 0;
  for (size_t i = 0; i < n; ++i) {
    double e = ys[i] - (slope * xs[i] + intercept);
    rss += e * e;
  }
  residual = std::sqrt(rss / double(n));
}

}  // namespace

GurevicEstimate gurevic_pressure(const SurfaceModel& model,
                                 const std::vector<ClosedGeodesic>& orbits, const Potential& pot,
                                 double delta, double T_max) {
  if (delta <= 0.0) throw PeriodicError("window width must be positive");
  GurevicEstimate est;
  est.delta = delta;

  std::vector<const ClosedGeodesic*> regs;
  for (const auto& g : orbits)
    if (g.regular && g.prime) regs.push_back(&g);
  if (regs.empty()) {
    est.value = -kInf;
    est.raw_rate = -kInf;
    est.log_total = -kInf;
    est.empty = true;
    est.undersampled = true;
    return est;
  }

  // weight both orientations: the stored orbits are one per unoriented
  // geodesic, and the two orientations carry separate potential integrals
  std::vector<double> weights = parallel_map<double>(2 * regs.size(), [&](size_t i) {
    const ClosedGeodesic& g = *regs[i / 2];
    UnitTangentVector v = g.rep;
    if (i % 2 == 1) {
      v = reversed(v);
      model.fold(v);
    }
    return pot.birkhoff(model, v, g.length, 0.02);
  });

  std::map<long, std::vector<double>> windows;  // window index -> exponents
  for (size_t i = 0; i < regs.size(); ++i) {
    long k = long(std::floor(regs[i]->length / delta));
    windows[k].push_back(weights[2 * i]);
    windows[k].push_back(weights[2 * i + 1]);
  }
  for (const auto& [k, vals] : windows) {
    double m = *std::max_element(vals.begin(), vals.end());
    double s = 0;
    for (double v : vals) s += std::exp(v - m);
    est.window_mid.push_back((double(k) + 0.5) * delta);
    est.log_sum.push_back(m + std::log(s));
    est.counts.push_back(vals.size() / 2);
  }

  if (est.window_mid.size() >= 2) {
    fit_line(est.window_mid, est.log_sum, est.slope, est.intercept, est.residual);
  } else {
    est.slope = est.log_sum[0] / est.window_mid[0];
    est.undersampled = true;
  }
  est.undersampled = est.undersampled || est.window_mid.size() < 3 || regs.size() < 8;

  // the window slopes converge slowly in T: short ranges are dominated by
  // the lumpy low end of the length spectrum. The full sum is steadier, and
  // the counting law S(T) ~ exp(P T) / (P T) lets us divide the prefactor
  // out: solve P T = log S + log(P T) by fixed point (contraction for
  // P > 1/T). If the sums are subcritical the solve has no positive root and
  // the raw rate log S / T is reported instead.
  double longest = 0.0;
  for (const auto* g : regs) longest = std::max(longest, g->length);
  double T = T_max > 0.0 ? T_max : longest;
  est.T_max = T;
  double m = *std::max_element(weights.begin(), weights.end());
  double s = 0.0;
  for (double w : weights) s += std::exp(w - m);
  est.log_total = m + std::log(s);
  est.raw_rate = est.log_total / T;

  double x = std::max(est.raw_rate, 2.0 / T);
  bool converged = false;
  for (int it = 0; it < 80; ++it) {
    if (x <= 1.0 / T) break;
    double next = (est.log_total + std::log(x * T)) / T;
    if (std::fabs(next - x) < 1e-12) {
      converged = next > 1.0 / T;
      x = next;
      break;
    }
    x = next;
  }
  est.corrected = converged;
  est.value = converged ? x : est.raw_rate;
  est.uncertainty = std::fabs(est.value - est.raw_rate) + est.residual + 0.5 / T;
  return est;
}

BinnedMeasure equidistribution_measure(const SurfaceModel& model,
                                       const std::vector<ClosedGeodesic>& orbits,
                                       const Potential& pot, double L, const BinSpec& bins) {
  std::vector<const ClosedGeodesic*> regs;
  for (const auto& g : orbits)
    if (g.regular && g.prime && g.length <= L + 1e-9) regs.push_back(&g);
  if (regs.empty()) throw PeriodicError("no regular closed geodesics within the length bound");

  size_t n = 2 * regs.size();
  std::vector<double> phis = parallel_map<double>(n, [&](size_t i) {
    const ClosedGeodesic& g = *regs[i / 2];
    UnitTangentVector v = g.rep;
    if (i % 2 == 1) {
      v = reversed(v);
      model.fold(v);
    }
    return pot.birkhoff(model, v, g.length, 0.02);
  });
  std::vector<BinnedMeasure> parts = parallel_map<BinnedMeasure>(n, [&](size_t i) {
    const ClosedGeodesic& g = *regs[i / 2];
    UnitTangentVector v = g.rep;
    if (i % 2 == 1) {
      v = reversed(v);
      model.fold(v);
    }
    return empirical_measure(model, v, g.length, bins, 0.01);
  });

  double pmax = *std::max_element(phis.begin(), phis.end());
  std::vector<double> weights(n);
  for (size_t i = 0; i < n; ++i) weights[i] = std::exp(phis[i] - pmax);
  return convex_combination(parts, weights);
}

void write_geodesic_store(const std::string& path, const SurfaceModel& model,
                          const std::vector<ClosedGeodesic>& orbits,
                          const std::vector<Potential>& potentials) {
  std::ofstream out(path);
  if (!out) throw PeriodicError("cannot open geodesic store " + path + " for writing");
  for (const auto& g : orbits) {
    nlohmann::json j;
    j["word"] = g.word;
    j["conj_key"] = g.conj_key;
    j["length"] = g.length;
    j["residual"] = g.residual;
    j["prime"] = g.prime;
    j["regular"] = g.regular;
    j["min_lambda"] = g.min_lambda;
    j["rep"] = {{"chart", g.rep.chart}, {"x", g.rep.x}, {"y", g.rep.y}, {"theta", g.rep.theta}};
    if (!potentials.empty()) {
      nlohmann::json phi = nlohmann::json::object();
      for (const auto& p : potentials)
        phi[p.describe()] = potential_integral(model, g, p, 0.02);
      j["phi"] = phi;
    }
    out << j.dump() << "\n";
  }
  if (!out) throw PeriodicError("write to geodesic store " + path + " failed");
}

std::vector<ClosedGeodesic> load_geodesic_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PeriodicError("cannot open geodesic store " + path);
  std::vector<ClosedGeodesic> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw PeriodicError("geodesic store " + path + " line " + std::to_string(lineno) + ": " +
                          e.what());
    }
    ClosedGeodesic g;
    g.word = j.value("word", std::string());
    g.conj_key = j.value("conj_key", std::string());
    g.length = j.at("length").get<double>();
    g.residual = j.value("residual", 0.0);
    g.prime = j.value("prime", true);
    g.regular = j.value("regular", false);
    g.min_lambda = j.value("min_lambda", 0.0);
    const auto& r = j.at("rep");
    g.rep.chart = r.value("chart", 0);
    g.rep.x = r.at("x").get<double>();
    g.rep.y = r.at("y").get<double>();
    g.rep.theta = r.at("theta").get<double>();
    out.push_back(g);
  }
  return out;
}

}  // namespace rank1
