#include "rank1/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rank1/foliation.hpp"
#include "rank1/linearization.hpp"
#include "rank1/orbitsets.hpp"
#include "rank1/parallel.hpp"
#include "rank1/periodic.hpp"
#include "rank1/potential.hpp"
#include "rank1/pressure.hpp"
#include "rank1/rng.hpp"

namespace rank1 {

const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds = {
      "entropy",         "q-sweep",          "gap",
      "eta-sweep",       "bowen-decay",      "riccati-properties",
      "regularize-demo", "equidistribution", "glue-close-demo"};
  return kinds;
}

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string default_model_for(const std::string& kind) {
  if (kind == "gap" || kind == "eta-sweep" || kind == "regularize-demo")
    return "flat-cylinder-funnels";
  if (kind == "bowen-decay") return "perturbed-octagon";
  return "constant-octagon";
}

bool known_model_name(const std::string& name) {
  for (const auto& [n, desc] : SurfaceModel::catalog())
    if (n == name) return true;
  return false;
}

void check_positive_list(const Config& cfg, const std::string& sec, const std::string& key,
                         std::vector<std::string>& bad) {
  if (!cfg.has(sec, key)) return;
  for (double v : cfg.get_list(sec, key))
    if (!(v > 0.0)) {
      bad.push_back(sec + "." + key + ": entries must be positive");
      return;
    }
}

void check_t_grid(const Config& cfg, const std::string& sec, std::vector<std::string>& bad) {
  if (!cfg.has(sec, "t_grid")) return;
  auto t = cfg.get_list(sec, "t_grid");
  if (t.size() < 2) {
    bad.push_back(sec + ".t_grid: needs at least two horizons");
    return;
  }
  for (size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || (i > 0 && t[i] <= t[i - 1])) {
      bad.push_back(sec + ".t_grid: must be positive and strictly increasing");
      return;
    }
  }
}

void check_min_int(const Config& cfg, const std::string& sec, const std::string& key, long lo,
                   std::vector<std::string>& bad) {
  if (!cfg.has(sec, key)) return;
  if (cfg.get_int(sec, key, lo) < lo)
    bad.push_back(sec + "." + key + ": must be at least " + std::to_string(lo));
}

void check_positive(const Config& cfg, const std::string& sec, const std::string& key,
                    std::vector<std::string>& bad) {
  if (!cfg.has(sec, key)) return;
  if (!(cfg.get_num(sec, key) > 0.0)) bad.push_back(sec + "." + key + ": must be positive");
}

} // namespace

SurfaceModel model_from_experiment_config(const Config& cfg) {
  if (cfg.has("experiment", "model_file"))
    return SurfaceModel::from_file(cfg.get_str("experiment", "model_file"));
  if (cfg.has("experiment", "model"))
    return SurfaceModel::by_name(cfg.get_str("experiment", "model"));
  if (cfg.has("model", "kind")) return SurfaceModel::from_config(cfg);
  return SurfaceModel::by_name(default_model_for(cfg.get_str("experiment", "kind", "entropy")));
}

std::vector<std::string> validate_experiment_config(const Config& cfg) {
  std::vector<std::string> bad;

  if (!cfg.has("experiment", "kind")) {
    bad.push_back("experiment.kind: missing");
    return bad;
  }
  std::string kind = cfg.get_str("experiment", "kind");
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    bad.push_back("experiment.kind: unknown kind '" + kind + "'");
    return bad;
  }

  // resolve the model reference before anything else; an unresolved name is
  // reported as the single finding so the caller is not buried in follow-on
  // noise from checks that assume a model
  if (cfg.has("experiment", "model") && !known_model_name(cfg.get_str("experiment", "model"))) {
    bad.push_back("experiment.model: unknown model '" + cfg.get_str("experiment", "model") + "'");
    return bad;
  }
  SurfaceModel model;
  try {
    model = model_from_experiment_config(cfg);
  } catch (const std::exception& e) {
    bad.push_back(std::string("experiment.model_file: ") + e.what());
    return bad;
  }

  check_positive_list(cfg, "pressure", "eps", bad);
  check_t_grid(cfg, "pressure", bad);
  check_min_int(cfg, "pressure", "spray_bases", 1, bad);
  check_min_int(cfg, "pressure", "spray_per_base", 1, bad);
  check_min_int(cfg, "pressure", "restarts", 1, bad);
  check_min_int(cfg, "pressure", "sing_seeds", 1, bad);

  if (kind == "q-sweep" || kind == "gap" || kind == "equidistribution") {
    if (cfg.has("pressure", "q_list") && cfg.get_list("pressure", "q_list").empty())
      bad.push_back("pressure.q_list: must not be empty");
    if (cfg.has("gurevic", "l_max")) {
      double lm = cfg.get_num("gurevic", "l_max");
      if (!(lm > 0.0) || lm > 8.0) bad.push_back("gurevic.l_max: must lie in (0, 8]");
    }
    check_positive(cfg, "gurevic", "delta", bad);
  }
  if (kind == "eta-sweep") {
    if (cfg.has("sweep", "eta_list")) {
      auto etas = cfg.get_list("sweep", "eta_list");
      if (etas.empty()) bad.push_back("sweep.eta_list: must not be empty");
      for (size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0) || etas[i] > 1.0) {
          bad.push_back("sweep.eta_list: entries must lie in (0, 1]");
          break;
        }
        if (i > 0 && etas[i] >= etas[i - 1]) {
          bad.push_back("sweep.eta_list: must be strictly decreasing");
          break;
        }
      }
    }
    check_positive(cfg, "sweep", "eps", bad);
    check_t_grid(cfg, "sweep", bad);
    check_min_int(cfg, "sweep", "seeds", 1, bad);
  }
  if (kind == "bowen-decay") {
    check_min_int(cfg, "bowen", "segments", 1, bad);
    if (cfg.has("bowen", "eta")) {
      double e = cfg.get_num("bowen", "eta");
      if (!(e > 0.0) || e > 1.0) bad.push_back("bowen.eta: must lie in (0, 1]");
    }
    check_positive(cfg, "bowen", "horizon", bad);
    check_positive(cfg, "bowen", "ds", bad);
  }
  if (kind == "riccati-properties") {
    check_min_int(cfg, "riccati", "trials", 1, bad);
    check_positive(cfg, "riccati", "tol", bad);
  }
  if (kind == "regularize-demo") {
    check_min_int(cfg, "regularize", "count", 1, bad);
    check_positive(cfg, "regularize", "t", bad);
    check_positive(cfg, "regularize", "delta", bad);
    if (!model.has_singular_set())
      bad.push_back("experiment.model: regularize-demo needs a model with a singular set");
  }
  if (kind == "equidistribution") {
    double lm = cfg.get_num("equidist", "l_max", 6.0);
    double ls = cfg.get_num("equidist", "l_small", 4.0);
    if (!(lm > 0.0) || lm > 8.0) bad.push_back("equidist.l_max: must lie in (0, 8]");
    if (!(ls > 0.0) || ls >= lm) bad.push_back("equidist.l_small: must lie in (0, l_max)");
    check_min_int(cfg, "equidist", "bins", 2, bad);
    if (!model.is_octagon())
      bad.push_back("experiment.model: equidistribution needs a model with regular "
                    "closed geodesics; only the octagon models carry them");
  }
  if (kind == "glue-close-demo") {
    if (!model.is_octagon())
      bad.push_back("experiment.model: glue-close-demo runs on the octagon models");
    long n = cfg.get_int("glue", "count", 3);
    if (n < 2 || n > 5) bad.push_back("glue.count: must lie in [2, 5]");
    check_positive(cfg, "glue", "rho", bad);
    check_positive(cfg, "glue", "segment_t", bad);
    check_min_int(cfg, "close", "count", 1, bad);
    check_positive(cfg, "close", "eps", bad);
    check_positive(cfg, "close", "segment_t", bad);
  }
  return bad;
}

// --- randomized matrix-Riccati trials -----------------------------------------

namespace {

// symmetric m x m with eigenvalues drawn uniformly from [lo, hi], random frame
SymMat random_sym(Rng& rng, int m, double lo, double hi) {
  if (m == 1) return SymMat::scalar(rng.uniform(lo, hi));
  double x = rng.uniform(lo, hi);
  double y = rng.uniform(lo, hi);
  double phi = rng.uniform(0.0, M_PI);
  double c = std::cos(phi), s = std::sin(phi);
  return SymMat{2, x * c * c + y * s * s, (x - y) * c * s, x * s * s + y * c * c};
}

// curvature with eigenvalues in [-hi, -lo]; piecewise chunks, linear blend at
// the sample level keeps every value inside the same (convex) eigenvalue band
CurvatureSignal random_signal(Rng& rng, int m, double lo, double hi, double t0, double t1) {
  int chunks = 3 + int(rng.below(5));
  std::vector<SymMat> vals;
  vals.reserve(chunks);
  for (int i = 0; i < chunks; ++i) vals.push_back(random_sym(rng, m, lo, hi) * -1.0);
  return piecewise_signal(vals, t0, t1, 0.02);
}

struct TrialOut {
  int domain = 0, monotone = 0, gap = 0, decay = 0, order = 0;
  int decay_exercised = 0;
  double domain_breach = 0.0; // most negative eigenvalue slack on this trial
  double monotone_breach = 0.0;
  double tanh_err = 0.0;
};

// forward solutions started in {0 <= U <= b} stay there when -b^2 <= K <= 0
TrialOut domain_trial(uint64_t seed, size_t i, double tol) {
  TrialOut out;
  Rng rng(seed ^ 0xd0a11ull, i);
  int m = 1 + int(i % 2);
  double b = rng.uniform(0.5, 2.0);
  double L = rng.uniform(2.0, 5.0);
  CurvatureSignal sig = random_signal(rng, m, 0.0, b * b, 0.0, L);
  SymMat u = random_sym(rng, m, 0.0, b);
  double t = 0.0;
  for (int leg = 0; leg < 4; ++leg) {
    double next = L * double(leg + 1) / 4.0;
    RiccatiResult r = riccati_evolve(sig, u, t, next);
    if (r.blew_up) {
      ++out.domain;
      return out;
    }
    u = r.u;
    t = next;
    double slack = std::min(u.min_eig(), b - u.max_eig());
    out.domain_breach = std::min(out.domain_breach, slack);
    if (slack < -tol) {
      ++out.domain;
      return out;
    }
  }
  return out;
}

// an ordered pair U0 >= V0 in the invariant domain stays ordered, and the
// trace of the difference never grows
TrialOut monotone_trial(uint64_t seed, size_t i, double tol) {
  TrialOut out;
  Rng rng(seed ^ 0x3070e0ull, i);
  int m = 1 + int(i % 2);
  double b = rng.uniform(0.5, 2.0);
  double L = rng.uniform(2.0, 5.0);
  CurvatureSignal sig = random_signal(rng, m, 0.0, b * b, 0.0, L);
  SymMat v = random_sym(rng, m, 0.0, 0.7 * b);
  double room = b - v.max_eig();
  SymMat u = v + random_sym(rng, m, 0.0, room);
  double gap = (u - v).trace();
  double t = 0.0;
  for (int leg = 0; leg < 4; ++leg) {
    double next = L * double(leg + 1) / 4.0;
    RiccatiResult ru = riccati_evolve(sig, u, t, next);
    RiccatiResult rv = riccati_evolve(sig, v, t, next);
    if (ru.blew_up || rv.blew_up) {
      ++out.monotone;
      return out;
    }
    u = ru.u;
    v = rv.u;
    t = next;
    double slack = (u - v).min_eig();
    out.monotone_breach = std::min(out.monotone_breach, slack);
    if (slack < -tol) ++out.monotone;
    double g = (u - v).trace();
    if (g > gap + tol) ++out.gap;
    gap = g;
    if (out.monotone || out.gap) return out;
  }
  return out;
}

// with curvature bounded away from zero both solutions settle above a
// positive floor eta, and then the trace gap contracts at rate 2*eta
TrialOut decay_trial(uint64_t seed, size_t i, double tol) {
  TrialOut out;
  Rng rng(seed ^ 0xdeca1ull, i);
  int m = 1 + int(i % 2);
  double b = rng.uniform(0.5, 2.0);
  double L = rng.uniform(2.0, 5.0);
  // eigenvalues of K in [-b^2, -(0.55 b)^2]: solutions started above 0.55 b
  // stay above it, because u' = -u^2 - K > 0 on that boundary
  CurvatureSignal sig = random_signal(rng, m, 0.3025 * b * b, b * b, 0.0, L);
  SymMat v = random_sym(rng, m, 0.55 * b, 0.8 * b);
  SymMat u = v + random_sym(rng, m, 0.0, b - v.max_eig());
  double gap0 = (u - v).trace();
  if (gap0 < 1e-12) return out; // nothing to contract, hypothesis not exercised
  double eta_obs = std::min(u.min_eig(), v.min_eig());
  double t = 0.0;
  int legs = std::max(4, int(L / 0.1));
  for (int leg = 0; leg < legs; ++leg) {
    double next = L * double(leg + 1) / legs;
    RiccatiResult ru = riccati_evolve(sig, u, t, next);
    RiccatiResult rv = riccati_evolve(sig, v, t, next);
    if (ru.blew_up || rv.blew_up) {
      ++out.decay;
      return out;
    }
    u = ru.u;
    v = rv.u;
    t = next;
    eta_obs = std::min({eta_obs, u.min_eig(), v.min_eig()});
  }
  if (eta_obs < 0.1) return out; // floor hypothesis failed, trial does not count
  out.decay_exercised = 1;
  // eta_obs is sampled on a 0.1 grid; keep a margin for dips between samples
  double bound = gap0 * std::exp(-2.0 * 0.9 * eta_obs * L) + tol;
  if ((u - v).trace() > bound) ++out.decay;
  return out;
}

// the zero-started backward solutions U_tau are nondecreasing in tau
TrialOut order_trial(uint64_t seed, size_t i, double tol) {
  TrialOut out;
  Rng rng(seed ^ 0x0d4e6ull, i);
  int m = 1 + int(i % 2);
  double b = rng.uniform(0.5, 2.0);
  CurvatureSignal sig = random_signal(rng, m, 0.0, b * b, -8.0, 0.0);
  SymMat prev = SymMat::zero(m);
  bool have_prev = false;
  for (double tau : {1.0, 2.0, 4.0, 8.0}) {
    RiccatiResult r = riccati_evolve(sig, SymMat::zero(m), -tau, 0.0);
    if (r.blew_up) {
      ++out.order;
      return out;
    }
    if (have_prev && (r.u - prev).min_eig() < -tol) {
      ++out.order;
      return out;
    }
    prev = r.u;
    have_prev = true;
  }
  return out;
}

TrialOut tanh_trial(uint64_t seed, size_t i) {
  TrialOut out;
  Rng rng(seed ^ 0x7a27ull, i);
  int m = 1 + int(i % 2);
  double tau = rng.uniform(0.25, 4.0);
  SymMat K = (m == 1) ? SymMat::scalar(-1.0) : SymMat::diag(-1.0, -1.0);
  CurvatureSignal sig = constant_signal(K, -tau - 0.5, 0.5, 0.02);
  RiccatiResult r = riccati_evolve(sig, SymMat::zero(m), -tau, 0.0);
  double want = std::tanh(tau);
  out.tanh_err = std::fabs(r.u.a - want);
  if (m == 2) out.tanh_err = std::max(out.tanh_err, std::fabs(r.u.c - want));
  return out;
}

} // namespace

RiccatiSuiteResult riccati_property_suite(size_t trials, double tol, uint64_t seed) {
  RiccatiSuiteResult res;
  res.trials = trials;

  auto reduce = [&](const std::vector<TrialOut>& outs) {
    for (const auto& o : outs) {
      res.domain_violations += size_t(o.domain);
      res.monotone_violations += size_t(o.monotone);
      res.gap_violations += size_t(o.gap);
      res.decay_violations += size_t(o.decay);
      res.decay_exercised += size_t(o.decay_exercised);
      res.order_violations += size_t(o.order);
      res.worst_domain_breach = std::min(res.worst_domain_breach, o.domain_breach);
      res.worst_monotone_breach = std::min(res.worst_monotone_breach, o.monotone_breach);
      res.tanh_error = std::max(res.tanh_error, o.tanh_err);
    }
  };

  reduce(parallel_map<TrialOut>(trials,
                                [&](size_t i) { return domain_trial(seed, i, tol); }));
  reduce(parallel_map<TrialOut>(trials,
                                [&](size_t i) { return monotone_trial(seed, i, tol); }));
  reduce(parallel_map<TrialOut>(trials,
                                [&](size_t i) { return decay_trial(seed, i, tol); }));
  reduce(parallel_map<TrialOut>(trials,
                                [&](size_t i) { return order_trial(seed, i, tol); }));
  size_t closed_form = std::max<size_t>(trials / 10, 64);
  reduce(parallel_map<TrialOut>(closed_form, [&](size_t i) { return tanh_trial(seed, i); }));
  return res;
}

// --- the experiment runners ----------------------------------------------------

namespace {

struct PressureKnobs {
  std::vector<double> eps;
  std::vector<double> t_grid;
  size_t bases = 0, per_base = 0;
  int restarts = 3;
  bool density = false;
};

PressureKnobs pressure_knobs(const Config& cfg, std::vector<double> def_eps,
                             std::vector<double> def_t, size_t def_bases, size_t def_per) {
  PressureKnobs k;
  k.eps = cfg.get_list("pressure", "eps", def_eps);
  k.t_grid = cfg.get_list("pressure", "t_grid", def_t);
  k.bases = size_t(cfg.get_int("pressure", "spray_bases", long(def_bases)));
  k.per_base = size_t(cfg.get_int("pressure", "spray_per_base", long(def_per)));
  k.restarts = int(cfg.get_int("pressure", "restarts", 3));
  k.density = cfg.get_bool("pressure", "density_check", false);
  return k;
}

std::vector<UnitTangentVector> spray_for(const SurfaceModel& model, const PressureKnobs& k,
                                         long seed) {
  double min_eps = *std::min_element(k.eps.begin(), k.eps.end());
  return seed_spray(model, k.bases, k.per_base, min_eps, k.t_grid.back(), uint64_t(seed));
}

Potential potential_for(double q) {
  return q == 0.0 ? Potential::zero() : Potential::q_phi_u(q);
}

void run_entropy(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  PressureKnobs k = pressure_knobs(cfg, {0.2, 0.1}, {3, 4, 5, 6, 7, 8}, 500, 200);
  double q = cfg.get_num("pressure", "q", 0.0);
  auto seeds = spray_for(model, k, seed);
  b.results["seed_count"] = seeds.size();
  PressureEstimate est = pressure_estimate(model, ConstraintSpec::full(), potential_for(q), k.eps,
                                           k.t_grid, seeds, k.restarts, k.density, 0.05, 0.7,
                                           k.bases);
  b.results["estimate"] = to_json(est);
  b.files.push_back({"pressure.csv", pressure_csv(est, "full")});
}

void run_q_sweep(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  PressureKnobs k = pressure_knobs(cfg, {0.2, 0.1}, {2, 3, 4, 5, 6}, 300, 150);
  auto q_list = cfg.get_list("pressure", "q_list", {0.0, 0.5});
  double l_max = cfg.get_num("gurevic", "l_max", 6.0);
  double delta = cfg.get_num("gurevic", "delta", 0.5);

  auto seeds = spray_for(model, k, seed);
  b.results["seed_count"] = seeds.size();
  GeodesicEnumeration en = enumerate_closed_geodesics(model, l_max);
  b.results["orbit_count"] = en.orbits.size();
  b.results["words_tried"] = en.words_tried;
  b.results["refine_failures"] = en.refine_failures;

  nlohmann::json rows = nlohmann::json::array();
  for (double q : q_list) {
    Potential pot = potential_for(q);
    PressureEstimate est = pressure_estimate(model, ConstraintSpec::full(), pot, k.eps, k.t_grid,
                                             seeds, k.restarts, k.density, 0.05, 0.7, k.bases);
    GurevicEstimate gur = gurevic_pressure(model, en.orbits, pot, delta, l_max);
    double diff = est.value - gur.value;
    double comb = est.uncertainty + gur.uncertainty;
    nlohmann::json row;
    row["q"] = q;
    row["separated"] = to_json(est);
    row["gurevic"] = to_json(gur);
    row["difference"] = json_num(diff);
    row["combined_uncertainty"] = json_num(comb);
    row["agree"] = std::isfinite(diff) && std::fabs(diff) <= comb;
    rows.push_back(row);
    b.files.push_back({"pressure_q" + fmt_g(q) + ".csv", pressure_csv(est, "q=" + fmt_g(q))});
  }
  b.results["rows"] = rows;
}

void run_gap(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  PressureKnobs k = pressure_knobs(cfg, {0.2, 0.1}, {2, 3, 4, 5, 6}, 200, 100);
  auto q_list = cfg.get_list("pressure", "q_list", {-1.0, 0.0, 1.0});
  size_t n_sing = size_t(cfg.get_int("pressure", "sing_seeds", 400));
  size_t n_range = size_t(cfg.get_int("pressure", "range_samples", 2000));

  std::vector<UnitTangentVector> sing_seeds =
      model.has_singular_set() ? seed_sing(model, n_sing) : spray_for(model, k, seed);
  // grid pools have no per-fan floor; only the spray fallback does
  size_t sing_floor = model.has_singular_set() ? 0 : k.bases;
  b.results["sing_seed_count"] = sing_seeds.size();

  nlohmann::json rows = nlohmann::json::array();
  PressureEstimate sing0;
  bool have_sing0 = false;
  for (double q : q_list) {
    Potential pot = potential_for(q);
    PressureEstimate est = pressure_estimate(model, ConstraintSpec::sing(), pot, k.eps, k.t_grid,
                                             sing_seeds, k.restarts, k.density, 0.05, 0.7,
                                             sing_floor);
    if (q == 0.0) {
      sing0 = est;
      have_sing0 = true;
    }
    nlohmann::json row;
    row["q"] = q;
    row["sing"] = to_json(est);
    rows.push_back(row);
    b.files.push_back({"sing_q" + fmt_g(q) + ".csv", pressure_csv(est, "sing q=" + fmt_g(q))});
  }
  b.results["rows"] = rows;

  if (!have_sing0)
    sing0 = pressure_estimate(model, ConstraintSpec::sing(), Potential::zero(), k.eps, k.t_grid,
                              sing_seeds, k.restarts, false, 0.05, 0.7, sing_floor);
  auto full_seeds = spray_for(model, k, seed + 1);
  PressureEstimate full0 = pressure_estimate(model, ConstraintSpec::full(), Potential::zero(),
                                             k.eps, k.t_grid, full_seeds, k.restarts, false, 0.05,
                                             0.7, k.bases);
  b.results["full"] = to_json(full0);
  b.files.push_back({"full.csv", pressure_csv(full0, "full")});
  GapVerdict verdict = gap_check(full0, sing0);
  b.results["gap"] = to_json(verdict);

  nlohmann::json ranges = nlohmann::json::array();
  for (double q : q_list) {
    BoundedRangeResult r =
        bounded_range_check(model, potential_for(q), full0, sing0, n_range, uint64_t(seed));
    nlohmann::json row;
    row["q"] = q;
    row["range"] = to_json(r);
    ranges.push_back(row);
  }
  b.results["range_rows"] = ranges;
}

void run_eta_sweep(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  auto eta_list = cfg.get_list("sweep", "eta_list", {0.8, 0.6, 0.4, 0.3, 0.2});
  double eps = cfg.get_num("sweep", "eps", 0.15);
  auto t_grid = cfg.get_list("sweep", "t_grid", {2, 3, 4, 5, 6});
  size_t n_seeds = size_t(cfg.get_int("sweep", "seeds", 4000));
  int restarts = int(cfg.get_int("pressure", "restarts", 3));
  size_t n_sing = size_t(cfg.get_int("pressure", "sing_seeds", 400));

  auto seeds = seed_lattice(model, n_seeds, uint64_t(seed));
  std::vector<EtaSweepRow> rows =
      bad_pressure_sweep(model, Potential::zero(), eta_list, eps, t_grid, seeds, restarts);

  std::string csv = "eta,eps,t,count,log_lambda\n";
  nlohmann::json jrows = nlohmann::json::array();
  bool monotone = true;
  double noise = 0.1;
  double prev = kInf;
  for (const auto& row : rows) {
    nlohmann::json jr;
    jr["eta"] = row.eta;
    jr["estimate"] = to_json(row.estimate);
    jrows.push_back(jr);
    double val = row.estimate.empty ? -kInf : row.estimate.value;
    if (val > prev + noise) monotone = false;
    prev = val;
    for (const auto& pe : row.estimate.per_eps)
      for (size_t i = 0; i < pe.log_lambda.size(); ++i)
        csv += fmt17(row.eta) + "," + fmt17(pe.eps) + "," + fmt17(row.estimate.t_grid[i]) + "," +
               std::to_string(pe.counts[i]) + "," + fmt17(pe.log_lambda[i]) + "\n";
  }
  b.results["rows"] = jrows;
  b.results["monotone_within_noise"] = monotone;
  b.results["noise_band"] = noise;
  b.files.push_back({"eta_sweep.csv", csv});

  if (model.has_singular_set()) {
    auto sing_seeds = seed_sing(model, n_sing);
    PressureEstimate sing = pressure_estimate(model, ConstraintSpec::sing(), Potential::zero(),
                                              {eps}, t_grid, sing_seeds, restarts, false);
    b.results["sing"] = to_json(sing);
    double last = rows.empty() || rows.back().estimate.empty ? -kInf : rows.back().estimate.value;
    b.results["approach_gap"] =
        json_num(std::isfinite(last) && std::isfinite(sing.value) ? std::fabs(last - sing.value)
                                                                  : kInf);
  }
}

void run_bowen_decay(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  size_t n = size_t(cfg.get_int("bowen", "segments", 20));
  double eta = cfg.get_num("bowen", "eta", 0.3);
  double T = cfg.get_num("bowen", "horizon", 15.0);
  double ds = cfg.get_num("bowen", "ds", 1e-3);
  double min_rate = cfg.get_num("bowen", "min_rate", 0.1);
  double max_ratio = cfg.get_num("bowen", "max_ratio", 0.1);

  // deterministic candidate pool, filtered in parallel, first n winners kept
  Rng rng(uint64_t(seed), 7);
  std::vector<UnitTangentVector> picked;
  for (int round = 0; round < 3 && picked.size() < n; ++round) {
    std::vector<UnitTangentVector> pool;
    pool.reserve(4 * n);
    for (size_t i = 0; i < 4 * n; ++i) pool.push_back(model.random_vector(rng));
    std::vector<char> good = parallel_map<char>(pool.size(), [&](size_t i) {
      try {
        return char(in_G(model, pool[i], T, eta) ? 1 : 0);
      } catch (const std::exception&) {
        return char(0);
      }
    });
    for (size_t i = 0; i < pool.size() && picked.size() < n; ++i)
      if (good[i]) picked.push_back(pool[i]);
  }
  if (picked.size() < n)
    throw OrbitSetsError("bowen-decay: only " + std::to_string(picked.size()) + " of " +
                         std::to_string(n) + " sampled segments landed in the uniform-growth set");

  struct SegOut {
    bool ok = false;
    std::string err;
    DecayFit fit;
    double ratio = 0.0;
    bool rate_ok = false, ratio_ok = false;
  };
  std::vector<SegOut> outs = parallel_map<SegOut>(n, [&](size_t i) {
    SegOut s;
    try {
      LeafAdvanceResult adv = leaf_advance(model, picked[i], LeafSide::Stable, ds);
      if (!adv.complete) {
        s.err = "stable partner walk stopped early";
        return s;
      }
      s.fit = bowen_discrepancy(model, picked[i], adv.v, T);
      double first = s.fit.values.empty() ? 0.0 : s.fit.values.front();
      double last = s.fit.values.empty() ? 0.0 : s.fit.values.back();
      s.ratio = first > 1e-12 ? last / first : 0.0;
      s.rate_ok = s.fit.collapsed || s.fit.rate >= min_rate;
      s.ratio_ok = s.ratio < max_ratio;
      s.ok = true;
    } catch (const std::exception& e) {
      s.err = e.what();
    }
    return s;
  });

  nlohmann::json rows = nlohmann::json::array();
  std::string csv = "segment,t,discrepancy\n";
  size_t ok_count = 0, rate_count = 0, ratio_count = 0;
  double worst_rate = kInf, worst_ratio = 0.0;
  for (size_t i = 0; i < outs.size(); ++i) {
    const SegOut& s = outs[i];
    nlohmann::json row;
    row["ok"] = s.ok;
    if (!s.err.empty()) row["error"] = s.err;
    if (s.ok) {
      row["fit"] = to_json(s.fit);
      row["ratio"] = json_num(s.ratio);
      row["rate_ok"] = s.rate_ok;
      row["ratio_ok"] = s.ratio_ok;
      ++ok_count;
      if (s.rate_ok) ++rate_count;
      if (s.ratio_ok) ++ratio_count;
      if (!s.fit.collapsed) worst_rate = std::min(worst_rate, s.fit.rate);
      worst_ratio = std::max(worst_ratio, s.ratio);
      for (size_t j = 0; j < s.fit.times.size(); ++j)
        csv += std::to_string(i) + "," + fmt17(s.fit.times[j]) + "," + fmt17(s.fit.values[j]) +
               "\n";
    }
    rows.push_back(row);
  }
  b.results["rows"] = rows;
  b.results["segments"] = n;
  b.results["segments_measured"] = ok_count;
  b.results["rate_ok_count"] = rate_count;
  b.results["ratio_ok_count"] = ratio_count;
  b.results["worst_rate"] = json_num(worst_rate);
  b.results["worst_ratio"] = json_num(worst_ratio);
  b.results["all_pass"] = (ok_count == n && rate_count == n && ratio_count == n);
  b.files.push_back({"decay.csv", csv});
}

void run_riccati_kind(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  (void)model; // trials run on synthetic curvature signals, not on a surface
  size_t trials = size_t(cfg.get_int("riccati", "trials", 10000));
  double tol = cfg.get_num("riccati", "tol", 1e-8);
  RiccatiSuiteResult r = riccati_property_suite(trials, tol, uint64_t(seed));
  nlohmann::json j;
  j["trials"] = r.trials;
  j["domain_violations"] = r.domain_violations;
  j["monotone_violations"] = r.monotone_violations;
  j["gap_violations"] = r.gap_violations;
  j["decay_violations"] = r.decay_violations;
  j["decay_exercised"] = r.decay_exercised;
  j["order_violations"] = r.order_violations;
  j["worst_domain_breach"] = json_num(r.worst_domain_breach);
  j["worst_monotone_breach"] = json_num(r.worst_monotone_breach);
  j["tanh_error"] = json_num(r.tanh_error);
  j["pass"] = r.pass(tol);
  b.results["suite"] = j;
  std::string csv = "category,trials,violations\n";
  csv += "domain," + std::to_string(r.trials) + "," + std::to_string(r.domain_violations) + "\n";
  csv += "monotone," + std::to_string(r.trials) + "," + std::to_string(r.monotone_violations) +
         "\n";
  csv += "trace_gap," + std::to_string(r.trials) + "," + std::to_string(r.gap_violations) + "\n";
  csv += "decay," + std::to_string(r.decay_exercised) + "," +
         std::to_string(r.decay_violations) + "\n";
  csv += "order," + std::to_string(r.trials) + "," + std::to_string(r.order_violations) + "\n";
  b.files.push_back({"riccati.csv", csv});
}

void run_regularize(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  size_t count = size_t(cfg.get_int("regularize", "count", 100));
  double t = cfg.get_num("regularize", "t", 40.0);
  FoliationCalibration cal = default_calibration(model);
  double delta = cfg.get_num("regularize", "delta", cal.delta);
  double eta_check = cfg.get_num("regularize", "eta_check", cal.eta0);

  Rng rng(uint64_t(seed), 11);
  std::vector<UnitTangentVector> vs = model.sing_sample(int(count), rng);

  // calibrate the margin T on a pilot set: smallest rung where every pilot
  // segment gets regular endpoints while staying near Sing in the middle
  std::vector<double> ladder = {4.0, 6.0, 8.0, 10.0, 12.0};
  size_t pilot_n = std::min<size_t>(10, vs.size());
  double T_used = ladder.back();
  bool calibrated = false;
  for (double T : ladder) {
    if (2.0 * T >= t) break;
    std::vector<char> ok = parallel_map<char>(pilot_n, [&](size_t i) {
      try {
        RegularizedSegment r =
            regularize_segment(model, vs[i], t, cal.eta0, cal.R, T, delta, eta_check);
        return char((r.endpoints_regular && r.mid_near_sing) ? 1 : 0);
      } catch (const std::exception&) {
        return char(0);
      }
    });
    if (std::all_of(ok.begin(), ok.end(), [](char c) { return c != 0; })) {
      T_used = T;
      calibrated = true;
      break;
    }
  }
  b.results["T_used"] = T_used;
  b.results["calibrated"] = calibrated;

  struct Row {
    bool ok = false;
    std::string err;
    RegularizedSegment r;
  };
  std::vector<Row> rows = parallel_map<Row>(vs.size(), [&](size_t i) {
    Row row;
    try {
      row.r = regularize_segment(model, vs[i], t, cal.eta0, cal.R, T_used, delta, eta_check);
      row.ok = true;
    } catch (const std::exception& e) {
      row.err = e.what();
    }
    return row;
  });

  nlohmann::json jrows = nlohmann::json::array();
  std::string csv = "index,ok,endpoints_regular,mid_near_sing,lambda_start,lambda_end,"
                    "worst_mid_sing_gap\n";
  size_t good = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    nlohmann::json jr;
    jr["ok"] = rows[i].ok;
    if (!rows[i].err.empty()) jr["error"] = rows[i].err;
    if (rows[i].ok) {
      jr["segment"] = to_json(rows[i].r);
      if (rows[i].r.endpoints_regular && rows[i].r.mid_near_sing) ++good;
      csv += std::to_string(i) + ",1," + std::to_string(int(rows[i].r.endpoints_regular)) + "," +
             std::to_string(int(rows[i].r.mid_near_sing)) + "," + fmt17(rows[i].r.lambda_start) +
             "," + fmt17(rows[i].r.lambda_end) + "," + fmt17(rows[i].r.worst_mid_sing_gap) + "\n";
    } else {
      csv += std::to_string(i) + ",0,0,0,0,0,0\n";
    }
    jrows.push_back(jr);
  }
  b.results["rows"] = jrows;
  b.results["count"] = count;
  b.results["good"] = good;
  b.results["all_pass"] = (good == count);
  b.files.push_back({"regularize.csv", csv});
}

void run_equidistribution(const Config& cfg, const SurfaceModel& model, long seed,
                          ReportBundle& b) {
  (void)seed; // fully deterministic given the model
  double l_max = cfg.get_num("equidist", "l_max", 6.0);
  double l_small = cfg.get_num("equidist", "l_small", 4.0);
  int n_bins = int(cfg.get_int("equidist", "bins", 8));
  double q = cfg.get_num("equidist", "q", 0.0);
  Potential pot = potential_for(q);

  GeodesicEnumeration en = enumerate_closed_geodesics(model, l_max);
  b.results["orbit_count"] = en.orbits.size();
  BinSpec bins = default_bins(model, n_bins);
  BinnedMeasure liou = liouville_measure(model, bins);

  nlohmann::json rows = nlohmann::json::array();
  std::string csv = "l,orbits_used,tv_to_liouville\n";
  std::vector<double> tvs;
  for (double L : {l_small, l_max}) {
    size_t used = 0;
    for (const auto& g : en.orbits)
      if (g.regular && g.prime && g.length <= L + 1e-9) ++used;
    BinnedMeasure m = equidistribution_measure(model, en.orbits, pot, L, bins);
    double tv = tv_distance(m, liou);
    tvs.push_back(tv);
    nlohmann::json row;
    row["l"] = L;
    row["orbits_used"] = used;
    row["tv_to_liouville"] = json_num(tv);
    rows.push_back(row);
    csv += fmt17(L) + "," + std::to_string(used) + "," + fmt17(tv) + "\n";
  }
  b.results["rows"] = rows;
  b.results["tv_decreased"] = tvs.size() == 2 && tvs[1] < tvs[0];
  b.files.push_back({"equidist.csv", csv});
}

void run_glue_close(const Config& cfg, const SurfaceModel& model, long seed, ReportBundle& b) {
  size_t glue_n = size_t(cfg.get_int("glue", "count", 3));
  double glue_eta = cfg.get_num("glue", "eta", 0.3);
  double glue_t = cfg.get_num("glue", "segment_t", 3.0);
  double rho = cfg.get_num("glue", "rho", 0.05);
  double kappa = cfg.get_num("glue", "kappa", 4.0);
  size_t close_n = size_t(cfg.get_int("close", "count", 20));
  double close_eta = cfg.get_num("close", "eta", 0.3);
  double close_t = cfg.get_num("close", "segment_t", 4.0);
  double eps = cfg.get_num("close", "eps", 0.02);
  double residual_tol = cfg.get_num("close", "residual_tol", 1e-8);
  double trace_l_max = cfg.get_num("trace", "l_max", 4.0);

  Rng rng(uint64_t(seed), 13);
  auto sample_in = [&](size_t want, double t, double eta, bool core) {
    std::vector<UnitTangentVector> out;
    for (int round = 0; round < 4 && out.size() < want; ++round) {
      std::vector<UnitTangentVector> pool;
      for (size_t i = 0; i < 3 * want + 4; ++i) pool.push_back(model.random_vector(rng));
      std::vector<char> good = parallel_map<char>(pool.size(), [&](size_t i) {
        try {
          bool hit = core ? in_C(model, pool[i], t, eta) : in_G(model, pool[i], t, eta);
          return char(hit ? 1 : 0);
        } catch (const std::exception&) {
          return char(0);
        }
      });
      for (size_t i = 0; i < pool.size() && out.size() < want; ++i)
        if (good[i]) out.push_back(pool[i]);
    }
    if (out.size() < want)
      throw OrbitSetsError("glue-close-demo: sampled only " + std::to_string(out.size()) +
                           " of " + std::to_string(want) + " qualifying segments");
    return out;
  };

  // --- gluing: one chain through every sampled segment, d_t re-verified inside
  auto glue_pool = sample_in(3 * glue_n, glue_t, glue_eta, true);
  nlohmann::json glue_json;
  bool glued_ok = false;
  std::string glue_err;
  for (size_t attempt = 0; attempt * glue_n + glue_n <= glue_pool.size(); ++attempt) {
    std::vector<std::pair<UnitTangentVector, double>> segs;
    for (size_t j = 0; j < glue_n; ++j)
      segs.push_back({glue_pool[attempt * glue_n + j], glue_t});
    try {
      GluedOrbit g = shadow_segments(model, segs, rho, kappa);
      glue_json = to_json(g);
      double worst = 0.0;
      for (double d : g.verify_dt) worst = std::max(worst, d);
      glue_json["worst_verify_dt"] = json_num(worst);
      glue_json["within_rho"] = worst <= rho + 1e-12;
      glued_ok = true;
      break;
    } catch (const std::exception& e) {
      glue_err = e.what();
    }
  }
  if (!glued_ok) throw OrbitSetsError("glue-close-demo: gluing failed: " + glue_err);
  b.results["glue"] = glue_json;

  // --- closing: periodic orbit near each segment, residual and d_t checked
  auto close_pool = sample_in(close_n, close_t, close_eta, false);
  struct CloseOut {
    bool ok = false;
    std::string err;
    ClosedOrbitCandidate c;
  };
  std::vector<CloseOut> outs = parallel_map<CloseOut>(close_n, [&](size_t i) {
    CloseOut o;
    try {
      o.c = close_orbit(model, close_pool[i], close_t, eps, kappa, residual_tol);
      o.ok = true;
    } catch (const std::exception& e) {
      o.err = e.what();
    }
    return o;
  });
  nlohmann::json crows = nlohmann::json::array();
  std::string csv = "index,ok,period,residual,shadow_dt\n";
  size_t closed = 0, within = 0;
  for (size_t i = 0; i < outs.size(); ++i) {
    nlohmann::json row;
    row["ok"] = outs[i].ok;
    if (!outs[i].err.empty()) row["error"] = outs[i].err;
    if (outs[i].ok) {
      ++closed;
      row["orbit"] = to_json(outs[i].c);
      bool good = outs[i].c.residual < residual_tol && outs[i].c.shadow_dt <= 4.0 * eps;
      row["within_bounds"] = good;
      if (good) ++within;
      csv += std::to_string(i) + ",1," + fmt17(outs[i].c.period) + "," +
             fmt17(outs[i].c.residual) + "," + fmt17(outs[i].c.shadow_dt) + "\n";
    } else {
      csv += std::to_string(i) + ",0,0,0,0\n";
    }
    crows.push_back(row);
  }
  b.results["close_rows"] = crows;
  b.results["closed"] = closed;
  b.results["close_within_bounds"] = within;
  b.results["close_all_pass"] = (closed == close_n && within == close_n);
  b.files.push_back({"close.csv", csv});

  // --- closed lengths against the algebraic word lengths (exact model only)
  if (model.kind == ModelKind::ConstantOctagon) {
    GeodesicEnumeration en = enumerate_closed_geodesics(model, trace_l_max);
    double worst = 0.0;
    size_t checked = 0;
    for (const auto& g : en.orbits) {
      if (g.word.empty()) continue;
      worst = std::max(worst, std::fabs(g.length - word_length_on(model, g.word)));
      ++checked;
    }
    b.results["trace_checked"] = checked;
    b.results["trace_worst_err"] = json_num(worst);
    b.results["trace_ok"] = checked > 0 && worst <= 1e-6;
  }
}

} // namespace

ExperimentOutcome run_experiment(const Config& cfg, const SurfaceModel& model, long seed) {
  ExperimentOutcome out;
  std::string kind = cfg.get_str("experiment", "kind", "");
  try {
    if (kind == "entropy")
      run_entropy(cfg, model, seed, out.bundle);
    else if (kind == "q-sweep")
      run_q_sweep(cfg, model, seed, out.bundle);
    else if (kind == "gap")
      run_gap(cfg, model, seed, out.bundle);
    else if (kind == "eta-sweep")
      run_eta_sweep(cfg, model, seed, out.bundle);
    else if (kind == "bowen-decay")
      run_bowen_decay(cfg, model, seed, out.bundle);
    else if (kind == "riccati-properties")
      run_riccati_kind(cfg, model, seed, out.bundle);
    else if (kind == "regularize-demo")
      run_regularize(cfg, model, seed, out.bundle);
    else if (kind == "equidistribution")
      run_equidistribution(cfg, model, seed, out.bundle);
    else if (kind == "glue-close-demo")
      run_glue_close(cfg, model, seed, out.bundle);
    else
      throw std::runtime_error("experiment.kind: unknown kind '" + kind + "'");
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

} // namespace rank1
