#include "rank1/pressure.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include "rank1/config.hpp"
#include "rank1/linearization.hpp"
#include "rank1/orbitsets.hpp"
#include "rank1/parallel.hpp"
#include "rank1/rng.hpp"

namespace rank1 {

namespace {

constexpr double kChartBox = 0.85; // disk-chart box enclosing the octagon domain

double wrap_pi(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

} // namespace

// --- seed pools ----------------------------------------------------------------

std::vector<UnitTangentVector> seed_lattice(const SurfaceModel& model, size_t n, uint64_t salt) {
  std::vector<UnitTangentVector> out;
  out.reserve(n);
  LowDiscrepancy seq(3, salt * 7919);
  double x[3];
  size_t guard = 0;
  while (out.size() < n && guard < 200 * n + 1000) {
    ++guard;
    seq.next(x);
    UnitTangentVector v;
    if (model.is_octagon()) {
      v.x = kChartBox * (2.0 * x[0] - 1.0);
      v.y = kChartBox * (2.0 * x[1] - 1.0);
      if (!model.group().in_domain(cplx(v.x, v.y), 1e-9)) continue;
    } else {
      v.x = model.height_window * (2.0 * x[0] - 1.0);
      v.y = M_PI * (2.0 * x[1] - 1.0);
    }
    v.theta = M_PI * (2.0 * x[2] - 1.0);
    out.push_back(v);
  }
  if (out.size() < n) throw PressureError("seed lattice rejection loop stalled");
  return out;
}

std::vector<UnitTangentVector> seed_sing(const SurfaceModel& model, size_t n) {
  if (!model.has_singular_set())
    throw PressureError("model " + model.name() + " has an empty singular set");
  // band height x phase grid, both rotation senses
  double w = model.cyl_half_width;
  double a = model.cyl_radius;
  size_t half = std::max<size_t>(1, n / 2);
  // split heights vs phases in proportion to their extents
  double ratio = (M_PI * a) / std::max(0.05, w);
  size_t ns = std::max<size_t>(1, size_t(std::lround(std::sqrt(double(half) / ratio))));
  size_t nphi = std::max<size_t>(1, (half + ns - 1) / ns);
  std::vector<UnitTangentVector> out;
  out.reserve(2 * ns * nphi);
  for (size_t i = 0; i < ns; ++i) {
    double s = ns == 1 ? 0.0 : -w + 2.0 * w * double(i) / double(ns - 1);
    for (size_t j = 0; j < nphi; ++j) {
      double phi = -M_PI + 2.0 * M_PI * (double(j) + 0.5) / double(nphi);
      out.push_back({s, phi, M_PI / 2.0, 0});
      out.push_back({s, phi, -M_PI / 2.0, 0});
    }
  }
  return out;
}

std::vector<UnitTangentVector> seed_spray(const SurfaceModel& model, size_t n_bases,
                                          size_t per_base, double eps, double t_max,
                                          uint64_t salt, double fill_fraction) {
  if (per_base == 0 || n_bases == 0) return {};
  std::vector<UnitTangentVector> bases = seed_lattice(model, n_bases, salt + 1);
  // Angular window sized so that separated counts at horizon t_max stay below
  // fill_fraction of the pool: initial angular spread delta grows to roughly
  // delta * e^{t_max + (t_max + 1)} across the full footprint window.
  double window = fill_fraction * double(per_base) * eps * std::exp(-(2.0 * t_max + 1.0));
  double dth = window / double(per_base);
  std::vector<std::vector<UnitTangentVector>> fans = parallel_map<std::vector<UnitTangentVector>>(
      n_bases, [&](size_t b) {
        Rng rng(salt ^ 0x5eedu, b);
        double th0 = rng.uniform(-M_PI, M_PI);
        std::vector<UnitTangentVector> fan;
        fan.reserve(per_base);
        for (size_t j = 0; j < per_base; ++j) {
          UnitTangentVector v = bases[b];
          v.theta = th0 + (double(j) - 0.5 * double(per_base)) * dth;
          FlowResult fr = model.flow(v, t_max);
          if (fr.escaped) continue;
          fan.push_back(fr.end);
        }
        return fan;
      });
  std::vector<UnitTangentVector> out;
  out.reserve(n_bases * per_base);
  for (const auto& fan : fans) out.insert(out.end(), fan.begin(), fan.end());
  return out;
}

// --- constraints ----------------------------------------------------------------

ConstraintSpec ConstraintSpec::full() { return ConstraintSpec{}; }

ConstraintSpec ConstraintSpec::sing() {
  ConstraintSpec c;
  c.kind = Kind::Sing;
  c.label = "sing";
  return c;
}

ConstraintSpec ConstraintSpec::bad(double eta) {
  ConstraintSpec c;
  c.kind = Kind::BadEta;
  c.eta = eta;
  c.label = "bad(eta=" + std::to_string(eta) + ")";
  return c;
}

ConstraintSpec ConstraintSpec::thick_bad(double eta) {
  ConstraintSpec c;
  c.kind = Kind::ThickBadEta;
  c.eta = eta;
  c.label = "thick-bad(eta=" + std::to_string(eta) + ")";
  return c;
}

ConstraintSpec ConstraintSpec::good(double eta) {
  ConstraintSpec c;
  c.kind = Kind::GoodEta;
  c.eta = eta;
  c.label = "good(eta=" + std::to_string(eta) + ")";
  return c;
}

namespace {

// membership in the thickened low-average collection: some core window
// [s, t - s'] with s, s' in [0, 1] has lambda-average strictly below eta
bool thick_bad_from_track(const LambdaTrack& track, double t, double eta) {
  double dt = track.dt;
  int pad = std::min(int(std::floor(1.0 / dt)), int(std::floor(t / dt)));
  for (int i = 0; i <= pad; ++i) {
    double s = dt * double(i);
    for (int j = 0; j <= pad; ++j) {
      double tp = dt * double(j);
      double len = t - s - tp;
      if (len <= dt * 0.5) continue;
      if (track.lambda_integral(s, t - tp) < eta * len) return true;
    }
  }
  return false;
}

} // namespace

bool ConstraintSpec::admits(const SurfaceModel& model, const UnitTangentVector& v, double t,
                            double dt) const {
  switch (kind) {
    case Kind::Full: return true;
    case Kind::Sing: return model.has_singular_set() && model.in_singular_set(v, 1e-6);
    case Kind::BadEta: return in_B(model, v, t, eta, dt);
    case Kind::GoodEta: return in_G(model, v, t, eta, dt);
    case Kind::ThickBadEta: {
      LambdaTrack track = lambda_track(model, v, t, dt);
      if (track.escaped) return false; // cannot certify the averages
      return thick_bad_from_track(track, t, eta);
    }
    case Kind::Custom: return pred && pred(model, v, t);
  }
  return false;
}

std::vector<UnitTangentVector> filter_seeds(const SurfaceModel& model,
                                            const std::vector<UnitTangentVector>& seeds,
                                            const ConstraintSpec& constraint, double t,
                                            double dt) {
  if (constraint.kind == ConstraintSpec::Kind::Full) return seeds;
  std::vector<char> keep = parallel_map<char>(
      seeds.size(), [&](size_t i) { return char(constraint.admits(model, seeds[i], t, dt)); });
  std::vector<UnitTangentVector> out;
  for (size_t i = 0; i < seeds.size(); ++i)
    if (keep[i]) out.push_back(seeds[i]);
  return out;
}

// --- separated sets ----------------------------------------------------------------

namespace {

// footprints of every seed on a uniform grid over [0, t+1], folded chart
// positions. Grid maxima under-estimate the true orbit distance, which is the
// safe direction for packing: an accepted pair is separated for real.
struct FootPool {
  int ns = 0;
  double dt = 0.0;
  std::vector<float> xy; // [seed][sample][2]
  const float* at(size_t seed) const { return xy.data() + size_t(2) * ns * seed; }
};

FootPool make_footprints(const SurfaceModel& model, const std::vector<UnitTangentVector>& seeds,
                         double t, int spu) {
  FootPool pool;
  pool.ns = std::max(2, int(std::ceil((t + 1.0) * spu)) + 1);
  pool.dt = (t + 1.0) / double(pool.ns - 1);
  pool.xy.assign(size_t(2) * pool.ns * seeds.size(), 0.0f);
  parallel_for(seeds.size(), [&](size_t i) {
    OrbitSamples smp = model.flow_samples(seeds[i], 0.0, t + 1.0, pool.dt);
    float* dst = pool.xy.data() + size_t(2) * pool.ns * i;
    int have = smp.size();
    for (int k = 0; k < pool.ns; ++k) {
      const UnitTangentVector& p = smp.pts[std::min(k, have - 1)];
      dst[2 * k] = float(p.x);
      dst[2 * k + 1] = float(p.y);
    }
  });
  return pool;
}

// grid maximum of footprint distance, early exit once some sample reaches eps
bool foot_separated(const SurfaceModel& model, const FootPool& pool, size_t a, size_t b,
                    double eps) {
  const float* fa = pool.at(a);
  const float* fb = pool.at(b);
  // probe the ends first: expanding dynamics usually separates pairs there
  for (int k : {pool.ns - 1, 0}) {
    if (model.metric_dist(fa[2 * k], fa[2 * k + 1], fb[2 * k], fb[2 * k + 1]) >= eps)
      return true;
  }
  for (int k = 1; k + 1 < pool.ns; ++k) {
    if (model.metric_dist(fa[2 * k], fa[2 * k + 1], fb[2 * k], fb[2 * k + 1]) >= eps)
      return true;
  }
  return false;
}

uint64_t cell_hash(int64_t ax, int64_t ay, int64_t bx, int64_t by) {
  uint64_t h = 1469598103934665603ull;
  for (int64_t part : {ax, ay, bx, by}) {
    h ^= uint64_t(part + (int64_t(1) << 30));
    h *= 1099511628211ull;
  }
  return h;
}

// spatial hash on the first footprint sample. Folding can hand two
// quotient-close starts representatives in distant parts of the chart, so a
// member is also inserted at deck copies of its start: both folded points
// sit within one circumradius of a tile center, so translates that move the
// origin at most two circumradii plus eps cover every identification (the
// phi wrap plays that role on the cylinder). Cells are euclidean: in the
// disk the chart metric dominates euclidean distance, and on the cylinder
// the shrink factor is at worst the core radius, which the cell edge folds
// in. Metric-close starts therefore always land in adjacent cells.
struct SliceHash {
  double cell;
  const SurfaceModel* model;
  const FootPool* pool;
  const std::vector<Mobius>* translates = nullptr;

  SliceHash(const SurfaceModel& m, const FootPool& p, double eps) : cell(eps), model(&m), pool(&p) {
    if (m.is_octagon()) {
      double circum = std::acosh(3.0 + 2.0 * std::sqrt(2.0));
      translates = &m.group().translates(2.0 * circum + eps + 0.1);
    } else {
      cell = eps * std::min(1.0, m.cyl_radius);
    }
  }

  std::unordered_multimap<uint64_t, int> map;

  void insert(size_t seed, int member_id) {
    const float* f = pool->at(seed);
    double ax = f[0], ay = f[1];
    std::vector<uint64_t> keys;
    auto push = [&](double px, double py) {
      keys.push_back(cell_hash(int64_t(std::floor(px / cell)), int64_t(std::floor(py / cell)),
                               0, 0));
    };
    if (translates) {
      for (const Mobius& g : *translates) {
        cplx za = g.apply(cplx(ax, ay));
        push(za.real(), za.imag());
      }
    } else {
      for (int k = -1; k <= 1; ++k) push(ax, ay + 2.0 * M_PI * k);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (uint64_t k : keys) map.emplace(k, member_id);
  }

  void query(size_t seed, std::vector<int>& out) const {
    const float* f = pool->at(seed);
    int64_t cax = int64_t(std::floor(f[0] / cell));
    int64_t cay = int64_t(std::floor(f[1] / cell));
    out.clear();
    for (int dax = -1; dax <= 1; ++dax)
      for (int day = -1; day <= 1; ++day) {
        auto range = map.equal_range(cell_hash(cax + dax, cay + day, 0, 0));
        for (auto it = range.first; it != range.second; ++it) out.push_back(it->second);
      }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
};

std::vector<int> greedy_pass(const SurfaceModel& model, const FootPool& pool,
                             const std::vector<size_t>& order, double eps) {
  SliceHash hash(model, pool, eps);
  std::vector<int> members;
  std::vector<int> near;
  for (size_t cand : order) {
    hash.query(cand, near);
    bool ok = true;
    for (int m : near) {
      if (!foot_separated(model, pool, size_t(m), cand, eps)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      members.push_back(int(cand));
      hash.insert(cand, int(cand)); // the hash stores pool indices
    }
  }
  return members;
}

} // namespace

SeparatedSet build_separated_set(const SurfaceModel& model, const ConstraintSpec& constraint,
                                 double t, double eps,
                                 const std::vector<UnitTangentVector>& seeds, int restarts,
                                 int samples_per_unit) {
  SeparatedSet set;
  set.t = t;
  set.eps = eps;
  set.constraint = constraint.label;
  std::vector<UnitTangentVector> pool_seeds = filter_seeds(model, seeds, constraint, t);
  if (pool_seeds.empty()) return set;

  FootPool pool = make_footprints(model, pool_seeds, t, samples_per_unit);

  uint64_t shuffle_seed =
      fnv1a(model.name() + "|" + std::to_string(t) + "|" + std::to_string(eps) + "|" +
            std::to_string(pool_seeds.size()));
  restarts = std::max(1, restarts);
  std::vector<std::vector<int>> runs = parallel_map<std::vector<int>>(size_t(restarts), [&](size_t r) {
    std::vector<size_t> order(pool_seeds.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (r > 0) {
      Rng rng(shuffle_seed, r);
      for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    return greedy_pass(model, pool, order, eps);
  });

  size_t best = 0;
  for (size_t r = 1; r < runs.size(); ++r)
    if (runs[r].size() > runs[best].size()) best = r;
  set.restart_counts.resize(runs.size());
  for (size_t r = 0; r < runs.size(); ++r) set.restart_counts[r] = runs[r].size();

  const std::vector<int>& chosen = runs[best];
  set.members.reserve(chosen.size());
  for (int idx : chosen) set.members.push_back(pool_seeds[size_t(idx)]);

  // audit: exhaustive for small sets, sampled otherwise; doubtful pairs are
  // re-measured at full resolution before they may count as violations
  size_t m = chosen.size();
  auto audit_pair = [&](size_t i, size_t j) {
    ++set.audited_pairs;
    if (foot_separated(model, pool, size_t(chosen[i]), size_t(chosen[j]), eps)) return;
    if (model.bowen_distance(set.members[i], set.members[j], t) < eps) ++set.audit_violations;
  };
  if (m * (m - 1) / 2 <= 2000 * 1999 / 2 && m <= 2000) {
    set.audit_exhaustive = true;
    for (size_t i = 0; i < m; ++i)
      for (size_t j = i + 1; j < m; ++j) audit_pair(i, j);
  } else if (m > 1) {
    Rng rng(shuffle_seed, 999);
    for (int k = 0; k < 10000; ++k) {
      size_t i = rng.below(m);
      size_t j = rng.below(m - 1);
      if (j >= i) ++j;
      audit_pair(std::min(i, j), std::max(i, j));
    }
  }
  return set;
}

double log_partition_sum(const SurfaceModel& model, const SeparatedSet& set, const Potential& pot,
                         double dt) {
  if (set.members.empty()) return -kInf;
  std::vector<double> phi = parallel_map<double>(set.members.size(), [&](size_t i) {
    return pot.birkhoff(model, set.members[i], set.t, dt);
  });
  double m = *std::max_element(phi.begin(), phi.end());
  double s = 0.0;
  for (double p : phi) s += std::exp(p - m); // index order: deterministic reduction
  return m + std::log(s);
}

double partition_sum(const SurfaceModel& model, const SeparatedSet& set, const Potential& pot,
                     double dt) {
  double l = log_partition_sum(model, set, pot, dt);
  return l == -kInf ? 0.0 : std::exp(l);
}

std::vector<double> member_psi_integrals(const SurfaceModel& model, const SeparatedSet& set,
                                         double dt) {
  return parallel_map<double>(set.members.size(), [&](size_t i) {
    LambdaTrack track = lambda_track(model, set.members[i], set.t, std::max(dt, 0.02), 12.0, 0.01);
    return track.psi_integral(0.0, set.t);
  });
}

// --- pressure estimates ----------------------------------------------------------------

namespace {

// least squares over the admissible upper half of the t-grid
void regress_per_eps(PressureEstimate::PerEps& pe, const std::vector<double>& t_grid) {
  double t_lo = t_grid.front(), t_hi = t_grid.back();
  double mid = 0.5 * (t_lo + t_hi);
  std::vector<size_t> use;
  for (size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] < mid) continue;
    if (i < pe.saturated.size() && pe.saturated[i]) continue;
    if (i < pe.floored.size() && pe.floored[i]) continue;
    if (i < pe.counts.size() && pe.counts[i] == 0) continue;
    use.push_back(i);
  }
  if (use.size() < 2) { // the guards left too little: fall back to all nonempty points
    use.clear();
    for (size_t i = 0; i < t_grid.size(); ++i)
      if (i < pe.counts.size() && pe.counts[i] > 0) use.push_back(i);
  }
  if (use.size() < 2) {
    pe.slope = 0.0;
    pe.intercept = use.empty() ? -kInf : pe.log_lambda[use[0]];
    pe.residual = 0.0;
    return;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i : use) {
    sx += t_grid[i];
    sy += pe.log_lambda[i];
    sxx += t_grid[i] * t_grid[i];
    sxy += t_grid[i] * pe.log_lambda[i];
  }
  double n = double(use.size());
  double den = n * sxx - sx * sx;
  pe.slope = (n * sxy - sx * sy) / den;
  pe.intercept = (sy - pe.slope * sx) / n;
  double rss = 0.0;
  for (size_t i : use) {
    double r = pe.log_lambda[i] - (pe.slope * t_grid[i] + pe.intercept);
    rss += r * r;
  }
  pe.residual = std::sqrt(rss / n);
}

size_t smallest_eps_index(const PressureEstimate& est) {
  size_t k = 0;
  for (size_t i = 1; i < est.per_eps.size(); ++i)
    if (est.per_eps[i].eps < est.per_eps[k].eps) k = i;
  return k;
}

} // namespace

double recompute_estimate_value(const PressureEstimate& est) {
  if (est.empty || est.per_eps.empty()) return -kInf;
  PressureEstimate::PerEps pe = est.per_eps[smallest_eps_index(est)];
  regress_per_eps(pe, est.t_grid);
  return pe.slope;
}

PressureEstimate pressure_estimate(const SurfaceModel& model, const ConstraintSpec& constraint,
                                   const Potential& pot, const std::vector<double>& eps_list,
                                   const std::vector<double>& t_grid,
                                   const std::vector<UnitTangentVector>& seeds, int restarts,
                                   bool density_check, double quad_dt, double fill_guard,
                                   size_t floor_count) {
  if (eps_list.empty() || t_grid.size() < 2)
    throw PressureError("pressure estimate needs at least one scale and two horizons");
  PressureEstimate est;
  est.t_grid = t_grid;
  est.constraint = constraint.label;
  est.potential_desc = pot.describe();

  // constraint filtering depends on (v, t) only: do it once per horizon
  std::vector<std::vector<UnitTangentVector>> pools(t_grid.size());
  for (size_t ti = 0; ti < t_grid.size(); ++ti)
    pools[ti] = filter_seeds(model, seeds, constraint, t_grid[ti]);

  bool any_member = false;
  for (double eps : eps_list) {
    PressureEstimate::PerEps pe;
    pe.eps = eps;
    pe.log_lambda.resize(t_grid.size(), -kInf);
    pe.counts.resize(t_grid.size(), 0);
    pe.saturated.resize(t_grid.size(), 0);
    pe.floored.resize(t_grid.size(), 0);
    for (size_t ti = 0; ti < t_grid.size(); ++ti) {
      ConstraintSpec pass = ConstraintSpec::full();
      pass.label = constraint.label;
      SeparatedSet set =
          build_separated_set(model, pass, t_grid[ti], eps, pools[ti], restarts);
      if (set.audit_violations > 0)
        throw PressureError("separation audit failed at eps=" + std::to_string(eps) +
                            " t=" + std::to_string(t_grid[ti]));
      pe.counts[ti] = set.members.size();
      pe.saturated[ti] =
          char(!pools[ti].empty() &&
               double(set.members.size()) > fill_guard * double(pools[ti].size()));
      pe.floored[ti] = char(floor_count > 0 && set.members.size() <= floor_count);
      pe.log_lambda[ti] = log_partition_sum(model, set, pot, quad_dt);
      if (!set.members.empty()) any_member = true;
      for (size_t rc : set.restart_counts) {
        if (rc > 0 && set.members.size() > 0) {
          double spread = std::log(double(set.members.size()) / double(rc));
          est.restart_spread = std::max(est.restart_spread, spread);
        }
      }
    }
    regress_per_eps(pe, t_grid);
    est.per_eps.push_back(std::move(pe));
  }

  if (!any_member) {
    est.empty = true;
    est.value = -kInf;
    est.uncertainty = 0.0;
    return est;
  }

  size_t k_min = smallest_eps_index(est);
  est.value = est.per_eps[k_min].slope;

  if (est.per_eps.size() >= 2) {
    // second-smallest scale for the extrapolation note
    size_t k_prev = k_min == 0 ? 1 : 0;
    for (size_t i = 0; i < est.per_eps.size(); ++i) {
      if (i == k_min) continue;
      if (est.per_eps[i].eps < est.per_eps[k_prev].eps || k_prev == k_min) k_prev = i;
    }
    double e1 = est.per_eps[k_prev].eps, s1 = est.per_eps[k_prev].slope;
    double e2 = est.per_eps[k_min].eps, s2 = est.per_eps[k_min].slope;
    est.extrapolated = s2 + (s2 - s1) * e2 / (e1 - e2);
    est.eps_spread = std::fabs(s2 - s1);
    // descending scale order: estimates should not drop as eps shrinks
    std::vector<size_t> by_eps(est.per_eps.size());
    for (size_t i = 0; i < by_eps.size(); ++i) by_eps[i] = i;
    std::sort(by_eps.begin(), by_eps.end(), [&](size_t a, size_t b) {
      return est.per_eps[a].eps > est.per_eps[b].eps;
    });
    for (size_t i = 0; i + 1 < by_eps.size(); ++i)
      if (est.per_eps[by_eps[i + 1]].slope < est.per_eps[by_eps[i]].slope - 0.1)
        est.monotone_in_eps = false;
  } else {
    est.extrapolated = est.value;
  }
  est.uncertainty = std::max(0.02, est.per_eps[k_min].residual + est.eps_spread);

  if (density_check) {
    // halve the pool at the largest horizon and smallest scale; a stable sum
    // means the pool, not the dynamics, is no longer the binding resource
    size_t ti = t_grid.size() - 1;
    std::vector<UnitTangentVector> half;
    for (size_t i = 0; i < pools[ti].size(); i += 2) half.push_back(pools[ti][i]);
    ConstraintSpec pass = ConstraintSpec::full();
    pass.label = constraint.label;
    SeparatedSet hset =
        build_separated_set(model, pass, t_grid[ti], est.per_eps[k_min].eps, half, restarts);
    double hl = log_partition_sum(model, hset, pot, quad_dt);
    double fl = est.per_eps[k_min].log_lambda[ti];
    if (fl != -kInf && hl != -kInf) {
      est.density_shift = std::fabs(fl - hl);
      est.seed_density_warning = est.density_shift > 0.05 * std::fabs(fl);
    } else {
      est.seed_density_warning = fl != hl;
    }
  }
  return est;
}

std::vector<EtaSweepRow> bad_pressure_sweep(const SurfaceModel& model, const Potential& pot,
                                            const std::vector<double>& eta_list, double eps,
                                            const std::vector<double>& t_grid,
                                            const std::vector<UnitTangentVector>& seeds,
                                            int restarts, double quad_dt) {
  if (t_grid.size() < 2) throw PressureError("eta sweep needs at least two horizons");
  double t_max = *std::max_element(t_grid.begin(), t_grid.end());
  // one lambda profile per seed serves every (eta, t) membership test
  std::vector<LambdaTrack> tracks = parallel_map<LambdaTrack>(seeds.size(), [&](size_t i) {
    return lambda_track(model, seeds[i], t_max, 0.1);
  });
  std::vector<EtaSweepRow> rows;
  for (double eta : eta_list) {
    EtaSweepRow row;
    row.eta = eta;
    PressureEstimate est;
    est.t_grid = t_grid;
    est.constraint = "thick-bad(eta=" + std::to_string(eta) + ")";
    est.potential_desc = pot.describe();
    PressureEstimate::PerEps pe;
    pe.eps = eps;
    pe.log_lambda.resize(t_grid.size(), -kInf);
    pe.counts.resize(t_grid.size(), 0);
    pe.saturated.resize(t_grid.size(), 0);
    bool any = false;
    for (size_t ti = 0; ti < t_grid.size(); ++ti) {
      std::vector<UnitTangentVector> admitted;
      for (size_t i = 0; i < seeds.size(); ++i) {
        if (tracks[i].escaped) continue;
        if (thick_bad_from_track(tracks[i], t_grid[ti], eta)) admitted.push_back(seeds[i]);
      }
      ConstraintSpec pass = ConstraintSpec::full();
      pass.label = est.constraint;
      SeparatedSet set = build_separated_set(model, pass, t_grid[ti], eps, admitted, restarts);
      pe.counts[ti] = set.members.size();
      pe.log_lambda[ti] = log_partition_sum(model, set, pot, quad_dt);
      if (!set.members.empty()) any = true;
    }
    regress_per_eps(pe, t_grid);
    est.per_eps.push_back(std::move(pe));
    est.empty = !any;
    est.value = any ? est.per_eps[0].slope : -kInf;
    est.extrapolated = est.value;
    est.uncertainty = std::max(0.02, est.per_eps[0].residual);
    row.estimate = std::move(est);
    rows.push_back(std::move(row));
  }
  return rows;
}

// --- verdicts ----------------------------------------------------------------

GapVerdict gap_check(const PressureEstimate& full_est, const PressureEstimate& sing_est,
                     double min_uncertainty) {
  GapVerdict v;
  v.full_value = full_est.empty ? -kInf : full_est.value;
  v.sing_value = sing_est.empty ? -kInf : sing_est.value;
  v.sing_empty = sing_est.empty;
  v.uncertainty = std::max(min_uncertainty, full_est.uncertainty) +
                  std::max(min_uncertainty, sing_est.uncertainty);
  if (sing_est.empty) {
    v.margin = kInf;
    v.verdict = full_est.empty ? -1 : 1;
    return v;
  }
  if (full_est.empty) {
    v.margin = -kInf;
    v.verdict = 0;
    return v;
  }
  v.margin = v.full_value - v.sing_value;
  if (v.margin > v.uncertainty)
    v.verdict = 1;
  else if (v.margin < -v.uncertainty)
    v.verdict = 0;
  else
    v.verdict = -1;
  return v;
}

BoundedRangeResult bounded_range_check(const SurfaceModel& model, const Potential& pot,
                                       const PressureEstimate& h_full_est,
                                       const PressureEstimate& h_sing_est, size_t n_samples,
                                       uint64_t salt) {
  BoundedRangeResult r;
  r.h_full = h_full_est.empty ? -kInf : h_full_est.value;
  r.h_sing = h_sing_est.empty ? -kInf : h_sing_est.value;
  std::vector<UnitTangentVector> amb = seed_lattice(model, n_samples, salt + 11);
  std::vector<double> vals =
      parallel_map<double>(amb.size(), [&](size_t i) { return pot.eval(model, amb[i]); });
  r.inf_phi = *std::min_element(vals.begin(), vals.end());
  if (model.has_singular_set()) {
    std::vector<UnitTangentVector> sing = seed_sing(model, n_samples);
    std::vector<double> svals =
        parallel_map<double>(sing.size(), [&](size_t i) { return pot.eval(model, sing[i]); });
    r.sup_sing_phi = *std::max_element(svals.begin(), svals.end());
  } else {
    r.sing_empty = true;
    r.sup_sing_phi = -kInf;
  }
  r.lhs = r.sup_sing_phi == -kInf ? -kInf : r.sup_sing_phi - r.inf_phi;
  r.rhs = r.h_full - r.h_sing; // +inf when the singular estimate is the empty sentinel
  r.holds = r.lhs < r.rhs;
  return r;
}

Potential ergodic_average_potential(const SurfaceModel& model, const Potential& pot, double T) {
  (void)model; // evaluation binds the model later; kept for call-site symmetry
  return Potential::ergodic_average(pot, T);
}

// --- binned measures ----------------------------------------------------------------

BinSpec default_bins(const SurfaceModel& model, int n) {
  BinSpec b;
  b.nx = b.ny = b.nth = n;
  if (model.is_octagon()) {
    b.x0 = -kChartBox;
    b.x1 = kChartBox;
    b.y0 = -kChartBox;
    b.y1 = kChartBox;
  } else {
    b.x0 = -model.height_window;
    b.x1 = model.height_window;
    b.y0 = -M_PI;
    b.y1 = M_PI;
  }
  return b;
}

double BinnedMeasure::total() const {
  double s = 0.0;
  for (double m : mass) s += m;
  return s;
}

namespace {

int bin_index(const BinSpec& b, const UnitTangentVector& p) {
  double fx = (p.x - b.x0) / (b.x1 - b.x0);
  double fy = (p.y - b.y0) / (b.y1 - b.y0);
  if (fx < 0.0 || fx >= 1.0 || fy < 0.0 || fy >= 1.0) return -1;
  double ft = (wrap_pi(p.theta) + M_PI) / (2.0 * M_PI);
  int ix = std::min(int(fx * b.nx), b.nx - 1);
  int iy = std::min(int(fy * b.ny), b.ny - 1);
  int it = std::min(int(ft * b.nth), b.nth - 1);
  return (ix * b.ny + iy) * b.nth + it;
}

} // namespace

BinnedMeasure empirical_measure(const SurfaceModel& model, const UnitTangentVector& v, double t,
                                const BinSpec& bins, double dt) {
  BinnedMeasure mu;
  mu.bins = bins;
  mu.mass.assign(size_t(bins.nx) * bins.ny * bins.nth, 0.0);
  OrbitSamples smp = model.flow_samples(v, 0.0, t, dt);
  double total = 0.0;
  for (const auto& p : smp.pts) {
    UnitTangentVector q = p;
    model.fold(q);
    int idx = bin_index(bins, q);
    if (idx >= 0) {
      mu.mass[size_t(idx)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0)
    for (double& m : mu.mass) m /= total;
  return mu;
}

BinnedMeasure convex_combination(const std::vector<BinnedMeasure>& measures,
                                 const std::vector<double>& weights) {
  if (measures.empty() || measures.size() != weights.size())
    throw PressureError("convex combination needs one weight per measure");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw PressureError("convex combination weights must be nonnegative");
    wsum += w;
  }
  if (wsum <= 0.0) throw PressureError("convex combination needs positive total weight");
  BinnedMeasure out;
  out.bins = measures[0].bins;
  out.mass.assign(measures[0].mass.size(), 0.0);
  for (size_t i = 0; i < measures.size(); ++i) {
    if (measures[i].mass.size() != out.mass.size())
      throw PressureError("convex combination over mismatched bin grids");
    for (size_t k = 0; k < out.mass.size(); ++k)
      out.mass[k] += (weights[i] / wsum) * measures[i].mass[k];
  }
  return out;
}

BinnedMeasure liouville_measure(const SurfaceModel& model, const BinSpec& bins) {
  BinnedMeasure mu;
  mu.bins = bins;
  mu.mass.assign(size_t(bins.nx) * bins.ny * bins.nth, 0.0);
  double dx = (bins.x1 - bins.x0) / bins.nx;
  double dy = (bins.y1 - bins.y0) / bins.ny;
  const int sub = 3;
  for (int ix = 0; ix < bins.nx; ++ix)
    for (int iy = 0; iy < bins.ny; ++iy) {
      double cellmass = 0.0;
      for (int sx = 0; sx < sub; ++sx)
        for (int sy = 0; sy < sub; ++sy) {
          double x = bins.x0 + dx * (ix + (sx + 0.5) / sub);
          double y = bins.y0 + dy * (iy + (sy + 0.5) / sub);
          if (model.is_octagon()) {
            if (!model.group().in_domain(cplx(x, y), 0.0)) continue;
            double r2 = x * x + y * y;
            double den = 2.0 / (1.0 - r2);
            cellmass += den * den;
          } else {
            cellmass += model.profile(x);
          }
        }
      // angle marginal is uniform
      for (int it = 0; it < bins.nth; ++it)
        mu.mass[size_t((ix * bins.ny + iy) * bins.nth + it)] = cellmass / bins.nth;
    }
  double total = mu.total();
  if (total <= 0.0) throw PressureError("invariant measure integrated to zero over the bins");
  for (double& m : mu.mass) m /= total;
  return mu;
}

double tv_distance(const BinnedMeasure& a, const BinnedMeasure& b) {
  if (a.mass.size() != b.mass.size()) throw PressureError("tv distance over mismatched grids");
  double s = 0.0;
  for (size_t i = 0; i < a.mass.size(); ++i) s += std::fabs(a.mass[i] - b.mass[i]);
  return 0.5 * s;
}

} // namespace rank1
