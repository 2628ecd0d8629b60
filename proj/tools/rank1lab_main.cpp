// command-line front end. `run` drives a whole experiment from a config file;
// the remaining verbs are thin wrappers over single library calls so the
// stores and estimators can be exercised without writing an experiment config
// for each. Exit codes: 0 ok, 2 invalid config or usage, 3 model problem,
// 4 computation failure (partial outputs are still written).
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rank1/experiments.hpp"
#include "rank1/orbitsets.hpp"
#include "rank1/parallel.hpp"
#include "rank1/periodic.hpp"
#include "rank1/potential.hpp"
#include "rank1/pressure.hpp"
#include "rank1/rng.hpp"

namespace {

using namespace rank1;

constexpr int kOk = 0;
constexpr int kBadConfig = 2;
constexpr int kModelError = 3;
constexpr int kComputeError = 4;

struct CommonArgs {
  std::string config;
  std::string out;
  long seed = -1;
  int threads = 0;
};

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

Potential potential_for(double q) {
  return q == 0.0 ? Potential::zero() : Potential::q_phi_u(q);
}

// parse + apply flag overrides; returns false (after printing) on bad input
bool load_config(const CommonArgs& a, Config& cfg) {
  try {
    cfg = Config::parse_file(a.config);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config: %s\n", e.what());
    return false;
  }
  if (a.seed >= 0) cfg.set("experiment", "seed", std::to_string(a.seed));
  if (!a.out.empty()) cfg.set("experiment", "out", a.out);
  if (a.threads > 0) parallel_degree() = a.threads;
  return true;
}

int cmd_models() {
  for (const auto& [name, desc] : SurfaceModel::catalog()) {
    std::printf("%s\n  %s\n", name.c_str(), desc.c_str());
    SurfaceModel m = SurfaceModel::by_name(name);
    for (const auto& [k, v] : m.definition().entries("model"))
      std::printf("    %s = %s\n", k.c_str(), v.c_str());
  }
  return kOk;
}

int cmd_validate(const CommonArgs& a) {
  Config cfg;
  if (!load_config(a, cfg)) return kBadConfig;
  auto diags = validate_experiment_config(cfg);
  if (diags.empty()) {
    std::printf("config ok: kind=%s\n", cfg.get_str("experiment", "kind", "entropy").c_str());
    return kOk;
  }
  for (const auto& d : diags) std::fprintf(stderr, "%s\n", d.c_str());
  return kBadConfig;
}

int cmd_run(const CommonArgs& a, const std::string& forced_kind) {
  Config cfg;
  if (!load_config(a, cfg)) return kBadConfig;
  if (!forced_kind.empty()) cfg.set("experiment", "kind", forced_kind);

  SurfaceModel model;
  try {
    model = model_from_experiment_config(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "model: %s\n", e.what());
    return kModelError;
  }
  auto diags = validate_experiment_config(cfg);
  if (!diags.empty()) {
    for (const auto& d : diags) std::fprintf(stderr, "%s\n", d.c_str());
    return kBadConfig;
  }

  long seed = cfg.get_int("experiment", "seed", 12345);
  std::string outdir = cfg.get_str("experiment", "out", "out");
  std::string kind = cfg.get_str("experiment", "kind");
  ExperimentOutcome outcome = run_experiment(cfg, model, seed);
  write_report_bundle(outdir, cfg, model, kind, seed, outcome.bundle, outcome.error);
  if (outcome.failed) {
    std::fprintf(stderr, "computation failed: %s\n", outcome.error.c_str());
    std::fprintf(stderr, "partial outputs in %s\n", outdir.c_str());
    return kComputeError;
  }
  std::printf("wrote %s/report.json\n", outdir.c_str());
  return kOk;
}

// shared plumbing for the store verbs: parse, resolve, run the body under a
// catch, always write whatever partial bundle exists
template <typename Body>
int run_verb(const CommonArgs& a, const std::string& verb, Body body) {
  Config cfg;
  if (!load_config(a, cfg)) return kBadConfig;
  SurfaceModel model;
  try {
    model = model_from_experiment_config(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "model: %s\n", e.what());
    return kModelError;
  }
  long seed = cfg.get_int("experiment", "seed", 12345);
  std::string outdir = cfg.get_str("experiment", "out", "out");

  ReportBundle bundle;
  std::vector<std::string> diags;
  std::string error;
  try {
    diags = body(cfg, model, seed, outdir, bundle);
  } catch (const std::exception& e) {
    error = e.what();
  }
  if (!diags.empty()) {
    for (const auto& d : diags) std::fprintf(stderr, "%s\n", d.c_str());
    return kBadConfig;
  }
  write_report_bundle(outdir, cfg, model, verb, seed, bundle, error);
  if (!error.empty()) {
    std::fprintf(stderr, "computation failed: %s\n", error.c_str());
    return kComputeError;
  }
  std::printf("wrote %s/report.json\n", outdir.c_str());
  return kOk;
}

std::vector<std::string> segment_diags(const Config& cfg) {
  std::vector<std::string> bad;
  if (cfg.get_int("segments", "count", 50) < 1)
    bad.push_back("segments.count: must be at least 1");
  if (!(cfg.get_num("segments", "t", 4.0) > 0.0)) bad.push_back("segments.t: must be positive");
  double eta = cfg.get_num("segments", "eta", 0.3);
  if (!(eta > 0.0) || eta > 1.0) bad.push_back("segments.eta: must lie in (0, 1]");
  return bad;
}

// draws from the unit tangent bundle until `want` of them satisfy the member
// test; the pool is deterministic in the seed, selection is by pool order
template <typename Member>
std::vector<UnitTangentVector> sample_members(const SurfaceModel& model, uint64_t seed,
                                              size_t want, Member member) {
  Rng rng(seed, 13);
  std::vector<UnitTangentVector> out;
  for (int round = 0; round < 4 && out.size() < want; ++round) {
    std::vector<UnitTangentVector> pool;
    for (size_t i = 0; i < 3 * want + 4; ++i) pool.push_back(model.random_vector(rng));
    std::vector<char> good = parallel_map<char>(pool.size(), [&](size_t i) {
      try {
        return char(member(pool[i]) ? 1 : 0);
      } catch (const std::exception&) {
        return char(0);
      }
    });
    for (size_t i = 0; i < pool.size() && out.size() < want; ++i)
      if (good[i]) out.push_back(pool[i]);
  }
  if (out.size() < want)
    throw OrbitSetsError("sampled only " + std::to_string(out.size()) + " of " +
                         std::to_string(want) + " qualifying segments");
  return out;
}

std::vector<std::string> verb_classify(const Config& cfg, const SurfaceModel& model, long seed,
                                       const std::string& outdir, ReportBundle& b) {
  auto bad = segment_diags(cfg);
  if (!bad.empty()) return bad;
  size_t count = size_t(cfg.get_int("segments", "count", 50));
  double t = cfg.get_num("segments", "t", 4.0);
  double eta = cfg.get_num("segments", "eta", 0.3);

  Rng rng(uint64_t(seed), 17);
  std::vector<UnitTangentVector> vs;
  vs.reserve(count);
  for (size_t i = 0; i < count; ++i) vs.push_back(model.random_vector(rng));

  struct Out {
    bool ok = false;
    std::string err;
    SegmentRecord rec;
  };
  std::vector<Out> outs = parallel_map<Out>(count, [&](size_t i) {
    Out o;
    try {
      o.rec = classify_segment(model, vs[i], t, eta);
      o.ok = true;
    } catch (const std::exception& e) {
      o.err = e.what();
    }
    return o;
  });

  std::vector<SegmentRecord> recs;
  size_t nB = 0, nG = 0, nC = 0;
  std::string csv = "index,t,eta,lambda_int,in_B,in_G,in_C,p,g,s\n";
  for (size_t i = 0; i < outs.size(); ++i) {
    if (!outs[i].ok) {
      csv += std::to_string(i) + ",0,0,0,0,0,0,0,0,0\n";
      continue;
    }
    const SegmentRecord& r = outs[i].rec;
    recs.push_back(r);
    nB += r.tag_B;
    nG += r.tag_G;
    nC += r.tag_C;
    csv += std::to_string(i) + "," + fmt17(r.t) + "," + fmt17(r.eta) + "," +
           fmt17(r.lambda_int) + "," + std::to_string(int(r.tag_B)) + "," +
           std::to_string(int(r.tag_G)) + "," + std::to_string(int(r.tag_C)) + "," +
           fmt17(r.dec.p) + "," + fmt17(r.dec.g) + "," + fmt17(r.dec.s) + "\n";
  }
  std::filesystem::create_directories(outdir);
  append_segment_records(outdir + "/segments.jsonl", recs);
  b.results["count"] = count;
  b.results["classified"] = recs.size();
  b.results["in_B"] = nB;
  b.results["in_G"] = nG;
  b.results["in_C"] = nC;
  b.files.push_back({"segments.csv", csv});
  return {};
}

std::vector<std::string> verb_decompose(const Config& cfg, const SurfaceModel& model, long seed,
                                        const std::string& outdir, ReportBundle& b) {
  (void)outdir;
  auto bad = segment_diags(cfg);
  if (!bad.empty()) return bad;
  double eta = cfg.get_num("segments", "eta", 0.3);

  // either re-decompose a stored batch or sample a fresh one
  std::vector<std::pair<UnitTangentVector, double>> segs;
  if (cfg.has("segments", "store")) {
    for (const auto& r : load_segment_records(cfg.get_str("segments", "store")))
      segs.push_back({r.v, r.t});
  } else {
    size_t count = size_t(cfg.get_int("segments", "count", 50));
    double t = cfg.get_num("segments", "t", 4.0);
    Rng rng(uint64_t(seed), 17);
    for (size_t i = 0; i < count; ++i) segs.push_back({model.random_vector(rng), t});
  }

  std::vector<Decomposition> decs =
      parallel_map<Decomposition>(segs.size(), [&](size_t i) {
        try {
          return decompose(model, segs[i].first, segs[i].second, eta);
        } catch (const std::exception&) {
          return Decomposition{};
        }
      });

  nlohmann::json rows = nlohmann::json::array();
  std::string csv = "index,p,g,s,t,identity_gap\n";
  double worst_gap = 0.0;
  for (size_t i = 0; i < decs.size(); ++i) {
    double gap = std::fabs(decs[i].p + decs[i].g + decs[i].s - segs[i].second);
    worst_gap = std::max(worst_gap, gap);
    rows.push_back(to_json(decs[i]));
    csv += std::to_string(i) + "," + fmt17(decs[i].p) + "," + fmt17(decs[i].g) + "," +
           fmt17(decs[i].s) + "," + fmt17(segs[i].second) + "," + fmt17(gap) + "\n";
  }
  b.results["rows"] = rows;
  b.results["count"] = segs.size();
  b.results["worst_identity_gap"] = json_num(worst_gap);
  b.files.push_back({"decompose.csv", csv});
  return {};
}

std::vector<std::string> verb_glue(const Config& cfg, const SurfaceModel& model, long seed,
                                   const std::string& outdir, ReportBundle& b) {
  (void)outdir;
  std::vector<std::string> bad;
  long n = cfg.get_int("glue", "count", 3);
  if (n < 2 || n > 5) bad.push_back("glue.count: must lie in [2, 5]");
  double t = cfg.get_num("glue", "segment_t", 3.0);
  if (!(t > 0.0)) bad.push_back("glue.segment_t: must be positive");
  double rho = cfg.get_num("glue", "rho", 0.05);
  if (!(rho > 0.0)) bad.push_back("glue.rho: must be positive");
  if (!model.is_octagon()) bad.push_back("experiment.model: glue runs on the octagon models");
  if (!bad.empty()) return bad;
  double eta = cfg.get_num("glue", "eta", 0.3);
  double kappa = cfg.get_num("glue", "kappa", 4.0);

  auto vs = sample_members(model, uint64_t(seed), size_t(n), [&](const UnitTangentVector& v) {
    return in_C(model, v, t, eta);
  });
  std::vector<std::pair<UnitTangentVector, double>> segs;
  for (const auto& v : vs) segs.push_back({v, t});
  GluedOrbit g = shadow_segments(model, segs, rho, kappa);
  nlohmann::json j = to_json(g);
  double worst = 0.0;
  std::string csv = "segment,offset,verify_dt\n";
  for (size_t i = 0; i < g.verify_dt.size(); ++i) {
    worst = std::max(worst, g.verify_dt[i]);
    csv += std::to_string(i) + "," + fmt17(g.offsets[i]) + "," + fmt17(g.verify_dt[i]) + "\n";
  }
  j["worst_verify_dt"] = json_num(worst);
  j["within_rho"] = worst <= rho + 1e-12;
  b.results["glue"] = j;
  b.files.push_back({"glue.csv", csv});
  return {};
}

std::vector<std::string> verb_close(const Config& cfg, const SurfaceModel& model, long seed,
                                    const std::string& outdir, ReportBundle& b) {
  (void)outdir;
  std::vector<std::string> bad;
  long n = cfg.get_int("close", "count", 20);
  if (n < 1) bad.push_back("close.count: must be at least 1");
  double t = cfg.get_num("close", "segment_t", 4.0);
  if (!(t > 0.0)) bad.push_back("close.segment_t: must be positive");
  double eps = cfg.get_num("close", "eps", 0.02);
  if (!(eps > 0.0)) bad.push_back("close.eps: must be positive");
  if (!model.is_octagon()) bad.push_back("experiment.model: close runs on the octagon models");
  if (!bad.empty()) return bad;
  double eta = cfg.get_num("close", "eta", 0.3);
  double kappa = cfg.get_num("close", "kappa", 4.0);
  double residual_tol = cfg.get_num("close", "residual_tol", 1e-8);

  auto vs = sample_members(model, uint64_t(seed), size_t(n), [&](const UnitTangentVector& v) {
    return in_G(model, v, t, eta);
  });
  struct Out {
    bool ok = false;
    std::string err;
    ClosedOrbitCandidate c;
  };
  std::vector<Out> outs = parallel_map<Out>(vs.size(), [&](size_t i) {
    Out o;
    try {
      o.c = close_orbit(model, vs[i], t, eps, kappa, residual_tol);
      o.ok = true;
    } catch (const std::exception& e) {
      o.err = e.what();
    }
    return o;
  });
  nlohmann::json rows = nlohmann::json::array();
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
    rows.push_back(row);
  }
  b.results["rows"] = rows;
  b.results["closed"] = closed;
  b.results["within_bounds"] = within;
  b.files.push_back({"close.csv", csv});
  return {};
}

std::vector<std::string> verb_enumerate(const Config& cfg, const SurfaceModel& model, long seed,
                                        const std::string& outdir, ReportBundle& b) {
  (void)seed;
  std::vector<std::string> bad;
  double l_max = cfg.get_num("enumerate", "l_max", 6.0);
  if (!(l_max > 0.0) || l_max > 8.0) bad.push_back("enumerate.l_max: must lie in (0, 8]");
  double reg = cfg.get_num("enumerate", "reg_threshold", 0.05);
  if (!(reg > 0.0)) bad.push_back("enumerate.reg_threshold: must be positive");
  if (!bad.empty()) return bad;
  auto q_list = cfg.get_list("enumerate", "q_list", {});

  GeodesicEnumeration en = enumerate_closed_geodesics(model, l_max, reg);
  std::vector<Potential> pots;
  for (double q : q_list) pots.push_back(potential_for(q));
  std::filesystem::create_directories(outdir);
  write_geodesic_store(outdir + "/geodesics.jsonl", model, en.orbits, pots);

  std::string csv = "length,residual,regular,prime,word\n";
  size_t regular = 0;
  for (const auto& g : en.orbits) {
    regular += g.regular;
    csv += fmt17(g.length) + "," + fmt17(g.residual) + "," + std::to_string(int(g.regular)) +
           "," + std::to_string(int(g.prime)) + "," + g.word + "\n";
  }
  b.results["orbit_count"] = en.orbits.size();
  b.results["regular_count"] = regular;
  b.results["words_tried"] = en.words_tried;
  b.results["refine_failures"] = en.refine_failures;
  if (!en.orbits.empty()) {
    b.results["shortest"] = json_num(en.orbits.front().length);
    b.results["longest"] = json_num(en.orbits.back().length);
  }
  b.files.push_back({"geodesics.csv", csv});
  return {};
}

std::vector<std::string> verb_gurevic(const Config& cfg, const SurfaceModel& model, long seed,
                                      const std::string& outdir, ReportBundle& b) {
  (void)seed;
  (void)outdir;
  std::vector<std::string> bad;
  double l_max = cfg.get_num("gurevic", "l_max", 6.0);
  if (!(l_max > 0.0) || l_max > 8.0) bad.push_back("gurevic.l_max: must lie in (0, 8]");
  double delta = cfg.get_num("gurevic", "delta", 0.5);
  if (!(delta > 0.0)) bad.push_back("gurevic.delta: must be positive");
  if (!bad.empty()) return bad;
  auto q_list = cfg.get_list("gurevic", "q_list", {0.0});

  std::vector<ClosedGeodesic> orbits;
  if (cfg.has("gurevic", "store"))
    orbits = load_geodesic_store(cfg.get_str("gurevic", "store"));
  else
    orbits = enumerate_closed_geodesics(model, l_max).orbits;
  b.results["orbit_count"] = orbits.size();

  nlohmann::json rows = nlohmann::json::array();
  std::string csv = "q,value,slope,residual,uncertainty,undersampled\n";
  for (double q : q_list) {
    GurevicEstimate est = gurevic_pressure(model, orbits, potential_for(q), delta,
                                            cfg.has("gurevic", "store") ? 0.0 : l_max);
    nlohmann::json row;
    row["q"] = q;
    row["estimate"] = to_json(est);
    rows.push_back(row);
    csv += fmt_g(q) + "," + fmt17(est.value) + "," + fmt17(est.slope) + "," +
           fmt17(est.residual) + "," + fmt17(est.uncertainty) + "," +
           std::to_string(int(est.undersampled)) + "\n";
  }
  b.results["rows"] = rows;
  b.files.push_back({"gurevic.csv", csv});
  return {};
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"numerical laboratory for geodesic-flow pressure experiments"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub, bool with_config = true) {
    if (with_config)
      sub->add_option("config", args.config, "experiment config file")->required();
    sub->add_option("--out", args.out, "output directory (overrides the config)");
    sub->add_option("--seed", args.seed, "random seed (overrides the config)");
    sub->add_option("--threads", args.threads, "parallelism degree (0 = all cores)");
    return sub;
  };

  CLI::App* c_run = add_common(app.add_subcommand("run", "run the experiment in the config"));
  CLI::App* c_val = app.add_subcommand("validate", "check a config without running it");
  c_val->add_option("config", args.config, "experiment config file")->required();
  app.add_subcommand("models", "list the built-in surface models");

  // pressure-module verbs
  CLI::App* c_pressure =
      add_common(app.add_subcommand("pressure", "separated-set pressure estimate"));
  CLI::App* c_gap = add_common(app.add_subcommand("gap", "pressure gap across the singular set"));
  CLI::App* c_sweta = add_common(app.add_subcommand("sweep-eta", "low-average pressure sweep"));
  CLI::App* c_swq = add_common(app.add_subcommand("sweep-q", "pressure vs Gurevic over q"));
  // orbit-set verbs
  CLI::App* c_classify =
      add_common(app.add_subcommand("classify", "tag sampled segments into the collections"));
  CLI::App* c_decompose =
      add_common(app.add_subcommand("decompose", "split segments into prefix/good/suffix"));
  CLI::App* c_glue = add_common(app.add_subcommand("glue", "chain segments into one orbit"));
  CLI::App* c_close = add_common(app.add_subcommand("close", "close segments into periodic orbits"));
  // periodic-orbit verbs
  CLI::App* c_enum =
      add_common(app.add_subcommand("enumerate", "enumerate closed geodesics into a store"));
  CLI::App* c_gur = add_common(app.add_subcommand("gurevic", "orbit-sum pressure estimate"));
  CLI::App* c_equi =
      add_common(app.add_subcommand("equidist", "closed-orbit equidistribution check"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kBadConfig;
  }

  if (app.got_subcommand("models")) return cmd_models();
  if (app.got_subcommand(c_val)) return cmd_validate(args);
  if (app.got_subcommand(c_run)) return cmd_run(args, "");
  if (app.got_subcommand(c_pressure)) return cmd_run(args, "entropy");
  if (app.got_subcommand(c_gap)) return cmd_run(args, "gap");
  if (app.got_subcommand(c_sweta)) return cmd_run(args, "eta-sweep");
  if (app.got_subcommand(c_swq)) return cmd_run(args, "q-sweep");
  if (app.got_subcommand(c_equi)) return cmd_run(args, "equidistribution");
  if (app.got_subcommand(c_classify)) return run_verb(args, "classify", verb_classify);
  if (app.got_subcommand(c_decompose)) return run_verb(args, "decompose", verb_decompose);
  if (app.got_subcommand(c_glue)) return run_verb(args, "glue", verb_glue);
  if (app.got_subcommand(c_close)) return run_verb(args, "close", verb_close);
  if (app.got_subcommand(c_enum)) return run_verb(args, "enumerate", verb_enumerate);
  if (app.got_subcommand(c_gur)) return run_verb(args, "gurevic", verb_gurevic);
  return kBadConfig;
}
