#include "rank1/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "rank1/parallel.hpp"

namespace rank1 {

nlohmann::json json_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

namespace {

nlohmann::json json_vec(const std::vector<double>& xs) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : xs) a.push_back(json_num(x));
  return a;
}

nlohmann::json vector_json(const UnitTangentVector& v) {
  return {{"chart", v.chart}, {"x", json_num(v.x)}, {"y", json_num(v.y)},
          {"theta", json_num(v.theta)}};
}

} // namespace

nlohmann::json to_json(const PressureEstimate& est) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& pe : est.per_eps) {
    nlohmann::json counts = nlohmann::json::array();
    for (size_t c : pe.counts) counts.push_back(c);
    nlohmann::json sat = nlohmann::json::array();
    for (char s : pe.saturated) sat.push_back(bool(s));
    nlohmann::json flo = nlohmann::json::array();
    for (char f : pe.floored) flo.push_back(bool(f));
    per.push_back({{"eps", json_num(pe.eps)},
                   {"log_lambda", json_vec(pe.log_lambda)},
                   {"counts", counts},
                   {"saturated", sat},
                   {"floored", flo},
                   {"slope", json_num(pe.slope)},
                   {"intercept", json_num(pe.intercept)},
                   {"residual", json_num(pe.residual)}});
  }
  return {{"value", json_num(est.value)},
          {"uncertainty", json_num(est.uncertainty)},
          {"empty", est.empty},
          {"t_grid", json_vec(est.t_grid)},
          {"per_eps", per},
          {"extrapolated", json_num(est.extrapolated)},
          {"eps_spread", json_num(est.eps_spread)},
          {"restart_spread", json_num(est.restart_spread)},
          {"monotone_in_eps", est.monotone_in_eps},
          {"seed_density_warning", est.seed_density_warning},
          {"density_shift", json_num(est.density_shift)},
          {"constraint", est.constraint},
          {"potential", est.potential_desc}};
}

nlohmann::json to_json(const GurevicEstimate& est) {
  nlohmann::json counts = nlohmann::json::array();
  for (size_t c : est.counts) counts.push_back(c);
  return {{"value", json_num(est.value)},
          {"delta", json_num(est.delta)},
          {"t_max", json_num(est.T_max)},
          {"window_mid", json_vec(est.window_mid)},
          {"log_sum", json_vec(est.log_sum)},
          {"counts", counts},
          {"slope", json_num(est.slope)},
          {"intercept", json_num(est.intercept)},
          {"residual", json_num(est.residual)},
          {"log_total", json_num(est.log_total)},
          {"raw_rate", json_num(est.raw_rate)},
          {"corrected", est.corrected},
          {"uncertainty", json_num(est.uncertainty)},
          {"undersampled", est.undersampled},
          {"empty", est.empty}};
}

nlohmann::json to_json(const GapVerdict& verdict) {
  return {{"full_value", json_num(verdict.full_value)},
          {"sing_value", json_num(verdict.sing_value)},
          {"margin", json_num(verdict.margin)},
          {"uncertainty", json_num(verdict.uncertainty)},
          {"verdict", verdict.verdict},
          {"sing_empty", verdict.sing_empty}};
}

nlohmann::json to_json(const BoundedRangeResult& r) {
  return {{"sup_sing_phi", json_num(r.sup_sing_phi)},
          {"inf_phi", json_num(r.inf_phi)},
          {"h_full", json_num(r.h_full)},
          {"h_sing", json_num(r.h_sing)},
          {"lhs", json_num(r.lhs)},
          {"rhs", json_num(r.rhs)},
          {"holds", r.holds},
          {"sing_empty", r.sing_empty}};
}

nlohmann::json to_json(const DecayFit& fit) {
  return {{"rate", json_num(fit.rate)},
          {"intercept", json_num(fit.intercept)},
          {"residual", json_num(fit.residual)},
          {"collapsed", fit.collapsed},
          {"times", json_vec(fit.times)},
          {"values", json_vec(fit.values)}};
}

nlohmann::json to_json(const RegularizedSegment& seg) {
  return {{"w", vector_json(seg.w)},
          {"t", json_num(seg.t)},
          {"lambda_start", json_num(seg.lambda_start)},
          {"lambda_end", json_num(seg.lambda_end)},
          {"stable_arc", json_num(seg.stable_arc)},
          {"unstable_arc", json_num(seg.unstable_arc)},
          {"worst_mid_sing_gap", json_num(seg.worst_mid_sing_gap)},
          {"endpoints_regular", seg.endpoints_regular},
          {"mid_near_sing", seg.mid_near_sing},
          {"eta_checked", json_num(seg.eta_checked)},
          {"T_used", json_num(seg.T_used)},
          {"delta_used", json_num(seg.delta_used)}};
}

nlohmann::json to_json(const Decomposition& dec) {
  return {{"p", json_num(dec.p)},
          {"g", json_num(dec.g)},
          {"s", json_num(dec.s)},
          {"t", json_num(dec.t)},
          {"eta", json_num(dec.eta)}};
}

nlohmann::json to_json(const GluedOrbit& orbit) {
  nlohmann::json ways = nlohmann::json::array();
  for (const auto& [off, v] : orbit.waypoints)
    ways.push_back({{"offset", json_num(off)}, {"v", vector_json(v)}});
  return {{"w", vector_json(orbit.w)},
          {"waypoints", ways},
          {"offsets", json_vec(orbit.offsets)},
          {"transitions", json_vec(orbit.transitions)},
          {"max_transition", json_num(orbit.max_transition)},
          {"verify_dt", json_vec(orbit.verify_dt)}};
}

nlohmann::json to_json(const ClosedOrbitCandidate& cand) {
  return {{"w", vector_json(cand.w)},
          {"period", json_num(cand.period)},
          {"residual", json_num(cand.residual)},
          {"shadow_dt", json_num(cand.shadow_dt)},
          {"transition", json_num(cand.transition)},
          {"iterations", cand.iterations},
          {"checkpoints", cand.checkpoints.size()},
          {"leg_time", json_num(cand.leg_time)}};
}

nlohmann::json to_json(const ClosedGeodesic& geo) {
  return {{"rep", vector_json(geo.rep)},
          {"length", json_num(geo.length)},
          {"residual", json_num(geo.residual)},
          {"prime", geo.prime},
          {"regular", geo.regular},
          {"min_lambda", json_num(geo.min_lambda)},
          {"word", geo.word},
          {"conj_key", geo.conj_key}};
}

nlohmann::json model_json(const SurfaceModel& model) {
  nlohmann::json j = nlohmann::json::object();
  Config def = model.definition();
  for (const auto& [key, value] : def.entries("model")) j[key] = value;
  return j;
}

std::string pressure_csv(const PressureEstimate& est, const std::string& label) {
  std::string out = "label,eps,t,count,log_lambda,normalized,saturated,floored\n";
  char line[256];
  for (const auto& pe : est.per_eps) {
    for (size_t i = 0; i < est.t_grid.size(); ++i) {
      double t = est.t_grid[i];
      double ll = pe.log_lambda[i];
      int sat = i < pe.saturated.size() ? pe.saturated[i] : 0;
      int flo = i < pe.floored.size() ? pe.floored[i] : 0;
      std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%zu,%.17g,%.17g,%d,%d\n", label.c_str(),
                    pe.eps, t, pe.counts[i], ll, t > 0 ? ll / t : 0.0, sat, flo);
      out += line;
    }
  }
  return out;
}

void write_report_bundle(const std::string& outdir, const Config& cfg, const SurfaceModel& model,
                         const std::string& kind, long seed, const ReportBundle& bundle,
                         const std::string& error) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);

  nlohmann::json report;
  report["schema_version"] = 1;
  report["kind"] = kind;
  report["config_hash"] = hex64(cfg.hash());
  report["model"] = model_json(model);
  report["seed"] = seed;
  report["results"] = bundle.results;
  if (!error.empty()) report["error"] = error;
  {
    std::ofstream f(fs::path(outdir) / "report.json");
    if (!f) throw std::runtime_error("cannot write report.json under " + outdir);
    f << report.dump(2) << "\n";
  }

  for (const auto& [name, bytes] : bundle.files) {
    std::ofstream f(fs::path(outdir) / name);
    if (!f) throw std::runtime_error("cannot write " + name + " under " + outdir);
    f << bytes;
  }

  // everything environment-specific lives here, keeping report.json
  // byte-stable across machines and thread counts
  nlohmann::json manifest;
  manifest["config_hash"] = hex64(cfg.hash());
  manifest["config"] = cfg.canonical();
  manifest["schema_version"] = 1;
  manifest["parallelism"] = effective_degree();
  manifest["hardware_threads"] = unsigned(std::thread::hardware_concurrency());
#if defined(__VERSION__)
  manifest["compiler"] = __VERSION__;
#endif
  manifest["written_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  if (!error.empty()) manifest["error"] = error;
  {
    std::ofstream f(fs::path(outdir) / "manifest.json");
    if (!f) throw std::runtime_error("cannot write manifest.json under " + outdir);
    f << manifest.dump(2) << "\n";
  }
}

} // namespace rank1
