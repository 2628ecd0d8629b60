#pragma once
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rank1/foliation.hpp"
#include "rank1/linearization.hpp"
#include "rank1/orbitsets.hpp"
#include "rank1/periodic.hpp"
#include "rank1/pressure.hpp"

namespace rank1 {

// JSON views of the result types. Non-finite values are encoded as the
// strings "-inf" / "inf" / "nan" so they survive a round trip (bare JSON has
// no literals for them).
nlohmann::json json_num(double v);
nlohmann::json to_json(const PressureEstimate& est);
nlohmann::json to_json(const GurevicEstimate& est);
nlohmann::json to_json(const GapVerdict& verdict);
nlohmann::json to_json(const BoundedRangeResult& r);
nlohmann::json to_json(const DecayFit& fit);
nlohmann::json to_json(const RegularizedSegment& seg);
nlohmann::json to_json(const Decomposition& dec);
nlohmann::json to_json(const GluedOrbit& orbit);
nlohmann::json to_json(const ClosedOrbitCandidate& cand);
nlohmann::json to_json(const ClosedGeodesic& geo);
nlohmann::json model_json(const SurfaceModel& model);

// plot-ready table: label,eps,t,count,log_lambda,normalized (= log_lambda/t)
std::string pressure_csv(const PressureEstimate& est, const std::string& label);

struct ReportBundle {
  nlohmann::json results;
  // extra output files, name -> bytes (csv plot data, stores)
  std::vector<std::pair<std::string, std::string>> files;
};

// Writes report.json, the bundle's files, and manifest.json under outdir.
// report.json carries the config hash, model parameters and results and is
// byte-stable for a fixed config and seed; the manifest is the only file
// that records wall-clock time and the parallelism degree.
void write_report_bundle(const std::string& outdir, const Config& cfg, const SurfaceModel& model,
                         const std::string& kind, long seed, const ReportBundle& bundle,
                         const std::string& error = "");

} // namespace rank1
