#pragma once
#include <string>
#include <vector>

#include "rank1/config.hpp"
#include "rank1/report.hpp"
#include "rank1/surface.hpp"

namespace rank1 {

// recognized [experiment] kind values
const std::vector<std::string>& experiment_kinds();

// every violated constraint, one message per finding, each naming the
// config field it concerns; empty result means the config is runnable
std::vector<std::string> validate_experiment_config(const Config& cfg);

// model named or embedded by the config: [experiment] model = <name>,
// model_file = <path>, or an inline [model] section
SurfaceModel model_from_experiment_config(const Config& cfg);

struct ExperimentOutcome {
  ReportBundle bundle;
  bool failed = false; // bundle then holds whatever partial results exist
  std::string error;
};

// runs a validated config against the model; computation failures are
// captured in the outcome, never thrown
ExperimentOutcome run_experiment(const Config& cfg, const SurfaceModel& model, long seed);

// Randomized matrix-Riccati property trials, shared by the CLI experiment
// and the acceptance suite. Each category runs `trials` independent cases;
// violations are tolerance breaches, exercised counts how many cases met a
// conditional hypothesis (decay needs uniformly positive solutions).
struct RiccatiSuiteResult {
  size_t trials = 0;
  size_t domain_violations = 0;
  size_t monotone_violations = 0;
  size_t gap_violations = 0;
  size_t decay_violations = 0;
  size_t decay_exercised = 0;
  size_t order_violations = 0;
  double worst_domain_breach = 0.0; // most negative eigenvalue slack seen
  double worst_monotone_breach = 0.0;
  double tanh_error = 0.0; // worst |u_tau(0) - tanh(tau)| over the suite
  bool pass(double tol) const {
    return domain_violations == 0 && monotone_violations == 0 && gap_violations == 0 &&
           decay_violations == 0 && order_violations == 0 && tanh_error <= tol;
  }
};
RiccatiSuiteResult riccati_property_suite(size_t trials, double tol, uint64_t seed);

} // namespace rank1
