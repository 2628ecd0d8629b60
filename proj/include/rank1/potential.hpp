#pragma once
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rank1/surface.hpp"

namespace rank1 {

struct PotentialError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Weight function on the unit tangent bundle. The interesting member of the
// family is the expansion potential (minus the trace of the unstable horocycle
// curvature); the rest exist to combine with it and to test invariances.
//
// Evaluation is deterministic. Orbit integrals go through birkhoff(), which
// picks the cheapest exact route per term: the expansion part integrates a
// single Riccati pass along the orbit, constants are closed-form, sampled
// fields are quadrature over one flow pass.
class Potential;

// Trilinear grid over chart coordinates x/y plus the angle (periodic). Values
// outside the x/y box clamp to the boundary sample. Points are folded into
// the fundamental chart before lookup. holder_exponent is declared metadata
// describing the regularity of whatever was sampled into the grid; nothing
// here enforces it.
struct SampledField {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  int nx = 2, ny = 2, nth = 4;
  std::vector<float> vals; // nx*ny*nth, theta fastest
  double holder_exponent = 1.0;
  std::string label = "field";

  double at(const SurfaceModel& model, const UnitTangentVector& v) const;
};

// bump of amplitude amp centered at (cx, cy, cth), radius rad in the scaled
// chart gap, profile max(0, 1 - d/rad)^alpha. Holder with exponent alpha.
SampledField holder_bump_field(const SurfaceModel& model, double amp, double alpha, double cx,
                               double cy, double cth, double rad, int nx = 48, int ny = 48,
                               int nth = 32);

class Potential {
 public:
  enum class Kind { Zero, Constant, QPhiU, Sampled, LinComb, ErgodicAvg };

  static Potential zero();
  static Potential constant(double c);
  static Potential q_phi_u(double q);
  static Potential sampled(SampledField f);
  static Potential combination(std::vector<std::pair<double, Potential>> terms);
  // time average of base over a forward window of length T; the average of a
  // constant collapses to that constant exactly
  static Potential ergodic_average(Potential base, double T);

  Kind kind() const { return kind_; }
  const std::string& describe() const { return desc_; }

  // pointwise value
  double eval(const SurfaceModel& model, const UnitTangentVector& v) const;

  // integral of the potential along the orbit of v over [0, t]
  double birkhoff(const SurfaceModel& model, const UnitTangentVector& v, double t,
                  double dt = 0.05) const;

  // flattened structure: total coefficient in front of the expansion
  // potential, total additive constant, and whether any term needs pointwise
  // quadrature (sampled fields, ergodic averages of non-constants)
  double phi_u_coeff() const;
  double constant_part() const;
  bool has_general_part() const;

  double avg_window() const { return avg_T_; } // ErgodicAvg only
  const Potential& base() const;               // ErgodicAvg only
  const SampledField& field() const;           // Sampled only
  const std::vector<std::pair<double, Potential>>& terms() const; // LinComb only
  double scalar() const { return c_; }         // Constant: c, QPhiU: q

 private:
  Potential() = default;
  Kind kind_ = Kind::Zero;
  double c_ = 0.0;    // constant value or phi_u coefficient
  double avg_T_ = 0.0;
  std::shared_ptr<const SampledField> field_;
  std::shared_ptr<const Potential> base_;
  std::vector<std::pair<double, Potential>> terms_;
  std::string desc_ = "zero";
};

} // namespace rank1
