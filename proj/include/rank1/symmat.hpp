#pragma once
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rank1 {

// Symmetric m x m matrix, m in {1,2}. This is all the Riccati and Jacobi
// machinery needs (codimension of the flow direction in a surface is 1;
// the synthetic warped-product signals use m = 2), so a fixed-size type
// beats a general matrix library here.
struct SymMat {
  int m = 1;
  // m=1: a; m=2: [[a, b], [b, c]]
  double a = 0.0, b = 0.0, c = 0.0;

  static SymMat zero(int m) { return SymMat{m, 0.0, 0.0, 0.0}; }
  static SymMat identity(int m) { return SymMat{m, 1.0, 0.0, 1.0}; }
  static SymMat scalar(double v) { return SymMat{1, v, 0.0, 0.0}; }
  static SymMat diag(double x, double y) { return SymMat{2, x, 0.0, y}; }

  double trace() const { return m == 1 ? a : a + c; }

  // Frobenius norm
  double norm() const {
    if (m == 1) return std::fabs(a);
    return std::sqrt(a * a + 2.0 * b * b + c * c);
  }

  double min_eig() const {
    if (m == 1) return a;
    double h = 0.5 * (a + c);
    double r = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return h - r;
  }
  double max_eig() const {
    if (m == 1) return a;
    double h = 0.5 * (a + c);
    double r = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
    return h + r;
  }

  SymMat operator+(const SymMat& o) const { return {m, a + o.a, b + o.b, c + o.c}; }
  SymMat operator-(const SymMat& o) const { return {m, a - o.a, b - o.b, c - o.c}; }
  SymMat operator*(double s) const { return {m, a * s, b * s, c * s}; }

  // symmetrized square U*U (exactly symmetric for symmetric U)
  SymMat square() const {
    if (m == 1) return {1, a * a, 0.0, 0.0};
    return {2, a * a + b * b, b * (a + c), b * b + c * c};
  }

  // matrix product then symmetrization (A*B + B*A)/2
  SymMat symprod(const SymMat& o) const {
    if (m == 1) return {1, a * o.a, 0.0, 0.0};
    double p00 = a * o.a + b * o.b;
    double p01 = a * o.b + b * o.c;
    double p10 = b * o.a + c * o.b;
    double p11 = b * o.b + c * o.c;
    return {2, p00, 0.5 * (p01 + p10), p11};
  }
};

inline SymMat operator*(double s, const SymMat& u) { return u * s; }

// Distance used when comparing two Riccati solutions along one orbit:
// absolute difference of traces. It is dominated by m * ||A - B||.
inline double trace_semimetric(const SymMat& A, const SymMat& B) {
  if (A.m != B.m) throw std::invalid_argument("trace_semimetric: dimension mismatch");
  return std::fabs(A.trace() - B.trace());
}

} // namespace rank1
