#pragma once
#include <cstdint>
#include <cmath>

namespace rank1 {

// splitmix64: used to derive independent substream seeds from (seed, stream id)
// so results do not depend on how work is chunked across threads.
inline uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// xoshiro256** — small, fast, and we control the exact double conversion,
// so streams are reproducible across platforms and standard libraries.
class Rng {
public:
  Rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t x = seed ^ (0x6a09e667f3bcc909ull + stream * 0x9e3779b97f4a7c15ull);
    for (auto& w : s_) w = splitmix64(x);
  }
  uint64_t next() {
    uint64_t result = rotl(s_[1] * 5, 7) * 9;
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }
  // uniform in [0,1)
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  // standard normal via Box-Muller (no cached spare: keeps state minimal)
  double normal() {
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  uint64_t below(uint64_t n) { return next() % n; }

private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

// Additive low-discrepancy sequence (generalized golden ratio / R_d sequence).
// Deterministic, dimension up to 4; good enough as a quasi-uniform seed grid.
class LowDiscrepancy {
public:
  explicit LowDiscrepancy(int dim, uint64_t offset = 0) : dim_(dim), n_(offset) {
    // plastic-constant family: alpha_k = phi_d^{-(k+1)}
    double phi = 2.0;
    for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / (dim + 1));
    double a = 1.0;
    for (int k = 0; k < dim_; ++k) { a /= phi; alpha_[k] = a; }
  }
  // fills x[0..dim) with the next point in [0,1)^dim
  void next(double* x) {
    ++n_;
    for (int k = 0; k < dim_; ++k) {
      double v = alpha_[k] * double(n_);
      x[k] = v - std::floor(v);
    }
  }

private:
  int dim_;
  uint64_t n_;
  double alpha_[4] = {0, 0, 0, 0};
};

} // namespace rank1
