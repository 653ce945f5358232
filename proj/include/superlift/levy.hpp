#pragma once

// Tempered-stable Levy measure
//
//   nu(dz) = a_nu * exp(-b_nu z) * z^(-1-c_nu) dz,   z > 0,
//
// with its moments M_k = int z^k nu(dz) and the two exponential integrals
// that drive the generalized Riccati equations:
//
//   psi_neg(u) = int (1 - exp(-u z)) nu(dz)    u >= 0
//   psi_pos(u) = int (exp(u z) - 1) nu(dz)     0 <= u <= b_nu
//
// Closed forms (c != 0):
//   psi_neg(u) = a Gamma(1-c) b^c ((1 + u/b)^c - 1) / c
//   psi_pos(u) = a Gamma(1-c) b^c (1 - (1 - u/b)^c) / c
// and the c -> 0 limits a ln(1 + u/b), -a ln(1 - u/b). Both are evaluated
// as expm1(c L)/c so the limit is reached continuously.

#include <cmath>
#include <sstream>

#include "superlift/errors.hpp"

namespace superlift {

struct TemperedStableMeasure {
  double a_nu = 0.0;  // jump frequency scale
  double b_nu = 1.0;  // exponential tilt
  double c_nu = 0.0;  // small-jump activity index, < 1

  /// Same measure with a_nu multiplied by `factor` (>= 0).
  [[nodiscard]] TemperedStableMeasure scaled(double factor) const {
    return {a_nu * factor, b_nu, c_nu};
  }

  [[nodiscard]] bool is_zero() const { return a_nu == 0.0; }

  /// Finite activity (compound Poisson) iff c_nu < 0.
  [[nodiscard]] bool finite_activity() const { return c_nu < 0.0; }
};

inline void validate(const TemperedStableMeasure& m) {
  if (!(m.a_nu >= 0.0) || !(m.b_nu > 0.0) || !(m.c_nu < 1.0) ||
      !std::isfinite(m.a_nu) || !std::isfinite(m.b_nu) || !std::isfinite(m.c_nu)) {
    std::ostringstream os;
    os << "invalid tempered-stable measure (a_nu=" << m.a_nu << ", b_nu=" << m.b_nu
       << ", c_nu=" << m.c_nu << "): need a_nu >= 0, b_nu > 0, c_nu < 1";
    throw ConfigError(os.str());
  }
}

namespace detail {

/// expm1(c * L) / c, continuous at c = 0 where it equals L.
inline double expm1_over(double c, double L) {
  const double x = c * L;
  if (std::abs(x) < 1e-8) {
    return L * (1.0 + 0.5 * x + x * x / 6.0);
  }
  return std::expm1(x) / c;
}

}  // namespace detail

/// M_k = a_nu Gamma(k - c_nu) b_nu^(c_nu - k).
inline double moment_mk(const TemperedStableMeasure& m, int k) {
  if (k < 1) throw DomainError("moment_mk: k must be >= 1");
  if (m.a_nu == 0.0) return 0.0;
  return m.a_nu * std::tgamma(k - m.c_nu) * std::pow(m.b_nu, m.c_nu - k);
}

/// a_nu such that the first moment equals `target_m1`.
inline double calibrate_a_nu(double b_nu, double c_nu, double target_m1) {
  if (!(b_nu > 0.0) || !(c_nu < 1.0)) {
    throw ConfigError("calibrate_a_nu: need b_nu > 0 and c_nu < 1");
  }
  if (target_m1 < 0.0) throw ConfigError("calibrate_a_nu: target M1 must be >= 0");
  return target_m1 * std::pow(b_nu, 1.0 - c_nu) / std::tgamma(1.0 - c_nu);
}

/// Total mass nu(0, inf) = a Gamma(-c) b^c; finite only for c_nu < 0.
inline double total_mass(const TemperedStableMeasure& m) {
  if (m.a_nu == 0.0) return 0.0;
  if (!m.finite_activity()) {
    throw DomainError("total_mass: infinite activity for c_nu >= 0");
  }
  return m.a_nu * std::tgamma(-m.c_nu) * std::pow(m.b_nu, m.c_nu);
}

/// int (1 - e^{-u z}) nu(dz).
inline double levy_integral_neg(const TemperedStableMeasure& m, double u) {
  if (!(u >= 0.0)) throw DomainError("levy_integral_neg: u must be >= 0");
  if (m.a_nu == 0.0 || u == 0.0) return 0.0;
  const double L = std::log1p(u / m.b_nu);
  return m.a_nu * std::tgamma(1.0 - m.c_nu) * std::pow(m.b_nu, m.c_nu) *
         detail::expm1_over(m.c_nu, L);
}

/// int (e^{u z} - 1) nu(dz). Finite for u < b_nu, and at u = b_nu when
/// c_nu > 0; anything beyond is a divergent exponential moment.
inline double levy_integral_pos(const TemperedStableMeasure& m, double u) {
  if (!(u >= 0.0)) throw DomainError("levy_integral_pos: u must be >= 0");
  if (m.a_nu == 0.0 || u == 0.0) return 0.0;
  const double b = m.b_nu;
  const double c = m.c_nu;
  const double scale = m.a_nu * std::tgamma(1.0 - c) * std::pow(b, c);
  if (u > b || (u == b && c <= 0.0)) {
    std::ostringstream os;
    os << "levy_integral_pos: exponential moment diverges at u=" << u << " (b_nu=" << b
       << ", c_nu=" << c << ")";
    throw DomainError(os.str());
  }
  if (u == b) return scale / c;
  const double L = std::log1p(-u / b);
  return -scale * detail::expm1_over(c, L);
}

/// Largest admissible argument of levy_integral_pos.
inline bool levy_pos_in_domain(const TemperedStableMeasure& m, double u) {
  if (m.a_nu == 0.0) return true;
  return u < m.b_nu || (u == m.b_nu && m.c_nu > 0.0);
}

/// Density of nu at z > 0.
inline double levy_density(const TemperedStableMeasure& m, double z) {
  return m.a_nu * std::exp(-m.b_nu * z) * std::pow(z, -1.0 - m.c_nu);
}

}  // namespace superlift
