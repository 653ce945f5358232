#pragma once

// Exact one-step scheme for the tempered-stable driven Ornstein-Uhlenbeck
// process dS = -a2 S dt + dL, L a subordinator with Levy measure nu.
//
// Over one step, S' = s e^{-a2 dt} + I with I = int_0^dt e^{-a2 (dt-u)} dL_u.
// With E = e^{a2 dt}, t = e^{a2 v} (v the time to the step end) and the
// identity e^{-bty} = e^{-bEy} + (e^{-bty} - e^{-bEy}), the Levy density of I
// splits into
//
//   Theta:  a' y^{-1-c} e^{-bEy},  a' = (a/a2)(1 - E^{-c})/c,
//   Xi:     a compound Poisson sum whose jumps are Gamma(1-c, rate b t)
//           with t on [1, E] drawn from the density prop. to t^{c-1}(1 - t^{-c})/c,
//           and whose rate is
//           Lambda = (a/a2) Gamma(1-c) b^c (E^c - 1 - c a2 dt)/c^2.
//
// Theta is a tempered stable variate for 0 < c < 1, a gamma variate for
// c = 0 and a compound Poisson sum with gamma jumps for c < 0.

#include <cmath>
#include <cstdint>
#include <sstream>

#include "superlift/errors.hpp"
#include "superlift/levy.hpp"
#include "superlift/random.hpp"

namespace superlift {

struct TsouCoeffs {
  double a2 = 1.0;  // reversion speed
  TemperedStableMeasure measure;
  double dt = 0.01;
};

inline void validate(const TsouCoeffs& c) {
  validate(c.measure);
  if (!(c.a2 > 0.0) || !(c.dt > 0.0) || !std::isfinite(c.a2) || !std::isfinite(c.dt)) {
    std::ostringstream os;
    os << "invalid tempered-stable OU coefficients (a2=" << c.a2 << ", dt=" << c.dt << ")";
    throw ConfigError(os.str());
  }
}

enum class TsouMethod {
  exact,             // Theta + Poisson-many Xi pieces
  compound_poisson,  // direct jump-by-jump simulation, c_nu < 0 only
};

/// The per-step parameters of the decomposition.
struct TsouParts {
  double decay = 1.0;          // e^{-a2 dt}
  double theta_coef = 0.0;     // a'
  double theta_tilt = 0.0;     // b E
  double theta_scale = 0.0;    // stable scale (c > 0) or jump rate (c < 0)
  double poisson_rate = 0.0;   // Lambda

  /// Parts of the same step with a_nu multiplied by `factor`.
  [[nodiscard]] TsouParts scaled(double factor) const {
    return {decay, theta_coef * factor, theta_tilt, theta_scale * factor,
            poisson_rate * factor};
  }
};

namespace detail {

/// (e^x - 1 - x) / c^2 with x = c L, continuous at c = 0 (value L^2/2).
inline double expm1_minus_over_sq(double c, double L) {
  const double x = c * L;
  if (std::abs(x) < 1e-4) {
    return 0.5 * L * L * (1.0 + x / 3.0 + x * x / 12.0 + x * x * x / 60.0);
  }
  return (std::expm1(x) - x) / (c * c);
}

}  // namespace detail

inline TsouParts tsou_parts(const TsouCoeffs& c) {
  const auto& m = c.measure;
  const double L = c.a2 * c.dt;
  TsouParts p;
  p.decay = std::exp(-L);
  if (m.a_nu == 0.0) return p;
  p.theta_coef = (m.a_nu / c.a2) * detail::expm1_over(-m.c_nu, L);
  p.theta_tilt = m.b_nu * std::exp(L);
  if (m.c_nu > 0.0) {
    p.theta_scale = p.theta_coef * std::tgamma(1.0 - m.c_nu) / m.c_nu;
  } else if (m.c_nu < 0.0) {
    p.theta_scale = p.theta_coef * std::tgamma(-m.c_nu) * std::pow(p.theta_tilt, m.c_nu);
  }
  p.poisson_rate = (m.a_nu / c.a2) * std::tgamma(1.0 - m.c_nu) * std::pow(m.b_nu, m.c_nu) *
                   detail::expm1_minus_over_sq(m.c_nu, L);
  return p;
}

/// Rate of the Poisson number of Xi pieces in one step.
inline double tsou_poisson_intensity(const TsouCoeffs& c) {
  const double rate = tsou_parts(c).poisson_rate;
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    std::ostringstream os;
    os << "tsou_poisson_intensity: inconsistent rate " << rate;
    throw DomainError(os.str());
  }
  return rate;
}

namespace detail {

/// t on [1, E] with density prop. to t^{c-1} g(t), g(t) = (1 - t^{-c})/c
/// (ln t at c = 0): proposal from t^{c-1}, accept with g(t)/g(E).
inline double sample_xi_time(RandomStream& rs, double c, double L) {
  const double gE = expm1_over(-c, L);
  for (long k = 0; k < kSamplerRetryCap; ++k) {
    const double u = rs.uniform();
    // log t = log(1 + u (E^c - 1)) / c, the c -> 0 limit being u L.
    double log_t;
    if (std::abs(c * L) < 1e-8) {
      log_t = u * L;
    } else {
      log_t = std::log1p(u * std::expm1(c * L)) / c;
    }
    const double gt = expm1_over(-c, log_t);
    if (rs.uniform() * gE <= gt) return std::exp(log_t);
  }
  throw SamplerError("tsou: Xi time sampler retry cap reached");
}

inline double sample_theta(RandomStream& rs, const TemperedStableMeasure& m,
                           const TsouParts& p) {
  if (p.theta_coef <= 0.0) return 0.0;
  const double c = m.c_nu;
  if (c > 0.0) return sample_tempered_stable(rs, c, p.theta_scale, p.theta_tilt);
  if (c == 0.0) return sample_gamma(rs, p.theta_coef, 1.0 / p.theta_tilt);
  const std::uint64_t n = sample_poisson(rs, p.theta_scale);
  double sum = 0.0;
  for (std::uint64_t k = 0; k < n; ++k) sum += sample_gamma(rs, -c, 1.0 / p.theta_tilt);
  return sum;
}

}  // namespace detail

/// Decayed Levy increment I alone (S' - s e^{-a2 dt}).
inline double tsou_increment(const TsouCoeffs& c, const TsouParts& p, RandomStream& rs,
                             TsouMethod method = TsouMethod::exact) {
  const auto& m = c.measure;
  if (m.a_nu == 0.0 || p.theta_coef == 0.0) return 0.0;
  if (method == TsouMethod::compound_poisson) {
    if (!m.finite_activity()) {
      throw ConfigError("tsou: compound-Poisson method requires c_nu < 0");
    }
    const std::uint64_t n = sample_poisson(rs, total_mass(m) * c.dt);
    double sum = 0.0;
    for (std::uint64_t k = 0; k < n; ++k) {
      const double arrival = c.dt * rs.uniform();
      const double size = sample_gamma(rs, -m.c_nu, 1.0 / m.b_nu);
      sum += size * std::exp(-c.a2 * (c.dt - arrival));
    }
    return sum;
  }

  double sum = detail::sample_theta(rs, m, p);
  const std::uint64_t n = sample_poisson(rs, p.poisson_rate);
  const double L = c.a2 * c.dt;
  for (std::uint64_t k = 0; k < n; ++k) {
    const double t = detail::sample_xi_time(rs, m.c_nu, L);
    sum += sample_gamma(rs, 1.0 - m.c_nu, 1.0 / (m.b_nu * t));
  }
  return sum;
}

inline double tsou_step(const TsouCoeffs& c, double s, RandomStream& rs,
                        TsouMethod method = TsouMethod::exact) {
  const TsouParts p = tsou_parts(c);
  return s * p.decay + tsou_increment(c, p, rs, method);
}

}  // namespace superlift
