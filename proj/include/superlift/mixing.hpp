#pragma once

// Gamma mixing law for the reversion speeds and its N-point quantile lift.
// Component i (1-based) sits at the (2i-1)/(2N) quantile and carries weight 1/N.

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <vector>

#include "superlift/errors.hpp"

namespace superlift {

struct MixingLaw {
  double alpha = 1.0;  // shape
  double beta = 1.0;   // scale

  [[nodiscard]] double mean() const { return alpha * beta; }

  [[nodiscard]] double cdf(double r) const {
    if (r <= 0.0) return 0.0;
    return boost::math::gamma_p(alpha, r / beta);
  }

  [[nodiscard]] double pdf(double r) const {
    if (r <= 0.0) return 0.0;
    return boost::math::gamma_p_derivative(alpha, r / beta) / beta;
  }
};

inline void validate(const MixingLaw& law) {
  if (!(law.alpha > 0.0) || !(law.beta > 0.0) || !std::isfinite(law.alpha) ||
      !std::isfinite(law.beta)) {
    std::ostringstream os;
    os << "invalid gamma mixing law (alpha=" << law.alpha << ", beta=" << law.beta << ")";
    throw ConfigError(os.str());
  }
}

/// r with CDF(r) = p. Bracketing, then Newton steps on the regularized
/// incomplete gamma that fall back to bisection whenever they leave the bracket.
inline double gamma_quantile(const MixingLaw& law, double p) {
  validate(law);
  if (!(p > 0.0 && p < 1.0)) {
    std::ostringstream os;
    os << "gamma_quantile: probability " << p << " outside (0,1)";
    throw DomainError(os.str());
  }
  double lo = 0.0;
  double hi = law.alpha * law.beta * (1.0 + 40.0 / std::sqrt(law.alpha));
  while (law.cdf(hi) < p) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw DomainError("gamma_quantile: bracket overflow");
  }

  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 500; ++iter) {
    const double f = law.cdf(x) - p;
    if (f == 0.0) return x;
    if (f < 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    const double d = law.pdf(x);
    double next = (d > 0.0 && std::isfinite(d)) ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 4.0 * std::numeric_limits<double>::epsilon() * x ||
        hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      return next;
    }
    x = next;
  }
  return x;
}

struct LiftGrid {
  std::size_t n = 0;
  std::vector<double> speeds;  // strictly increasing r_i

  [[nodiscard]] double weight() const { return 1.0 / static_cast<double>(n); }
  [[nodiscard]] std::size_t size() const { return n; }
  [[nodiscard]] double operator[](std::size_t i) const { return speeds[i]; }

  /// Quantile level of component i (0-based).
  [[nodiscard]] double level(std::size_t i) const {
    return (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
  }
};

inline LiftGrid build_lift(const MixingLaw& law, std::size_t n) {
  if (n < 1) throw ConfigError("build_lift: n must be >= 1");
  LiftGrid grid;
  grid.n = n;
  grid.speeds.resize(n);
  for (std::size_t i = 0; i < n; ++i) grid.speeds[i] = gamma_quantile(law, grid.level(i));
  return grid;
}

/// A grid with explicitly given speeds (single-component tests, custom lifts).
inline LiftGrid custom_lift(std::vector<double> speeds) {
  if (speeds.empty()) throw ConfigError("custom_lift: need at least one speed");
  for (std::size_t i = 0; i < speeds.size(); ++i) {
    if (!(speeds[i] > 0.0)) throw ConfigError("custom_lift: speeds must be positive");
    if (i > 0 && !(speeds[i] > speeds[i - 1])) {
      throw ConfigError("custom_lift: speeds must be strictly increasing");
    }
  }
  LiftGrid grid;
  grid.n = speeds.size();
  grid.speeds = std::move(speeds);
  return grid;
}

}  // namespace superlift
