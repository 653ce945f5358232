#pragma once

// Reproducible random streams and the variate generators used by the exact
// steppers: inverse Gaussian, gamma, Poisson, one-sided (tempered) stable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>

#include "superlift/errors.hpp"

namespace superlift {

/// A 64-bit Mersenne Twister keyed by (master_seed, stream_id). Distinct ids
/// under one master seed get decorrelated initial states through seed_seq.
class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}

  RandomStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : master_seed_(master_seed), stream_id_(stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(master_seed),
                      static_cast<std::uint32_t>(master_seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x5eed1f7u};
    engine_.seed(seq);
  }

  [[nodiscard]] std::uint64_t master_seed() const { return master_seed_; }
  [[nodiscard]] std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() { return normal_(engine_); }

  double exponential() { return -std::log(uniform()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline constexpr long kSamplerRetryCap = 1000000;

/// Inverse Gaussian with mean mu and shape lambda (variance mu^3/lambda),
/// Michael-Schucany-Haas transformation.
inline double sample_inverse_gaussian(RandomStream& rs, double mu, double lambda) {
  const double n = rs.normal();
  const double w = mu * n * n / (2.0 * lambda);
  const double x = mu / (1.0 + w + std::sqrt(w * (2.0 + w)));
  if (rs.uniform() * (mu + x) <= mu) return x;
  return mu * mu / x;
}

/// Density proportional to y^{-1} exp(-lambda (y - mu)^2 / (2 mu^2 y)), the
/// kernel with the y^{-1} prefactor. With y = mu e^v, v has density
/// proportional to exp(-omega cosh v), omega = lambda/mu; sampled by rejection
/// from N(0, 1/omega) using cosh v >= 1 + v^2/2.
inline double sample_inverse_gaussian_alt(RandomStream& rs, double mu, double lambda) {
  const double omega = lambda / mu;
  const double sd = 1.0 / std::sqrt(omega);
  for (long k = 0; k < kSamplerRetryCap; ++k) {
    const double v = sd * rs.normal();
    const double excess = std::cosh(v) - 1.0 - 0.5 * v * v;
    if (rs.uniform() <= std::exp(-omega * excess)) return mu * std::exp(v);
  }
  std::ostringstream os;
  os << "sample_inverse_gaussian_alt: retry cap reached (mu=" << mu << ", lambda=" << lambda
     << ")";
  throw SamplerError(os.str());
}

/// Gamma(shape, scale), Marsaglia-Tsang; shape < 1 through G(shape+1) U^{1/shape}.
inline double sample_gamma(RandomStream& rs, double shape, double scale) {
  if (shape < 1.0) {
    const double g = sample_gamma(rs, shape + 1.0, 1.0);
    return scale * std::exp(std::log(g) + std::log(rs.uniform()) / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (long k = 0; k < kSamplerRetryCap; ++k) {
    double x;
    double v;
    do {
      x = rs.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rs.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return scale * d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return scale * d * v;
  }
  throw SamplerError("sample_gamma: retry cap reached");
}

inline std::uint64_t sample_poisson(RandomStream& rs, double intensity) {
  if (!(intensity > 0.0)) return 0;
  std::poisson_distribution<std::uint64_t> dist(intensity);
  return dist(rs.engine());
}

/// One-sided strictly stable law with E[exp(-u S)] = exp(-u^stability),
/// Kanter's representation of the Chambers-Mallows-Stuck construction.
inline double sample_positive_stable(RandomStream& rs, double stability) {
  const double c = stability;
  const double u = std::numbers::pi * rs.uniform();
  const double w = rs.exponential();
  const double a = std::sin(c * u) / std::pow(std::sin(u), 1.0 / c);
  const double b = std::pow(std::sin((1.0 - c) * u) / w, (1.0 - c) / c);
  return a * b;
}

/// Tempered one-sided stable law with Laplace transform
/// exp(-scale ((tilt + u)^stability - tilt^stability)). The variate is split
/// into m = ceil(scale tilt^stability) independent pieces so each stable
/// proposal is accepted (probability exp(-tilt x)) at a rate of at least 1/e.
inline double sample_tempered_stable(RandomStream& rs, double stability, double scale,
                                     double tilt) {
  if (!(stability > 0.0 && stability < 1.0)) {
    throw DomainError("sample_tempered_stable: stability must lie in (0,1)");
  }
  if (scale <= 0.0) return 0.0;
  const double c = stability;
  if (tilt <= 0.0) return std::pow(scale, 1.0 / c) * sample_positive_stable(rs, c);

  const double load = scale * std::pow(tilt, c);
  const double pieces = std::max(1.0, std::ceil(load));
  if (pieces > 1e9) throw SamplerError("sample_tempered_stable: too many pieces");
  const auto m = static_cast<long>(pieces);
  const double piece_factor = std::pow(scale / pieces, 1.0 / c);
  double total = 0.0;
  for (long j = 0; j < m; ++j) {
    long tries = 0;
    for (;;) {
      const double x = piece_factor * sample_positive_stable(rs, c);
      if (rs.uniform() <= std::exp(-tilt * x)) {
        total += x;
        break;
      }
      if (++tries >= kSamplerRetryCap) {
        std::ostringstream os;
        os << "sample_tempered_stable: retry cap reached (stability=" << c
           << ", scale=" << scale << ", tilt=" << tilt << ")";
        throw SamplerError(os.str());
      }
    }
  }
  return total;
}

}  // namespace superlift
