#pragma once

// Exact one-step scheme for the square-root diffusion
//
//   dZ = (a1 + b1 Z) dt + c1 sqrt(Z) dW.
//
// The time integral of Z over a step is replaced by an inverse-Gaussian
// variate U whose mean kappa is the conditional mean of that integral; the
// Brownian term becomes (U - kappa)/omega.

#include <cmath>
#include <cstdint>
#include <sstream>

#include "superlift/errors.hpp"
#include "superlift/random.hpp"

namespace superlift {

struct SrdCoeffs {
  double a1 = 0.0;  // constant drift, >= 0
  double b1 = 0.0;  // linear drift, <= 0
  double c1 = 0.0;  // diffusion scale, >= 0
  double dt = 0.01;
};

inline void validate(const SrdCoeffs& c) {
  if (!(c.a1 >= 0.0) || !(c.b1 <= 0.0) || !(c.c1 >= 0.0) || !(c.dt > 0.0) ||
      !std::isfinite(c.a1) || !std::isfinite(c.b1) || !std::isfinite(c.c1) ||
      !std::isfinite(c.dt)) {
    std::ostringstream os;
    os << "invalid square-root coefficients (a1=" << c.a1 << ", b1=" << c.b1
       << ", c1=" << c.c1 << ", dt=" << c.dt << ")";
    throw ConfigError(os.str());
  }
}

/// Which law drives the integrated-variance variate.
enum class SrdNoise {
  inverse_gaussian,  // mean kappa, shape (kappa/omega)^2
  literal_kernel,    // the y^{-1}-prefactor kernel, for sensitivity studies
};

struct KappaOmega {
  double kappa = 0.0;
  double omega = 0.0;
};

namespace detail {

/// phi1(h) = (e^h - 1)/h and phi2(h) = (e^h - 1 - h)/h^2, with series near 0.
struct Phi12 {
  double phi1;
  double phi2;
};

inline Phi12 phi12(double h) {
  if (std::abs(h) < 1e-5) {
    return {1.0 + h / 2.0 + h * h / 6.0, 0.5 + h / 6.0 + h * h / 24.0};
  }
  const double em1 = std::expm1(h);
  return {em1 / h, (em1 - h) / (h * h)};
}

}  // namespace detail

/// kappa = z (e^{b1 dt} - 1)/b1 + (a1/b1)((e^{b1 dt} - 1)/b1 - dt),
/// omega = c1 (e^{b1 dt} - 1)/b1, with the b1 = 0 limits z dt + a1 dt^2/2, c1 dt.
inline KappaOmega srd_kappa_omega(const SrdCoeffs& c, double z) {
  const auto p = detail::phi12(c.b1 * c.dt);
  return {z * c.dt * p.phi1 + c.a1 * c.dt * c.dt * p.phi2, c.c1 * c.dt * p.phi1};
}

/// Z_{n+1} = z + a1 dt + b1 U + c1 V, V = (U - kappa)/omega, rearranged as
/// a1 dt (1 - phi2/phi1) + U e^h / (dt phi1) so no cancellation can drive the
/// result negative.
inline double srd_step(const SrdCoeffs& c, double z, RandomStream& rs,
                       SrdNoise noise = SrdNoise::inverse_gaussian) {
  const double h = c.b1 * c.dt;
  const auto p = detail::phi12(h);
  const double kappa = z * c.dt * p.phi1 + c.a1 * c.dt * c.dt * p.phi2;
  const double omega = c.c1 * c.dt * p.phi1;
  if (kappa <= 0.0 || omega <= 0.0) return z + c.a1 * c.dt + c.b1 * kappa;

  const double ratio = kappa / omega;
  const double shape = ratio * ratio;
  const double u = noise == SrdNoise::inverse_gaussian
                       ? sample_inverse_gaussian(rs, kappa, shape)
                       : sample_inverse_gaussian_alt(rs, kappa, shape);
  const double next =
      c.a1 * c.dt * (1.0 - p.phi2 / p.phi1) + u * std::exp(h) / (c.dt * p.phi1);
  return next > 0.0 ? next : 0.0;
}

struct HittingResult {
  double tau = 0.0;
  bool censored = false;
  std::uint64_t steps = 0;
};

/// First time the path started at z0 satisfies Z <= lo or Z >= hi, checked on
/// the step grid only. Paths still inside after `horizon` time units are
/// reported as censored with tau = steps * dt.
inline HittingResult srd_hitting_time(const SrdCoeffs& c, double z0, RandomStream& rs,
                                      double barrier_lo = 0.0, double barrier_hi = 1.0,
                                      double horizon = 10.0,
                                      SrdNoise noise = SrdNoise::inverse_gaussian) {
  if (!(z0 > barrier_lo && z0 <= barrier_hi)) {
    throw DomainError("srd_hitting_time: z0 must lie in (lo, hi]");
  }
  HittingResult out;
  if (z0 >= barrier_hi) return out;
  const auto cap = static_cast<std::uint64_t>(std::ceil(horizon / c.dt - 1e-9));
  double z = z0;
  while (out.steps < cap) {
    z = srd_step(c, z, rs, noise);
    ++out.steps;
    if (z <= barrier_lo || z >= barrier_hi) {
      out.tau = static_cast<double>(out.steps) * c.dt;
      return out;
    }
  }
  out.censored = true;
  out.tau = static_cast<double>(out.steps) * c.dt;
  return out;
}

}  // namespace superlift
