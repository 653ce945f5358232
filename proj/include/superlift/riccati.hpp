#pragma once

// Deterministic oracles for the lifted model with gamma_cev = 0:
//
//  * the discretized generalized Riccati system for E[exp(q X)] at the zero
//    initial state, in the negative (q < 0) and positive (q > 0) variants,
//  * the a priori bound phi_bar(q) and the fixed-point map it solves,
//  * the stationary mean linear system and its contraction check.
//
// Negative variant, per step h (explicit F, semi-implicit G):
//   F  += h (1/N) sum_i r_i (b_i G_i + a psi(G_i))
//   G_i = [G_i + h r_i (-sigma^2/2 G_i^2 + (A^T psi(G))_i)] / (1 + h r_i)
// with psi the negative Levy integral and (A^T v)_i = A2 v_i (own),
// A1 mean(v) (aggregate) or (1/N) sum_j A_ji v_j (matrix). The positive
// variant flips the sign of the sigma^2 term and uses the positive integral.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "superlift/engine.hpp"
#include "superlift/errors.hpp"
#include "superlift/levy.hpp"

namespace superlift {

/// q / (1 - abar_m1 - sigma^2 q / 2).
inline double phi_bar(double sigma, double abar_m1, double q) {
  if (!(abar_m1 >= 0.0 && abar_m1 < 1.0)) {
    throw DomainError("phi_bar: abar*M1 must lie in [0, 1)");
  }
  if (!(q >= 0.0)) throw DomainError("phi_bar: q must be positive");
  const double denom = 1.0 - abar_m1 - 0.5 * sigma * sigma * q;
  if (!(denom > 0.0)) {
    std::ostringstream os;
    os << "phi_bar: q=" << q << " outside the admissible interval (moment may explode)";
    throw DomainError(os.str());
  }
  return q / denom;
}

/// The map whose unique fixed point is phi_bar(q).
inline double phi_bar_map(double sigma, double abar_m1, double q, double phi) {
  const double s = 0.5 * sigma * sigma * phi;
  return q + (abar_m1 + s) / (1.0 + s) * phi;
}

/// Upper end of the q interval on which phi_bar exists.
inline double phi_bar_q_max(double sigma, double abar_m1) {
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  return 2.0 * (1.0 - abar_m1) / (sigma * sigma);
}

enum class RiccatiVariant { negative, positive };

struct RiccatiState {
  double f = 0.0;
  std::vector<double> g;
  double time = 0.0;
  double q = 0.0;

  static RiccatiState initial(std::size_t n, double q) {
    RiccatiState s;
    s.g.assign(n, q);
    s.q = q;
    return s;
  }

  [[nodiscard]] double max_g() const { return *std::max_element(g.begin(), g.end()); }
  [[nodiscard]] double min_g() const { return *std::min_element(g.begin(), g.end()); }
};

namespace detail {

/// out = A^T v in the excitation mode of `s` (see header comment).
inline void apply_transpose(const ModelSpec& s, const std::vector<double>& v,
                            std::vector<double>& out) {
  const std::size_t n = s.n();
  out.assign(n, 0.0);
  switch (s.excitation) {
    case Excitation::none: break;
    case Excitation::own:
      for (std::size_t i = 0; i < n; ++i) out[i] = s.a_own * v[i];
      break;
    case Excitation::aggregate: {
      double sum = 0.0;
      for (double x : v) sum += x;
      const double m = s.a_agg * sum / static_cast<double>(n);
      std::fill(out.begin(), out.end(), m);
      break;
    }
    case Excitation::matrix:
      for (std::size_t j = 0; j < n; ++j) {
        const double vj = v[j];
        for (std::size_t i = 0; i < n; ++i) out[i] += s.matrix_at(j, i) * vj;
      }
      for (auto& x : out) x /= static_cast<double>(n);
      break;
  }
}

/// out = A v (the direction used by the stationary mean system).
inline void apply_forward(const ModelSpec& s, const std::vector<double>& v,
                          std::vector<double>& out) {
  const std::size_t n = s.n();
  out.assign(n, 0.0);
  switch (s.excitation) {
    case Excitation::none: break;
    case Excitation::own:
      for (std::size_t i = 0; i < n; ++i) out[i] = s.a_own * v[i];
      break;
    case Excitation::aggregate: {
      double sum = 0.0;
      for (double x : v) sum += x;
      std::fill(out.begin(), out.end(), s.a_agg * sum / static_cast<double>(n));
      break;
    }
    case Excitation::matrix:
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s.matrix_at(i, j) * v[j];
        out[i] = acc / static_cast<double>(n);
      }
      break;
  }
}

inline void require_affine(const ModelSpec& s, const char* who) {
  if (s.gamma_cev != 0.0) {
    std::ostringstream os;
    os << who << ": the Riccati system is exact only for gamma_cev = 0";
    throw ConfigError(os.str());
  }
}

template <RiccatiVariant V>
inline void riccati_step_impl(RiccatiState& st, const ModelSpec& s, double h,
                              std::vector<double>& psi, std::vector<double>& coupling) {
  const std::size_t n = s.n();
  const auto& r = s.grid.speeds;
  psi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (V == RiccatiVariant::negative) {
      psi[i] = levy_integral_neg(s.measure, st.g[i]);
    } else {
      psi[i] = levy_integral_pos(s.measure, st.g[i]);
    }
  }
  double df = 0.0;
  for (std::size_t i = 0; i < n; ++i) df += r[i] * (s.b[i] * st.g[i] + s.a * psi[i]);
  apply_transpose(s, psi, coupling);
  const double half_s2 = 0.5 * s.sigma * s.sigma;
  constexpr double sign = V == RiccatiVariant::negative ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = st.g[i];
    const double rhs = sign * half_s2 * g * g + coupling[i];
    st.g[i] = (g + h * r[i] * rhs) / (1.0 + h * r[i]);
  }
  st.f += h * df / static_cast<double>(n);
  st.time += h;
}

}  // namespace detail

/// One step of the negative variant (moment of exp(-q X), q >= 0).
inline RiccatiState riccati_step_neg(const RiccatiState& st, const ModelSpec& s,
                                     double dt_prime) {
  RiccatiState out = st;
  std::vector<double> psi;
  std::vector<double> coupling;
  detail::riccati_step_impl<RiccatiVariant::negative>(out, s, dt_prime, psi, coupling);
  return out;
}

/// One step of the positive variant (moment of exp(+q X), 0 < q <= b_nu).
inline RiccatiState riccati_step_pos(const RiccatiState& st, const ModelSpec& s,
                                     double dt_prime) {
  RiccatiState out = st;
  std::vector<double> psi;
  std::vector<double> coupling;
  detail::riccati_step_impl<RiccatiVariant::positive>(out, s, dt_prime, psi, coupling);
  return out;
}

struct MomentOptions {
  double dt_prime = 1e-3;
  double transient = 20.0;        // time integrated with the fixed step dt'
  double max_step_factor = 1000;  // afterwards h = dt' * min(t / transient, this)
  double tol = 1e-10;             // |dF| per unit time at convergence
  double horizon = 1e8;
  double record_every = 0.0;      // trajectory sampling interval (0: off)
};

struct TrajectoryPoint {
  double time;
  double f;
  double max_g;
  double min_g;
};

struct MomentResult {
  double value = 1.0;  // E[exp(q X)] in the stationary regime
  double f = 0.0;
  double time = 0.0;
  std::size_t steps = 0;
  bool bound_held = true;  // 0 <= G <= phi_bar(q) throughout (negative variant)
  std::vector<TrajectoryPoint> trajectory;
};

/// Callback observing every accepted step.
using RiccatiObserver = std::function<void(const RiccatiState&, double step)>;

/// Stationary E[exp(q X)] from the zero initial state. q < 0 runs the
/// negative variant with exponent -q and returns exp(-F); q > 0 runs the
/// positive variant and returns exp(+F).
inline MomentResult exponential_moment(const ModelSpec& s, double q,
                                       const MomentOptions& opt = {},
                                       const RiccatiObserver& observer = {}) {
  validate(s);
  detail::require_affine(s, "exponential_moment");
  MomentResult res;
  if (q == 0.0) return res;
  const bool negative = q < 0.0;
  const double q0 = std::abs(q);
  if (!negative && !levy_pos_in_domain(s.measure, q0)) {
    std::ostringstream os;
    os << "exponential_moment: E[exp(" << q << " X)] does not exist (q > b_nu = "
       << s.measure.b_nu << ")";
    throw DomainError(os.str());
  }
  const double m1 = moment_mk(s.measure, 1);
  double phibar = std::numeric_limits<double>::infinity();
  if (negative && q0 < phi_bar_q_max(s.sigma, s.abar() * m1)) {
    phibar = phi_bar(s.sigma, s.abar() * m1, q0);
  }

  RiccatiState st = RiccatiState::initial(s.n(), q0);
  const double r_max = *std::max_element(s.grid.speeds.begin(), s.grid.speeds.end());
  const double s2 = s.sigma * s.sigma;
  std::vector<double> psi;
  std::vector<double> coupling;
  double h = opt.dt_prime;
  double next_record = 0.0;
  auto record = [&]() {
    if (opt.record_every > 0.0 && st.time >= next_record) {
      res.trajectory.push_back({st.time, st.f, st.max_g(), st.min_g()});
      next_record += opt.record_every;
    }
  };
  record();

  double last_rate = 0.0;
  double prev_max_g = st.max_g();
  double prev_time = 0.0;
  while (st.time < opt.horizon) {
    if (st.time >= opt.transient) {
      h = opt.dt_prime * std::min(st.time / opt.transient, opt.max_step_factor);
      const double mg = st.max_g();
      if (s2 > 0.0 && mg > 0.0) h = std::max(opt.dt_prime, std::min(h, 1.0 / (r_max * s2 * mg)));
    }
    const double f_before = st.f;
    try {
      if (negative) {
        detail::riccati_step_impl<RiccatiVariant::negative>(st, s, h, psi, coupling);
      } else {
        detail::riccati_step_impl<RiccatiVariant::positive>(st, s, h, psi, coupling);
      }
    } catch (const DomainError& e) {
      std::ostringstream os;
      os << "exponential_moment: solution left the moment domain at t=" << st.time
         << " (" << e.what() << ")";
      throw DomainError(os.str());
    }
    ++res.steps;
    for (double g : st.g) {
      if (!std::isfinite(g)) throw DomainError("exponential_moment: G diverged");
      if (negative && (g < 0.0 || g > phibar * (1.0 + 1e-12))) res.bound_held = false;
    }
    if (observer) observer(st, h);
    record();
    const double rate = std::abs(st.f - f_before) / h;
    if (st.time >= opt.transient && rate < opt.tol) {
      res.f = st.f;
      res.time = st.time;
      res.value = negative ? std::exp(-st.f) : std::exp(st.f);
      if (opt.record_every > 0.0) {
        res.trajectory.push_back({st.time, st.f, st.max_g(), st.min_g()});
      }
      return res;
    }
    if (st.time - prev_time > 100.0) {
      const double mg = st.max_g();
      if (mg > 0.0 && prev_max_g > 0.0) last_rate = std::log(prev_max_g / mg) / (st.time - prev_time);
      prev_max_g = mg;
      prev_time = st.time;
    }
  }
  std::ostringstream os;
  os << "exponential_moment: F not converged by t=" << st.time << " (|dF/dt| tolerance "
     << opt.tol << ", observed decay rate of max G " << last_rate << ")";
  throw DomainError(os.str());
}

struct ContractionReport {
  double abar_m1 = 0.0;
  double margin = 1.0;  // 1 - abar_m1
  bool pass = true;
};

inline ContractionReport contraction_check(double abar, double m1) {
  ContractionReport r;
  r.abar_m1 = abar * m1;
  r.margin = 1.0 - r.abar_m1;
  r.pass = r.abar_m1 < 1.0;
  return r;
}

/// Contraction report for a spec without throwing on failure.
inline ContractionReport contraction_check(const ModelSpec& s) {
  return contraction_check(s.abar(), moment_mk(s.measure, 1));
}

struct StationaryMean {
  double mean_x = 0.0;
  std::vector<double> component_means;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/// Stationary means m_i from r_i m_i = r_i b_i/N + M1 (r_i a/N + (A r m)_i),
/// solved for y_i = r_i m_i by fixed-point iteration (a contraction with
/// factor abar*M1).
inline StationaryMean stationary_mean(const ModelSpec& s, double tol = 1e-12,
                                      std::size_t max_iter = 100000) {
  const auto rep = contraction_check(s);
  if (!rep.pass) {
    std::ostringstream os;
    os << "stationary_mean: contraction violated, abar*M1 = " << rep.abar_m1;
    throw DomainError(os.str());
  }
  validate(s);
  const std::size_t n = s.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double m1 = moment_mk(s.measure, 1);
  const auto& r = s.grid.speeds;
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = r[i] * (s.b[i] + m1 * s.a) * inv_n;

  std::vector<double> y = c;
  std::vector<double> ay;
  StationaryMean out;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    detail::apply_forward(s, y, ay);
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next = c[i] + m1 * ay[i];
      diff = std::max(diff, std::abs(next - y[i]));
      scale = std::max(scale, std::abs(next));
      y[i] = next;
    }
    out.iterations = it;
    if (diff <= tol * std::max(scale, 1e-300) || diff == 0.0) break;
  }
  detail::apply_forward(s, y, ay);
  out.residual = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.residual = std::max(out.residual, std::abs(c[i] + m1 * ay[i] - y[i]));
  }
  out.component_means.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.component_means[i] = y[i] / r[i];
    out.mean_x += out.component_means[i];
  }
  return out;
}

/// Same system by a dense LU solve, for cross-checking.
inline StationaryMean stationary_mean_direct(const ModelSpec& s) {
  validate(s);
  const std::size_t n = s.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double m1 = moment_mk(s.measure, 1);
  const auto& r = s.grid.speeds;
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n),
                                                static_cast<Eigen::Index>(n));
  Eigen::VectorXd c(static_cast<Eigen::Index>(n));
  std::vector<double> e(n, 0.0);
  std::vector<double> col;
  for (std::size_t j = 0; j < n; ++j) {
    e.assign(n, 0.0);
    e[j] = 1.0;
    detail::apply_forward(s, e, col);
    for (std::size_t i = 0; i < n; ++i) {
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -= m1 * col[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    c(static_cast<Eigen::Index>(i)) = r[i] * (s.b[i] + m1 * s.a) * inv_n;
  }
  const Eigen::VectorXd y = a.partialPivLu().solve(c);
  StationaryMean out;
  out.component_means.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.component_means[i] = y(static_cast<Eigen::Index>(i)) / r[i];
    out.mean_x += out.component_means[i];
  }
  return out;
}

}  // namespace superlift
