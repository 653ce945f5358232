#pragma once

// Finite-dimensional lifted system
//
//   dx_i = r_i (b_i/N - x_i) dt + sigma X^gamma sqrt(r_i x_i) dW_i + dJ_i,
//
// where J_i jumps with Levy measure lambda_i nu, lambda_i = r_i a/N + excitation,
// advanced by operator splitting: an exact square-root step for the diffusion
// (drift r_i b_i/N, no reversion) followed by an exact tempered-stable OU step
// carrying the reversion e^{-r_i dt} and the frozen-intensity jumps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <utility>
#include <vector>

#include "superlift/errors.hpp"
#include "superlift/levy.hpp"
#include "superlift/mixing.hpp"
#include "superlift/random.hpp"
#include "superlift/srd.hpp"
#include "superlift/tsou.hpp"

namespace superlift {

enum class Excitation { none, own, aggregate, matrix };

inline const char* to_string(Excitation e) {
  switch (e) {
    case Excitation::none: return "none";
    case Excitation::own: return "own";
    case Excitation::aggregate: return "aggregate";
    case Excitation::matrix: return "matrix";
  }
  return "?";
}

struct ModelSpec {
  LiftGrid grid;
  TemperedStableMeasure measure;
  double sigma = 0.0;
  double a = 0.0;
  std::vector<double> b;  // b_i, size N
  Excitation excitation = Excitation::none;
  double a_own = 0.0;             // A2 for Excitation::own
  double a_agg = 0.0;             // A1 for Excitation::aggregate
  std::vector<double> a_matrix;   // row-major N x N for Excitation::matrix
  double gamma_cev = 0.0;

  [[nodiscard]] std::size_t n() const { return grid.n; }

  /// Largest excitation entry.
  [[nodiscard]] double abar() const {
    switch (excitation) {
      case Excitation::none: return 0.0;
      case Excitation::own: return a_own;
      case Excitation::aggregate: return a_agg;
      case Excitation::matrix:
        return a_matrix.empty() ? 0.0 : *std::max_element(a_matrix.begin(), a_matrix.end());
    }
    return 0.0;
  }

  [[nodiscard]] double matrix_at(std::size_t i, std::size_t j) const {
    return a_matrix[i * grid.n + j];
  }
};

/// Structural checks plus the contraction condition abar * M1 < 1.
inline void validate(const ModelSpec& s) {
  const std::size_t n = s.grid.n;
  if (n == 0 || s.grid.speeds.size() != n) throw ConfigError("model: empty or malformed lift grid");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(s.grid.speeds[i] > 0.0)) throw ConfigError("model: speeds must be positive");
  }
  validate(s.measure);
  if (!(s.sigma >= 0.0) || !std::isfinite(s.sigma)) throw ConfigError("model: sigma must be >= 0");
  if (!(s.a >= 0.0) || !std::isfinite(s.a)) throw ConfigError("model: a must be >= 0");
  if (s.b.size() != n) {
    std::ostringstream os;
    os << "model: b has " << s.b.size() << " entries, expected " << n;
    throw ConfigError(os.str());
  }
  for (double v : s.b) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("model: b entries must be >= 0");
  }
  if (!(s.a_own >= 0.0) || !(s.a_agg >= 0.0)) {
    throw ConfigError("model: excitation constants must be >= 0");
  }
  if (s.excitation == Excitation::matrix) {
    if (s.a_matrix.size() != n * n) {
      throw ConfigError("model: excitation matrix must have N*N entries");
    }
    for (double v : s.a_matrix) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ConfigError("model: excitation matrix entries must be >= 0");
      }
    }
  }
  if (!(s.gamma_cev >= -0.5) || !std::isfinite(s.gamma_cev)) {
    std::ostringstream os;
    os << "model: CEV exponent " << s.gamma_cev << " below -1/2";
    throw ConfigError(os.str());
  }
  const double prod = s.abar() * moment_mk(s.measure, 1);
  if (!(prod < 1.0)) {
    std::ostringstream os;
    os << "model: contraction condition violated, abar*M1 = " << prod << " >= 1";
    throw ConfigError(os.str());
  }
}

struct LiftState {
  std::vector<double> x;
  double time = 0.0;

  LiftState() = default;
  explicit LiftState(std::size_t n) : x(n, 0.0) {}

  [[nodiscard]] double aggregate() const {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
};

/// Jump-only Q model and diffusion-only C model; C's drift is a_c + b_c Q.
struct CoupledSpec {
  ModelSpec q_model;
  ModelSpec c_model;
  double a_c = 0.0;
  double b_c = 0.0;
};

inline void validate(const CoupledSpec& c) {
  validate(c.q_model);
  validate(c.c_model);
  if (c.q_model.sigma != 0.0 || c.q_model.excitation != Excitation::none) {
    throw ConfigError("coupled: Q model must be jump-only (sigma = 0, no excitation)");
  }
  if (c.c_model.a != 0.0 || c.c_model.excitation != Excitation::none) {
    throw ConfigError("coupled: C model must be diffusion-only (a = 0, no excitation)");
  }
  if (!(c.a_c >= 0.0) || !(c.b_c >= 0.0)) throw ConfigError("coupled: a_c, b_c must be >= 0");
}

struct StepOptions {
  double dt = 0.01;
  bool freeze_after_diffusion = false;
  SrdNoise srd_noise = SrdNoise::inverse_gaussian;
  TsouMethod tsou_method = TsouMethod::exact;
};

/// One random stream per lift component.
struct StreamBundle {
  std::vector<RandomStream> streams;

  StreamBundle() = default;
  StreamBundle(std::uint64_t master_seed, std::uint64_t path, std::uint64_t channel,
               std::size_t n) {
    streams.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      streams.emplace_back(master_seed, stream_id(path, channel, i));
    }
  }

  static std::uint64_t stream_id(std::uint64_t path, std::uint64_t channel, std::uint64_t comp) {
    return (path << 32) | ((channel & 0xff) << 24) | (comp & 0xffffff);
  }

  RandomStream& operator[](std::size_t i) { return streams[i]; }
};

/// Excitation part of the intensity at `state`: own A2 r_i x_i, aggregate
/// A1 sum_j r_j x_j, matrix sum_j r_j A_ij x_j.
inline double frozen_intensity(const ModelSpec& s, const LiftState& st, std::size_t i) {
  const auto& r = s.grid.speeds;
  switch (s.excitation) {
    case Excitation::none: return 0.0;
    case Excitation::own: return s.a_own * r[i] * st.x[i];
    case Excitation::aggregate: {
      double sum = 0.0;
      for (std::size_t j = 0; j < st.x.size(); ++j) sum += r[j] * st.x[j];
      return s.a_agg * sum;
    }
    case Excitation::matrix: {
      double sum = 0.0;
      for (std::size_t j = 0; j < st.x.size(); ++j) sum += r[j] * s.matrix_at(i, j) * st.x[j];
      return sum;
    }
  }
  return 0.0;
}

/// Factors lambda_i multiplying nu for every component. The own mode enters
/// without the 1/N weight since the component's own mass already carries it.
inline void jump_multipliers(const ModelSpec& s, const LiftState& st, std::vector<double>& out) {
  const std::size_t n = s.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& r = s.grid.speeds;
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = r[i] * s.a * inv_n;
  switch (s.excitation) {
    case Excitation::none: break;
    case Excitation::own:
      for (std::size_t i = 0; i < n; ++i) out[i] += s.a_own * r[i] * st.x[i];
      break;
    case Excitation::aggregate: {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += r[j] * st.x[j];
      const double mu = s.a_agg * sum * inv_n;
      for (std::size_t i = 0; i < n; ++i) out[i] += mu;
      break;
    }
    case Excitation::matrix:
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += r[j] * s.matrix_at(i, j) * st.x[j];
        out[i] += sum * inv_n;
      }
      break;
  }
}

/// X^gamma at the aggregate of `state`; 0 at X = 0 unless gamma = 0.
inline double cev_prefactor(const ModelSpec& s, const LiftState& st) {
  if (s.gamma_cev == 0.0) return 1.0;
  const double x = st.aggregate();
  if (x <= 0.0) return 0.0;
  return std::pow(x, s.gamma_cev);
}

/// Precomputed per-component step data for one (spec, dt) pair.
class Stepper {
 public:
  Stepper(const ModelSpec& spec, StepOptions opts) : spec_(spec), opts_(opts) {
    validate(spec_);
    if (!(opts_.dt > 0.0)) throw ConfigError("step: dt must be positive");
    const std::size_t n = spec_.n();
    const double inv_n = 1.0 / static_cast<double>(n);
    drift_.resize(n);
    sqrt_r_.resize(n);
    unit_parts_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = spec_.grid.speeds[i];
      drift_[i] = r * spec_.b[i] * inv_n;
      sqrt_r_[i] = std::sqrt(r);
      unit_parts_[i] = tsou_parts(TsouCoeffs{r, spec_.measure, opts_.dt});
    }
    if (opts_.tsou_method == TsouMethod::compound_poisson && !spec_.measure.finite_activity() &&
        !spec_.measure.is_zero()) {
      throw ConfigError("step: compound-Poisson jump method requires c_nu < 0");
    }
  }

  [[nodiscard]] const ModelSpec& spec() const { return spec_; }
  [[nodiscard]] const StepOptions& options() const { return opts_; }
  ModelSpec& mutable_spec() { return spec_; }

  /// Replace every b_i and refresh the cached drifts (coupled model).
  void set_uniform_b(double value) {
    const double inv_n = 1.0 / static_cast<double>(spec_.n());
    for (std::size_t i = 0; i < spec_.n(); ++i) {
      spec_.b[i] = value;
      drift_[i] = spec_.grid.speeds[i] * value * inv_n;
    }
  }

  /// Square-root step per component with a1 = r_i b_i/N, b1 = 0 and
  /// c1 = sigma_eff sqrt(r_i); sigma_eff uses the CEV prefactor at `frozen`.
  void diffusion_substep(LiftState& st, StreamBundle& rs, double cev) const {
    const double sig = spec_.sigma * cev;
    for (std::size_t i = 0; i < st.x.size(); ++i) {
      const SrdCoeffs c{drift_[i], 0.0, sig * sqrt_r_[i], opts_.dt};
      st.x[i] = srd_step(c, st.x[i], rs[i], opts_.srd_noise);
    }
  }

  /// Decay plus jumps with the multipliers `lambda` (frozen by the caller).
  void jump_substep(LiftState& st, StreamBundle& rs, const std::vector<double>& lambda) const {
    for (std::size_t i = 0; i < st.x.size(); ++i) {
      const TsouParts p = unit_parts_[i].scaled(lambda[i]);
      double inc = 0.0;
      if (lambda[i] > 0.0) {
        if (opts_.tsou_method == TsouMethod::exact) {
          inc = tsou_increment(TsouCoeffs{spec_.grid.speeds[i], spec_.measure, opts_.dt}, p,
                               rs[i]);
        } else {
          inc = tsou_increment(
              TsouCoeffs{spec_.grid.speeds[i], spec_.measure.scaled(lambda[i]), opts_.dt}, p,
              rs[i], TsouMethod::compound_poisson);
        }
      }
      st.x[i] = st.x[i] * p.decay + inc;
    }
  }

  /// Diffusion then jump substep, intensity and CEV prefactor frozen at the
  /// step start (or after the diffusion substep when so configured).
  void split_step(LiftState& st, StreamBundle& rs) {
    const double cev = cev_prefactor(spec_, st);
    if (!opts_.freeze_after_diffusion) jump_multipliers(spec_, st, lambda_);
    diffusion_substep(st, rs, cev);
    if (opts_.freeze_after_diffusion) jump_multipliers(spec_, st, lambda_);
    jump_substep(st, rs, lambda_);
    st.time += opts_.dt;
  }

 private:
  ModelSpec spec_;
  StepOptions opts_;
  std::vector<double> drift_;
  std::vector<double> sqrt_r_;
  std::vector<TsouParts> unit_parts_;
  std::vector<double> lambda_;
};

inline LiftState diffusion_substep(const ModelSpec& spec, const LiftState& st, StreamBundle& rs,
                                   const StepOptions& opts = {}) {
  Stepper stepper(spec, opts);
  LiftState out = st;
  stepper.diffusion_substep(out, rs, cev_prefactor(spec, st));
  return out;
}

/// Jump substep with the intensity frozen at `st` itself.
inline LiftState jump_substep(const ModelSpec& spec, const LiftState& st, StreamBundle& rs,
                              const StepOptions& opts = {}) {
  Stepper stepper(spec, opts);
  std::vector<double> lambda;
  jump_multipliers(spec, st, lambda);
  LiftState out = st;
  stepper.jump_substep(out, rs, lambda);
  return out;
}

inline LiftState split_step(const ModelSpec& spec, const LiftState& st, StreamBundle& rs,
                            const StepOptions& opts = {}) {
  Stepper stepper(spec, opts);
  LiftState out = st;
  stepper.split_step(out, rs);
  return out;
}

/// Coupled stepper: Q advances with its own split step, C's drift uses Q
/// frozen at the step start.
class CoupledStepper {
 public:
  CoupledStepper(const CoupledSpec& cs, StepOptions opts)
      : q_(cs.q_model, opts), c_(cs.c_model, opts), a_c_(cs.a_c), b_c_(cs.b_c) {
    validate(cs);
  }

  void step(LiftState& q, LiftState& c, StreamBundle& q_rs, StreamBundle& c_rs) {
    const double q_frozen = q.aggregate();
    q_.split_step(q, q_rs);
    c_.set_uniform_b(a_c_ + b_c_ * q_frozen);
    c_.split_step(c, c_rs);
  }

  [[nodiscard]] const Stepper& q_stepper() const { return q_; }
  [[nodiscard]] const Stepper& c_stepper() const { return c_; }

 private:
  Stepper q_;
  Stepper c_;
  double a_c_;
  double b_c_;
};

inline std::pair<LiftState, LiftState> coupled_step(const CoupledSpec& cs, const LiftState& q,
                                                    const LiftState& c, StreamBundle& q_rs,
                                                    StreamBundle& c_rs,
                                                    const StepOptions& opts = {}) {
  CoupledStepper stepper(cs, opts);
  std::pair<LiftState, LiftState> out{q, c};
  stepper.step(out.first, out.second, q_rs, c_rs);
  return out;
}

/// Explicit Euler-Maruyama step: Gaussian increments, Poisson-many jumps from
/// the finite measure with the frozen intensity, negatives clamped to 0 and
/// counted in `clamps`. Requires c_nu < 0 (or a zero measure).
inline LiftState euler_maruyama_step(const ModelSpec& spec, const LiftState& st, StreamBundle& rs,
                                     double dt, std::uint64_t& clamps) {
  validate(spec);
  if (!spec.measure.is_zero() && !spec.measure.finite_activity()) {
    throw ConfigError("euler_maruyama_step: jumps require c_nu < 0");
  }
  const std::size_t n = spec.n();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> lambda;
  jump_multipliers(spec, st, lambda);
  const double sig = spec.sigma * cev_prefactor(spec, st);
  const double mass = spec.measure.is_zero() ? 0.0 : total_mass(spec.measure);
  const double sq_dt = std::sqrt(dt);
  LiftState out = st;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = spec.grid.speeds[i];
    const double x = st.x[i];
    double next = x + r * (spec.b[i] * inv_n - x) * dt;
    if (sig > 0.0) next += sig * std::sqrt(r * x) * sq_dt * rs[i].normal();
    if (lambda[i] > 0.0 && mass > 0.0) {
      const std::uint64_t k = sample_poisson(rs[i], lambda[i] * mass * dt);
      for (std::uint64_t j = 0; j < k; ++j) {
        next += sample_gamma(rs[i], -spec.measure.c_nu, 1.0 / spec.measure.b_nu);
      }
    }
    if (next < 0.0) {
      next = 0.0;
      ++clamps;
    }
    out.x[i] = next;
  }
  out.time = st.time + dt;
  return out;
}

/// Convenience: fill a spec from the usual scalar parameters.
struct ModelParams {
  MixingLaw law{2.5, 1.0};
  std::size_t n_lift = 64;
  double b_nu = 0.1;
  double c_nu = 0.65;
  double m1 = 0.5;       // target first moment, used when a_nu < 0
  double a_nu = -1.0;    // explicit a_nu when >= 0
  double sigma = 0.5;
  double a = 1.0;
  double b = 0.0;        // uniform b_i
  Excitation excitation = Excitation::aggregate;
  double a_own = 1.0;
  double a_agg = 1.0;
  std::vector<double> a_matrix;
  double gamma_cev = 0.0;
};

inline ModelSpec make_model(const ModelParams& p) {
  ModelSpec s;
  validate(p.law);
  s.grid = build_lift(p.law, p.n_lift);
  s.measure.b_nu = p.b_nu;
  s.measure.c_nu = p.c_nu;
  s.measure.a_nu = p.a_nu >= 0.0 ? p.a_nu : calibrate_a_nu(p.b_nu, p.c_nu, p.m1);
  s.sigma = p.sigma;
  s.a = p.a;
  s.b.assign(p.n_lift, p.b);
  s.excitation = p.excitation;
  s.a_own = p.excitation == Excitation::own ? p.a_own : 0.0;
  s.a_agg = p.excitation == Excitation::aggregate ? p.a_agg : 0.0;
  if (p.excitation == Excitation::matrix) s.a_matrix = p.a_matrix;
  s.gamma_cev = p.gamma_cev;
  validate(s);
  return s;
}

}  // namespace superlift
