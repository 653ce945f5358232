#pragma once

// Multi-path drivers feeding recorders. Each path owns one stream bundle per
// model; in deterministic mode per-path recorders are merged in path order,
// so results do not depend on the thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "superlift/engine.hpp"
#include "superlift/errors.hpp"
#include "superlift/stats.hpp"

namespace superlift {

struct SimulationConfig {
  std::size_t n_paths = 1;
  double horizon = 100.0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool deterministic = true;
  StepOptions step;
  RecorderConfig recorder;
};

struct SimulationResult {
  Recorder recorder;
  std::uint64_t steps = 0;           // total split steps over all paths
  double min_component = std::numeric_limits<double>::infinity();
};

/// Observer called after every step with (path, time, state). Used by tests.
using PathObserver = std::function<void(std::size_t, const LiftState&)>;

namespace detail {

inline std::uint64_t step_count(double horizon, double dt) {
  if (!(horizon >= 0.0)) throw ConfigError("simulate: horizon must be >= 0");
  if (!(dt > 0.0)) throw ConfigError("simulate: dt must be positive");
  return static_cast<std::uint64_t>(std::llround(horizon / dt));
}

inline double min_of(const LiftState& s) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : s.x) m = std::min(m, v);
  return m;
}

/// Runs `one_path(path, recorder, result)` for every path on a worker pool.
template <class OnePath>
SimulationResult run_paths(const SimulationConfig& cfg, OnePath one_path) {
  if (cfg.n_paths == 0) throw ConfigError("simulate: n_paths must be >= 1");
  if (cfg.recorder.burn_in > cfg.horizon) {
    throw ConfigError("simulate: burn_in exceeds the horizon");
  }
  const unsigned threads =
      std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.n_paths)));
  std::vector<SimulationResult> per_path;
  if (cfg.deterministic) per_path.resize(cfg.n_paths, SimulationResult{Recorder(cfg.recorder)});
  SimulationResult merged{Recorder(cfg.recorder)};
  std::mutex merge_mu;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mu;

  auto worker = [&]() {
    for (;;) {
      const std::size_t p = next.fetch_add(1);
      if (p >= cfg.n_paths) return;
      try {
        if (cfg.deterministic) {
          one_path(p, per_path[p]);
        } else {
          SimulationResult local{Recorder(cfg.recorder)};
          one_path(p, local);
          std::lock_guard<std::mutex> lk(merge_mu);
          merged.recorder.merge(local.recorder);
          merged.steps += local.steps;
          merged.min_component = std::min(merged.min_component, local.min_component);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lk(fail_mu);
        if (!failure) failure = std::current_exception();
        next.store(cfg.n_paths);
        return;
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  if (cfg.deterministic) {
    for (const auto& r : per_path) {
      merged.recorder.merge(r.recorder);
      merged.steps += r.steps;
      merged.min_component = std::min(merged.min_component, r.min_component);
    }
  }
  return merged;
}

template <class Fn>
inline void with_context(std::size_t path, std::uint64_t step, Fn fn) {
  try {
    fn();
  } catch (const SamplerError& e) {
    std::ostringstream os;
    os << e.what() << " [path " << path << ", step " << step << "]";
    throw SamplerError(os.str());
  }
}

}  // namespace detail

/// Runs split steps from `initial` (zeros by default) for every path and
/// records X after burn-in; the initial state counts as a sample at t = 0.
inline SimulationResult simulate_paths(const ModelSpec& spec, const SimulationConfig& cfg,
                                       const LiftState* initial = nullptr,
                                       const PathObserver& observer = {}) {
  validate(spec);
  const std::uint64_t n_steps = detail::step_count(cfg.horizon, cfg.step.dt);
  const Stepper proto(spec, cfg.step);
  return detail::run_paths(cfg, [&](std::size_t p, SimulationResult& res) {
    Stepper stepper = proto;
    StreamBundle rs(cfg.seed, p, 0, spec.n());
    LiftState st = initial != nullptr ? *initial : LiftState(spec.n());
    res.recorder.begin_path();
    res.recorder.record(st.time, st.aggregate());
    res.min_component = std::min(res.min_component, detail::min_of(st));
    for (std::uint64_t k = 0; k < n_steps; ++k) {
      detail::with_context(p, k, [&] { stepper.split_step(st, rs); });
      st.time = static_cast<double>(k + 1) * cfg.step.dt;
      res.recorder.record(st.time, st.aggregate());
      res.min_component = std::min(res.min_component, detail::min_of(st));
      if (observer) observer(p, st);
    }
    res.steps += n_steps;
  });
}

/// Coupled model: X channel is Q, Y channel is C.
inline SimulationResult simulate_paths(const CoupledSpec& cs, const SimulationConfig& cfg,
                                       const PathObserver& observer = {}) {
  validate(cs);
  const std::uint64_t n_steps = detail::step_count(cfg.horizon, cfg.step.dt);
  const CoupledStepper proto(cs, cfg.step);
  return detail::run_paths(cfg, [&](std::size_t p, SimulationResult& res) {
    CoupledStepper stepper = proto;
    StreamBundle q_rs(cfg.seed, p, 0, cs.q_model.n());
    StreamBundle c_rs(cfg.seed, p, 1, cs.c_model.n());
    LiftState q(cs.q_model.n());
    LiftState c(cs.c_model.n());
    res.recorder.begin_path();
    res.recorder.record(0.0, q.aggregate(), c.aggregate());
    for (std::uint64_t k = 0; k < n_steps; ++k) {
      detail::with_context(p, k, [&] { stepper.step(q, c, q_rs, c_rs); });
      const double t = static_cast<double>(k + 1) * cfg.step.dt;
      q.time = t;
      c.time = t;
      res.recorder.record(t, q.aggregate(), c.aggregate());
      res.min_component = std::min({res.min_component, detail::min_of(q), detail::min_of(c)});
      if (observer) {
        observer(p, q);
        observer(p, c);
      }
    }
    res.steps += n_steps;
  });
}

/// Per-time mean and variance of Z for the driftless square-root process
/// dZ = sqrt(Z) dW (srd with a1 = b1 = 0, c1 = 1) over many paths.
struct MartingaleRow {
  double time;
  double mean;
  double variance;
};

inline std::vector<MartingaleRow> srd_martingale_profile(double z0, double dt, double horizon,
                                                         std::size_t n_paths, std::uint64_t seed,
                                                         std::size_t record_every = 1,
                                                         SrdNoise noise = SrdNoise::inverse_gaussian) {
  const std::uint64_t n_steps = detail::step_count(horizon, dt);
  const std::size_t rows = static_cast<std::size_t>(n_steps / record_every) + 1;
  std::vector<CompensatedSum> s1(rows);
  std::vector<CompensatedSum> s2(rows);
  const SrdCoeffs c{0.0, 0.0, 1.0, dt};
  for (std::size_t p = 0; p < n_paths; ++p) {
    RandomStream rs(seed, StreamBundle::stream_id(p, 2, 0));
    double z = z0;
    s1[0].add(z);
    s2[0].add(z * z);
    for (std::uint64_t k = 1; k <= n_steps; ++k) {
      z = srd_step(c, z, rs, noise);
      if (k % record_every == 0) {
        const std::size_t r = static_cast<std::size_t>(k / record_every);
        s1[r].add(z);
        s2[r].add(z * z);
      }
    }
  }
  std::vector<MartingaleRow> out(rows);
  const double n = static_cast<double>(n_paths);
  for (std::size_t r = 0; r < rows; ++r) {
    const double m = s1[r].value() / n;
    const double v = (s2[r].value() / n - m * m) * n / std::max(n - 1.0, 1.0);
    out[r] = {static_cast<double>(r * record_every) * dt, m, v};
  }
  return out;
}

struct HittingSample {
  std::vector<double> tau;
  std::size_t censored = 0;
};

inline HittingSample srd_hitting_sample(double z0, double dt, std::size_t n_paths,
                                        std::uint64_t seed, double horizon = 10.0,
                                        SrdNoise noise = SrdNoise::inverse_gaussian) {
  HittingSample out;
  out.tau.reserve(n_paths);
  const SrdCoeffs c{0.0, 0.0, 1.0, dt};
  for (std::size_t p = 0; p < n_paths; ++p) {
    RandomStream rs(seed, StreamBundle::stream_id(p, 3, 0));
    const auto h = srd_hitting_time(c, z0, rs, 0.0, 1.0, horizon, noise);
    if (h.censored) ++out.censored;
    out.tau.push_back(h.tau);
  }
  return out;
}

}  // namespace superlift
