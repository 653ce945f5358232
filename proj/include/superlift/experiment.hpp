#pragma once

// Config-driven experiment runner behind the command-line tool. Needs
// nlohmann/json and OpenSSL (libcrypto) for the manifest hash.

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "superlift/engine.hpp"
#include "superlift/errors.hpp"
#include "superlift/riccati.hpp"
#include "superlift/simulate.hpp"
#include "superlift/stats.hpp"

namespace superlift {

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"srd-test", "test1",          "test2",
                                              "coupled",  "cev",            "riccati",
                                              "stationary-mean", "hitting-time"};
  return names;
}

struct ExperimentConfig {
  std::string preset = "test2";

  // mixing law and lift
  double alpha = 2.5;
  double beta = 1.0;
  std::size_t n_lift = 64;

  // model
  double sigma = 0.5;
  double a = 1.0;
  double b = 0.0;
  std::string excitation = "aggregate";
  double a_own = 1.0;
  double a_agg = 1.0;
  std::vector<double> a_matrix;
  double gamma_cev = 0.0;
  std::optional<double> a_nu;  // calibrated from m1 when absent
  double b_nu = 0.1;
  double c_nu = 0.65;
  double m1 = 0.5;

  // coupled model
  double sigma_c = 0.5;
  double a_c = 0.1;
  double b_c = 0.5;

  // run
  double dt = 0.01;
  double dt_prime = 1e-3;
  double horizon = 1e5;
  double burn_in = 0.0;
  std::size_t n_paths = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool deterministic = true;
  std::vector<double> q{-1.0, 0.05};
  std::size_t max_lag = 100;
  double acf_stride = 1.0;
  double z0 = 0.5;
  double record_every = 0.1;
  double hist_lo = 1e-3;
  double hist_hi = 100.0;
  std::size_t hist_bins = 100;
  bool hist_log = true;
  bool freeze_after_diffusion = false;
  std::string srd_noise = "inverse_gaussian";
  std::string tsou_method = "exact";

  std::string out;
};

namespace detail {

inline Excitation parse_excitation(const std::string& s) {
  if (s == "none") return Excitation::none;
  if (s == "own") return Excitation::own;
  if (s == "aggregate") return Excitation::aggregate;
  if (s == "matrix") return Excitation::matrix;
  throw ConfigError("config: unknown excitation '" + s + "' (none|own|aggregate|matrix)");
}

inline SrdNoise parse_srd_noise(const std::string& s) {
  if (s == "inverse_gaussian") return SrdNoise::inverse_gaussian;
  if (s == "literal_kernel") return SrdNoise::literal_kernel;
  throw ConfigError("config: unknown srd_noise '" + s + "' (inverse_gaussian|literal_kernel)");
}

inline TsouMethod parse_tsou_method(const std::string& s) {
  if (s == "exact") return TsouMethod::exact;
  if (s == "compound_poisson") return TsouMethod::compound_poisson;
  throw ConfigError("config: unknown tsou_method '" + s + "' (exact|compound_poisson)");
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& dst) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
      throw ConfigError(std::string("config: '") + key + "' must be a nonnegative integer");
    }
  }
  try {
    dst = j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + j.dump());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["n_lift"] = c.n_lift;
  j["sigma"] = c.sigma;
  j["a"] = c.a;
  j["b"] = c.b;
  j["excitation"] = c.excitation;
  j["a_own"] = c.a_own;
  j["a_agg"] = c.a_agg;
  j["a_matrix"] = c.a_matrix;
  j["gamma_cev"] = c.gamma_cev;
  j["a_nu"] = c.a_nu ? nlohmann::json(*c.a_nu) : nlohmann::json(nullptr);
  j["b_nu"] = c.b_nu;
  j["c_nu"] = c.c_nu;
  j["m1"] = c.m1;
  j["sigma_c"] = c.sigma_c;
  j["a_c"] = c.a_c;
  j["b_c"] = c.b_c;
  j["dt"] = c.dt;
  j["dt_prime"] = c.dt_prime;
  j["horizon"] = c.horizon;
  j["burn_in"] = c.burn_in;
  j["n_paths"] = c.n_paths;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  j["q"] = c.q;
  j["max_lag"] = c.max_lag;
  j["acf_stride"] = c.acf_stride;
  j["z0"] = c.z0;
  j["record_every"] = c.record_every;
  j["hist_lo"] = c.hist_lo;
  j["hist_hi"] = c.hist_hi;
  j["hist_bins"] = c.hist_bins;
  j["hist_log"] = c.hist_log;
  j["freeze_after_diffusion"] = c.freeze_after_diffusion;
  j["srd_noise"] = c.srd_noise;
  j["tsou_method"] = c.tsou_method;
  j["out"] = c.out;
  return j;
}

/// Overlay the keys of `j` on `c`; unknown keys are rejected.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  using detail::read_field;
  for (const auto& [key, v] : j.items()) {
    const char* k = key.c_str();
    if (key == "preset") read_field(v, k, c.preset);
    else if (key == "alpha") read_field(v, k, c.alpha);
    else if (key == "beta") read_field(v, k, c.beta);
    else if (key == "n_lift") read_field(v, k, c.n_lift);
    else if (key == "sigma") read_field(v, k, c.sigma);
    else if (key == "a") read_field(v, k, c.a);
    else if (key == "b") read_field(v, k, c.b);
    else if (key == "excitation") read_field(v, k, c.excitation);
    else if (key == "a_own") read_field(v, k, c.a_own);
    else if (key == "a_agg") read_field(v, k, c.a_agg);
    else if (key == "a_matrix") read_field(v, k, c.a_matrix);
    else if (key == "gamma_cev") read_field(v, k, c.gamma_cev);
    else if (key == "a_nu") {
      if (v.is_null()) {
        c.a_nu.reset();
      } else {
        double x = 0.0;
        read_field(v, k, x);
        c.a_nu = x;
      }
    }
    else if (key == "b_nu") read_field(v, k, c.b_nu);
    else if (key == "c_nu") read_field(v, k, c.c_nu);
    else if (key == "m1") read_field(v, k, c.m1);
    else if (key == "sigma_c") read_field(v, k, c.sigma_c);
    else if (key == "a_c") read_field(v, k, c.a_c);
    else if (key == "b_c") read_field(v, k, c.b_c);
    else if (key == "dt") read_field(v, k, c.dt);
    else if (key == "dt_prime") read_field(v, k, c.dt_prime);
    else if (key == "horizon") read_field(v, k, c.horizon);
    else if (key == "burn_in") read_field(v, k, c.burn_in);
    else if (key == "n_paths") read_field(v, k, c.n_paths);
    else if (key == "seed") read_field(v, k, c.seed);
    else if (key == "threads") read_field(v, k, c.threads);
    else if (key == "deterministic") read_field(v, k, c.deterministic);
    else if (key == "q") {
      if (v.is_number()) {
        c.q = {v.get<double>()};
      } else {
        read_field(v, k, c.q);
      }
    }
    else if (key == "max_lag") read_field(v, k, c.max_lag);
    else if (key == "acf_stride") read_field(v, k, c.acf_stride);
    else if (key == "z0") read_field(v, k, c.z0);
    else if (key == "record_every") read_field(v, k, c.record_every);
    else if (key == "hist_lo") read_field(v, k, c.hist_lo);
    else if (key == "hist_hi") read_field(v, k, c.hist_hi);
    else if (key == "hist_bins") read_field(v, k, c.hist_bins);
    else if (key == "hist_log") read_field(v, k, c.hist_log);
    else if (key == "freeze_after_diffusion") read_field(v, k, c.freeze_after_diffusion);
    else if (key == "srd_noise") read_field(v, k, c.srd_noise);
    else if (key == "tsou_method") read_field(v, k, c.tsou_method);
    else if (key == "out") read_field(v, k, c.out);
    else throw ConfigError("config: unknown field '" + key + "'");
  }
}

/// Defaults of a preset (desk scale).
inline ExperimentConfig preset_defaults(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "test2" || name == "stationary-mean") {
    // base defaults
  } else if (name == "test1") {
    c.excitation = "own";
    c.q.clear();
  } else if (name == "cev") {
    c.sigma = 1.0;
    c.gamma_cev = 0.5;
    c.q.clear();
  } else if (name == "riccati") {
    c.n_lift = 512;
    c.q = {-1.0};
    c.record_every = 1.0;
  } else if (name == "coupled") {
    c.sigma = 0.0;
    c.excitation = "none";
    c.horizon = 4000.0;
    c.burn_in = 2000.0;
    c.q.clear();
    c.max_lag = 0;
  } else if (name == "hitting-time") {
    c.dt = 1e-3;
    c.horizon = 10.0;
    c.n_paths = 100000;
    c.hist_lo = 0.0;
    c.hist_hi = 5.0;
    c.hist_log = false;
  } else if (name == "srd-test") {
    c.dt = 1e-3;
    c.horizon = 10.0;
    c.n_paths = 100000;
  } else {
    std::ostringstream os;
    os << "config: unknown preset '" << name << "' (";
    for (std::size_t i = 0; i < preset_names().size(); ++i) {
      os << (i ? "|" : "") << preset_names()[i];
    }
    os << ")";
    throw ConfigError(os.str());
  }
  return c;
}

/// A config object, or a run manifest whose "config" member is one.
inline nlohmann::json config_object(const nlohmann::json& doc) {
  if (doc.is_object() && doc.contains("manifest_version") && doc.contains("config")) {
    return doc.at("config");
  }
  return doc;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("config: cannot read " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path + " is not valid JSON (" + e.what() + ")");
  }
}

/// Preset defaults, then the file, then the flag overrides.
inline ExperimentConfig resolve_config(const std::optional<std::string>& preset_flag,
                                       const nlohmann::json& file_obj,
                                       const nlohmann::json& flag_obj) {
  std::string preset = "test2";
  if (file_obj.is_object() && file_obj.contains("preset")) {
    preset = file_obj.at("preset").get<std::string>();
  }
  if (preset_flag) preset = *preset_flag;
  ExperimentConfig c = preset_defaults(preset);
  if (!file_obj.is_null()) apply_json(c, file_obj);
  if (!flag_obj.is_null()) apply_json(c, flag_obj);
  c.preset = preset;
  return c;
}

inline ModelSpec build_model(const ExperimentConfig& c) {
  ModelParams p;
  p.law = MixingLaw{c.alpha, c.beta};
  p.n_lift = c.n_lift;
  p.b_nu = c.b_nu;
  p.c_nu = c.c_nu;
  p.m1 = c.m1;
  p.a_nu = c.a_nu ? *c.a_nu : -1.0;
  if (c.a_nu && *c.a_nu < 0.0) throw ConfigError("config: a_nu must be >= 0");
  p.sigma = c.sigma;
  p.a = c.a;
  p.b = c.b;
  p.excitation = detail::parse_excitation(c.excitation);
  p.a_own = c.a_own;
  p.a_agg = c.a_agg;
  p.a_matrix = c.a_matrix;
  p.gamma_cev = c.gamma_cev;
  return make_model(p);
}

inline CoupledSpec build_coupled(const ExperimentConfig& c) {
  ExperimentConfig qc = c;
  qc.sigma = 0.0;
  qc.excitation = "none";
  qc.gamma_cev = 0.0;
  ExperimentConfig cc = c;
  cc.sigma = c.sigma_c;
  cc.a = 0.0;
  cc.excitation = "none";
  CoupledSpec cs{build_model(qc), build_model(cc), c.a_c, c.b_c};
  validate(cs);
  return cs;
}

inline StepOptions step_options(const ExperimentConfig& c) {
  StepOptions o;
  o.dt = c.dt;
  o.freeze_after_diffusion = c.freeze_after_diffusion;
  o.srd_noise = detail::parse_srd_noise(c.srd_noise);
  o.tsou_method = detail::parse_tsou_method(c.tsou_method);
  return o;
}

inline std::vector<double> histogram_edges(const ExperimentConfig& c) {
  if (c.hist_bins == 0) return {};
  const Histogram h = c.hist_log ? Histogram::logarithmic(c.hist_lo, c.hist_hi, c.hist_bins)
                                 : Histogram::uniform(c.hist_lo, c.hist_hi, c.hist_bins);
  return h.edges();
}

/// SHA-1 of "blob <size>\0<bytes>", the hash git assigns to file contents.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw DomainError("sha1: cannot allocate digest context");
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw DomainError("sha1: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) {
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return os.str();
}

/// `digits` significant figures, trailing zeros kept.
inline std::string sig_figs(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << std::showpoint << v;
  return os.str();
}

struct ValidationReport {
  bool ok = true;
  nlohmann::json detail;
};

/// Dry-run admissibility report; never throws on inadmissible parameters.
inline ValidationReport validate_config(const ExperimentConfig& c) {
  ValidationReport rep;
  auto& d = rep.detail;
  d["preset"] = c.preset;

  const bool srd_preset = c.preset == "srd-test" || c.preset == "hitting-time";
  if (srd_preset) {
    // dZ = sqrt(Z) dW: a1 = 0, c1 = 1.
    d["feller"] = {{"a1", 0.0}, {"two_c1_sq", 2.0}, {"satisfied", false},
                   {"regime", "boundary-touching"}};
    const bool z_ok = c.z0 > 0.0 && c.z0 <= 1.0;
    d["z0"] = {{"value", c.z0}, {"ok", z_ok}};
    rep.ok = z_ok && c.dt > 0.0;
    return rep;
  }

  double m1 = std::numeric_limits<double>::quiet_NaN();
  double abar = 0.0;
  try {
    TemperedStableMeasure m{c.a_nu ? *c.a_nu : calibrate_a_nu(c.b_nu, c.c_nu, c.m1), c.b_nu,
                            c.c_nu};
    validate(m);
    m1 = moment_mk(m, 1);
    const auto e = detail::parse_excitation(c.excitation);
    if (e == Excitation::own) abar = c.a_own;
    if (e == Excitation::aggregate) abar = c.a_agg;
    if (e == Excitation::matrix) {
      for (double v : c.a_matrix) abar = std::max(abar, v);
    }
    const auto cr = contraction_check(abar, m1);
    d["contraction"] = {{"abar_m1", cr.abar_m1}, {"margin", cr.margin}, {"pass", cr.pass}};
    rep.ok = rep.ok && cr.pass;
  } catch (const Error& e) {
    d["contraction"] = {{"pass", false}, {"error", e.what()}};
    rep.ok = false;
  }

  nlohmann::json qs = nlohmann::json::array();
  const bool uses_q = c.preset == "riccati" || c.preset == "test2" || c.preset == "cev" ||
                      c.preset == "test1" || c.preset == "stationary-mean";
  if (uses_q) {
    for (double q : c.q) {
      nlohmann::json e{{"q", q}};
      if (q > 0.0) {
        const TemperedStableMeasure m{1.0, c.b_nu, c.c_nu};
        const bool exists = levy_pos_in_domain(m, q);
        e["exists"] = exists;
        if (!exists) {
          std::ostringstream os;
          os << "E[exp(q X)] does not exist for q > b_nu = " << c.b_nu;
          e["reason"] = os.str();
          rep.ok = false;
        }
      } else {
        e["exists"] = true;
      }
      qs.push_back(e);
    }
  }
  d["q_domain"] = qs;

  // Feller regime per lift component: a1 = r_i b/N against 2 c1^2 = 2 sigma^2 r_i.
  try {
    const auto grid = build_lift(MixingLaw{c.alpha, c.beta}, c.n_lift);
    std::size_t satisfied = 0;
    for (double r : grid.speeds) {
      const double a1 = r * c.b / static_cast<double>(c.n_lift);
      const double c1 = c.sigma * std::sqrt(r);
      if (a1 >= 2.0 * c1 * c1) ++satisfied;
    }
    d["feller"] = {{"components", c.n_lift},
                   {"satisfied", satisfied},
                   {"regime", satisfied == c.n_lift ? "boundary-avoiding" : "boundary-touching"}};
  } catch (const Error& e) {
    d["feller"] = {{"error", e.what()}};
    rep.ok = false;
  }

  try {
    if (c.preset == "coupled") {
      (void)build_coupled(c);
    } else {
      (void)build_model(c);
    }
    d["model_valid"] = true;
  } catch (const Error& e) {
    d["model_valid"] = false;
    d["model_error"] = e.what();
    rep.ok = false;
  }
  d["ok"] = rep.ok;
  return rep;
}

struct RunOutput {
  std::vector<std::string> files;
  std::vector<std::string> summary;  // human-readable lines for stdout
  StatsReport stats;
};

namespace detail {

inline RecorderConfig recorder_config(const ExperimentConfig& c) {
  RecorderConfig r;
  r.burn_in = c.burn_in;
  r.acf_stride = c.max_lag > 0 ? c.acf_stride : 0.0;
  r.exp_q = c.q;
  r.hist_x = histogram_edges(c);
  return r;
}

inline SimulationConfig simulation_config(const ExperimentConfig& c) {
  SimulationConfig s;
  s.n_paths = c.n_paths;
  s.horizon = c.horizon;
  s.seed = c.seed;
  s.threads = c.threads;
  s.deterministic = c.deterministic;
  s.step = step_options(c);
  s.recorder = recorder_config(c);
  return s;
}

inline void add_entry(StatsReport& rep, const std::string& name, double v,
                      double se = std::numeric_limits<double>::quiet_NaN()) {
  rep.entries.push_back({name, v, se});
}

inline void run_lifted(const ExperimentConfig& c, const std::filesystem::path& dir,
                       RunOutput& out) {
  const ModelSpec spec = build_model(c);
  const auto res = simulate_paths(spec, simulation_config(c));
  std::size_t max_lag = c.max_lag;
  out.stats = finalize(res.recorder, false, max_lag);
  add_entry(out.stats, "min_component", res.min_component);
  if (contraction_check(spec).pass) {
    add_entry(out.stats, "reference_mean", stationary_mean(spec).mean_x);
  }
  if (c.preset == "test1") {
    const double m1 = moment_mk(spec.measure, 1);
    const double m2 = moment_mk(spec.measure, 2);
    add_entry(out.stats, "reference_variance",
              spec.a / (2.0 * (1.0 - m1) * (1.0 - m1)) * (spec.sigma * spec.sigma * m1 + m2));
    for (auto& p : out.stats.acf) p.exact = acf_exact(c.alpha, c.beta, m1, p.lag);
    add_entry(out.stats, "acf_rms_error", acf_rms_error(out.stats.acf));
  }
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.push_back("stats.csv");
  if (!out.stats.acf.empty()) {
    csv::write_acf((dir / "acf.csv").string(), out.stats.acf);
    out.files.push_back("acf.csv");
  }
  if (!res.recorder.hist_x().empty_edges()) {
    csv::write_pdf((dir / "pdf.csv").string(), res.recorder.hist_x());
    out.files.push_back("pdf.csv");
  }
  out.summary.push_back("mean = " + sig_figs(out.stats.value("mean"), 6) + " (se " +
                        sig_figs(out.stats.std_error("mean"), 2) + ")");
  out.summary.push_back("variance = " + sig_figs(out.stats.value("variance"), 6));
  for (double q : c.q) {
    out.summary.push_back("E[exp(" + sig_figs(q, 3) + " X)] = " +
                          sig_figs(out.stats.value(exp_moment_name(q)), 6));
  }
}

inline void run_coupled(const ExperimentConfig& c, const std::filesystem::path& dir,
                        RunOutput& out) {
  const CoupledSpec cs = build_coupled(c);
  auto sim = simulation_config(c);
  sim.recorder.hist_y = sim.recorder.hist_x;
  sim.recorder.joint = !sim.recorder.hist_x.empty();
  const auto res = simulate_paths(cs, sim);
  out.stats = finalize(res.recorder, true, c.max_lag);
  add_entry(out.stats, "min_component", res.min_component);
  add_entry(out.stats, "predicted_mean_y", c.a_c + c.b_c * out.stats.value("mean"),
            c.b_c * out.stats.std_error("mean"));
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.push_back("stats.csv");
  if (!out.stats.acf.empty()) {
    csv::write_acf((dir / "acf.csv").string(), out.stats.acf);
    out.files.push_back("acf.csv");
  }
  if (!res.recorder.hist_x().empty_edges()) {
    csv::write_pdf((dir / "pdf.csv").string(), res.recorder.hist_x());
    csv::write_pdf((dir / "pdf_c.csv").string(), res.recorder.hist_y());
    csv::write_pdf_joint((dir / "pdf_joint.csv").string(), res.recorder.hist_joint());
    out.files.insert(out.files.end(), {"pdf.csv", "pdf_c.csv", "pdf_joint.csv"});
  }
  out.summary.push_back("mean Q = " + sig_figs(out.stats.value("mean"), 6));
  out.summary.push_back("mean C = " + sig_figs(out.stats.value("mean_y"), 6) +
                        " (a_c + b_c E[Q] = " + sig_figs(out.stats.value("predicted_mean_y"), 6) +
                        ")");
  out.summary.push_back("cov(Q, C) = " + sig_figs(out.stats.value("covariance"), 6));
}

inline void run_riccati(const ExperimentConfig& c, const std::filesystem::path& dir,
                        RunOutput& out) {
  const ModelSpec spec = build_model(c);
  MomentOptions opt;
  opt.dt_prime = c.dt_prime;
  opt.record_every = c.record_every;
  for (double q : c.q) {
    const auto res = exponential_moment(spec, q, opt);
    add_entry(out.stats, exp_moment_name(q), res.value);
    add_entry(out.stats, "riccati_time_q=" + sig_figs(q, 6), res.time);
    std::ostringstream qs;
    qs << q;
    const std::string name = c.q.size() == 1 ? "riccati.csv" : "riccati_q=" + qs.str() + ".csv";
    auto f = csv::open((dir / name).string());
    f << "time,F,max_G,min_G\n";
    for (const auto& p : res.trajectory) {
      f << csv::fmt(p.time) << ',' << csv::fmt(p.f) << ',' << csv::fmt(p.max_g) << ','
        << csv::fmt(p.min_g) << '\n';
    }
    out.files.push_back(name);
    out.summary.push_back("E[exp(" + sig_figs(q, 3) + " X)] = " + sig_figs(res.value, 4));
  }
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.insert(out.files.begin(), "stats.csv");
}

inline void run_stationary_mean(const ExperimentConfig& c, const std::filesystem::path& dir,
                                RunOutput& out) {
  const ModelSpec spec = build_model(c);
  const auto fp = stationary_mean(spec);
  const auto direct = stationary_mean_direct(spec);
  const auto cr = contraction_check(spec);
  add_entry(out.stats, "mean", fp.mean_x);
  add_entry(out.stats, "mean_direct", direct.mean_x);
  add_entry(out.stats, "fixed_point_iterations", static_cast<double>(fp.iterations));
  add_entry(out.stats, "fixed_point_residual", fp.residual);
  add_entry(out.stats, "abar_m1", cr.abar_m1);
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.push_back("stats.csv");
  out.summary.push_back("stationary mean E[X] = " + sig_figs(fp.mean_x, 4));
}

inline void run_hitting(const ExperimentConfig& c, const std::filesystem::path& dir,
                        RunOutput& out) {
  const auto sample = srd_hitting_sample(c.z0, c.dt, c.n_paths, c.seed, c.horizon,
                                         parse_srd_noise(c.srd_noise));
  const auto s = summarize(sample.tau);
  const auto exact = hitting_moments_exact(c.z0);
  add_entry(out.stats, "mean_tau", s.mean, s.mean_se);
  add_entry(out.stats, "variance_tau", s.variance, s.variance_se);
  add_entry(out.stats, "exact_mean_tau", exact.mean);
  add_entry(out.stats, "exact_variance_tau", exact.variance);
  add_entry(out.stats, "censored", static_cast<double>(sample.censored));
  add_entry(out.stats, "samples", static_cast<double>(s.n));
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.push_back("stats.csv");
  const auto edges = histogram_edges(c);
  if (!edges.empty()) {
    Histogram h(edges);
    for (double t : sample.tau) h.add(t);
    csv::write_pdf((dir / "pdf.csv").string(), h);
    out.files.push_back("pdf.csv");
  }
  out.summary.push_back("E[tau] = " + sig_figs(s.mean, 5) + " (exact " + sig_figs(exact.mean, 5) +
                        ")");
  out.summary.push_back("V[tau] = " + sig_figs(s.variance, 5) + " (exact " +
                        sig_figs(exact.variance, 5) + ")");
}

inline void run_srd_test(const ExperimentConfig& c, const std::filesystem::path& dir,
                         RunOutput& out) {
  const auto every = static_cast<std::uint64_t>(std::max(1.0, std::round(c.record_every / c.dt)));
  const auto rows = srd_martingale_profile(c.z0, c.dt, c.horizon, c.n_paths, c.seed, every,
                                           parse_srd_noise(c.srd_noise));
  double max_mean_err = 0.0;
  double max_var_err = 0.0;
  auto f = csv::open((dir / "martingale.csv").string());
  f << "time,mean,variance,exact_mean,exact_variance\n";
  for (const auto& r : rows) {
    const double ev = c.z0 * r.time;
    max_mean_err = std::max(max_mean_err, std::abs(r.mean - c.z0));
    max_var_err = std::max(max_var_err, std::abs(r.variance - ev));
    f << csv::fmt(r.time) << ',' << csv::fmt(r.mean) << ',' << csv::fmt(r.variance) << ','
      << csv::fmt(c.z0) << ',' << csv::fmt(ev) << '\n';
  }
  f.close();
  add_entry(out.stats, "max_mean_error", max_mean_err);
  add_entry(out.stats, "max_variance_error", max_var_err);
  add_entry(out.stats, "final_variance", rows.back().variance);
  csv::write_stats((dir / "stats.csv").string(), out.stats);
  out.files.insert(out.files.end(), {"martingale.csv", "stats.csv"});
  out.summary.push_back("max |mean - z0| = " + sig_figs(max_mean_err, 3));
  out.summary.push_back("max |variance - z0 t| = " + sig_figs(max_var_err, 3));
}

}  // namespace detail

/// Output directory: the configured one, else $SUPERLIFT_OUT/<preset>, else
/// ./superlift_out/<preset>.
inline std::filesystem::path output_dir(const ExperimentConfig& c) {
  if (!c.out.empty()) return c.out;
  const char* root = std::getenv("SUPERLIFT_OUT");
  const std::filesystem::path base = root != nullptr && *root != '\0' ? root : "superlift_out";
  return base / c.preset;
}

/// Runs the preset, writes its CSV files and manifest.json into the output
/// directory. `input_bytes` is the raw config file (empty when none).
inline RunOutput run(const ExperimentConfig& c, const std::string& input_bytes = {}) {
  const auto dir = output_dir(c);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());

  RunOutput out;
  const std::string& p = c.preset;
  if (p == "test1" || p == "test2" || p == "cev") {
    detail::run_lifted(c, dir, out);
  } else if (p == "coupled") {
    detail::run_coupled(c, dir, out);
  } else if (p == "riccati") {
    detail::run_riccati(c, dir, out);
  } else if (p == "stationary-mean") {
    detail::run_stationary_mean(c, dir, out);
  } else if (p == "hitting-time") {
    detail::run_hitting(c, dir, out);
  } else if (p == "srd-test") {
    detail::run_srd_test(c, dir, out);
  } else {
    (void)preset_defaults(p);  // throws with the list of presets
  }

  nlohmann::json cfg = to_json(c);
  cfg.erase("out");
  nlohmann::json manifest;
  manifest["manifest_version"] = 1;
  manifest["tool"] = "superlift";
  manifest["preset"] = c.preset;
  manifest["seed"] = c.seed;
  manifest["config"] = cfg;
  manifest["inputs"] = {{"config_sha1", git_blob_sha1(cfg.dump())},
                        {"config_file_sha1", input_bytes.empty()
                                                 ? nlohmann::json(nullptr)
                                                 : nlohmann::json(git_blob_sha1(input_bytes))}};
  manifest["outputs"] = out.files;
  std::ofstream mf(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) throw ConfigError("cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << '\n';
  out.files.push_back("manifest.json");
  return out;
}

}  // namespace superlift
