// superlift: run or validate a preset experiment.
//
// Exit codes: 0 success, 2 configuration error, 3 domain error, 4 sampler
// error. Errors are reported on stderr as a single JSON object.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "superlift/errors.hpp"
#include "superlift/experiment.hpp"

namespace {

int report_error(const char* kind, const std::string& message, int code) {
  nlohmann::json e{{"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << e.dump() << '\n';
  return code;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw superlift::ConfigError("config: cannot read " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate and analyse lifted superposition models"};
  app.set_version_flag("--version", "superlift 0.1.0");

  std::string config_path;
  std::optional<std::string> preset;
  bool validate_only = false;
  bool list_presets = false;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool deterministic = false;
  bool fast = false;
  std::optional<std::string> out;
  std::vector<double> q;

  app.add_option("-c,--config", config_path, "JSON config file or a previous manifest.json");
  app.add_option("-p,--preset", preset, "Preset experiment");
  app.add_flag("--validate", validate_only, "Report admissibility checks and exit");
  app.add_flag("--list-presets", list_presets, "List presets and exit");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--threads", threads, "Worker threads");
  app.add_flag("--deterministic", deterministic, "Results independent of thread count (default)");
  app.add_flag("--fast", fast, "Allow thread-count dependent scheduling");
  app.add_option("-o,--out", out, "Output directory (default $SUPERLIFT_OUT/<preset>)");
  app.add_option("--q", q, "Exponential-moment arguments")->expected(1, -1);

  std::map<std::string, std::optional<double>> num;
  const std::vector<std::pair<std::string, std::string>> numeric_flags{
      {"--alpha", "alpha"},       {"--beta", "beta"},         {"--sigma", "sigma"},
      {"--a", "a"},               {"--b", "b"},               {"--a-own", "a_own"},
      {"--a-agg", "a_agg"},       {"--gamma-cev", "gamma_cev"}, {"--a-nu", "a_nu"},
      {"--b-nu", "b_nu"},         {"--c-nu", "c_nu"},         {"--m1", "m1"},
      {"--sigma-c", "sigma_c"},   {"--a-c", "a_c"},           {"--b-c", "b_c"},
      {"--dt", "dt"},             {"--dt-prime", "dt_prime"}, {"--horizon", "horizon"},
      {"--burn-in", "burn_in"},   {"--acf-stride", "acf_stride"}, {"--z0", "z0"},
      {"--record-every", "record_every"}, {"--hist-lo", "hist_lo"}, {"--hist-hi", "hist_hi"}};
  for (const auto& [flag, key] : numeric_flags) app.add_option(flag, num[key]);

  std::map<std::string, std::optional<std::size_t>> counts;
  const std::vector<std::pair<std::string, std::string>> count_flags{
      {"--n-lift", "n_lift"}, {"--n-paths", "n_paths"}, {"--max-lag", "max_lag"},
      {"--hist-bins", "hist_bins"}};
  for (const auto& [flag, key] : count_flags) app.add_option(flag, counts[key]);

  std::map<std::string, std::optional<std::string>> words;
  const std::vector<std::pair<std::string, std::string>> word_flags{
      {"--excitation", "excitation"}, {"--srd-noise", "srd_noise"},
      {"--tsou-method", "tsou_method"}};
  for (const auto& [flag, key] : word_flags) app.add_option(flag, words[key]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("config", e.what(), 2);
  }

  if (list_presets) {
    for (const auto& p : superlift::preset_names()) std::cout << p << '\n';
    return 0;
  }

  try {
    nlohmann::json file_obj;
    std::string file_bytes;
    if (!config_path.empty()) {
      file_bytes = slurp(config_path);
      file_obj = superlift::config_object(superlift::read_json_file(config_path));
    }

    nlohmann::json flags = nlohmann::json::object();
    for (const auto& [key, v] : num) {
      if (v) flags[key] = *v;
    }
    for (const auto& [key, v] : counts) {
      if (v) flags[key] = *v;
    }
    for (const auto& [key, v] : words) {
      if (v) flags[key] = *v;
    }
    if (!q.empty()) flags["q"] = q;
    if (seed) flags["seed"] = *seed;
    if (threads) flags["threads"] = *threads;
    if (deterministic && fast) {
      throw superlift::ConfigError("--deterministic and --fast are exclusive");
    }
    if (deterministic) flags["deterministic"] = true;
    if (fast) flags["deterministic"] = false;
    if (out) flags["out"] = *out;

    const auto cfg = superlift::resolve_config(preset, file_obj, flags);

    if (validate_only) {
      const auto rep = superlift::validate_config(cfg);
      std::cout << rep.detail.dump(2) << '\n';
      return 0;
    }

    const auto res = superlift::run(cfg, file_bytes);
    std::cout << "preset " << cfg.preset << ", output in " << superlift::output_dir(cfg).string()
              << '\n';
    for (const auto& line : res.summary) std::cout << line << '\n';
    return 0;
  } catch (const superlift::ConfigError& e) {
    return report_error("config", e.what(), 2);
  } catch (const nlohmann::json::exception& e) {
    return report_error("config", e.what(), 2);
  } catch (const superlift::DomainError& e) {
    return report_error("domain", e.what(), 3);
  } catch (const superlift::SamplerError& e) {
    return report_error("sampler", e.what(), 4);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
}
