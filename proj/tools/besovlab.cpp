// besovlab command-line driver.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "besovlab/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<long long> paths;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool plot_script = false;
};

nlohmann::json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
}

int run(besovlab::ExperimentKind kind, const Options& o) {
  using namespace besovlab;
  const nlohmann::json j = read_config(o.config);
  if (j.is_object() && j.contains("kind") && j["kind"].is_string() && j["kind"].get<std::string>() != to_string(kind))
    throw std::invalid_argument("config: kind '" + j["kind"].get<std::string>() + "' does not match subcommand '" +
                                to_string(kind) + "'");
  Experiment exp = experiment_from_json(j);
  exp.kind = kind;
  exp.out = o.out;
  if (o.paths) {
    if (*o.paths < 1) throw std::invalid_argument("--paths must be >= 1");
    exp.paths = static_cast<std::size_t>(*o.paths);
  }
  if (o.seed) exp.seed = *o.seed;
  if (o.threads) exp.threads = std::max(1u, *o.threads);
  exp.plot_script = exp.plot_script || o.plot_script;
  const auto result = run_experiment(exp);
  std::cout << result.summary.dump(2) << "\n" << "wrote " << result.out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using besovlab::ExperimentKind;
  CLI::App app{"besovlab: Besov regularity and adaptive approximation of SPDE solutions on polygons"};
  app.set_version_flag("--version", besovlab::version_string);
  app.require_subcommand(1);

  Options o;
  std::optional<ExperimentKind> chosen;
  const std::pair<const char*, ExperimentKind> commands[] = {
      {"simulate", ExperimentKind::simulate},
      {"regularity", ExperimentKind::regularity},
      {"approx-rates", ExperimentKind::approx_rates},
      {"noise-check", ExperimentKind::noise_check},
      {"norm-equivalence", ExperimentKind::norm_equivalence},
  };
  const char* help[] = {
      "run SPDE paths and record snapshots, diagnostics and optional analyses",
      "estimate Besov smoothness exponents from wavelet coefficient decay",
      "compare best-N-term and uniform approximation rates",
      "check noise summability and the Ito isometry",
      "compare wavelet and modulus-of-smoothness Besov norms",
  };
  for (std::size_t i = 0; i < std::size(commands); ++i) {
    auto* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("--config", o.config, "JSON configuration file")->required()->envname("BESOVLAB_CONFIG");
    sub->add_option("--out", o.out, "output directory")->required()->envname("BESOVLAB_OUT");
    sub->add_option("--paths", o.paths, "number of Monte-Carlo paths")->envname("BESOVLAB_PATHS");
    sub->add_option("--seed", o.seed, "base seed")->envname("BESOVLAB_SEED");
    sub->add_option("--threads", o.threads, "worker threads")->envname("BESOVLAB_THREADS");
    sub->add_flag("--plot-script", o.plot_script, "also write a matplotlib script for the rate plot");
    const auto kind = commands[i].second;
    sub->callback([&chosen, kind] { chosen = kind; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return run(*chosen, o);
  } catch (const std::invalid_argument& e) {
    std::cerr << "besovlab: invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "besovlab: error: " << e.what() << "\n";
    return 1;
  }
}
