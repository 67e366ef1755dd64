#pragma once

// Experiments: typed configurations for the five experiment kinds,
// Monte-Carlo paths on a worker pool, aggregation in path order and
// persistence of CSV, JSON and a hashed manifest.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <openssl/crypto.h>

#include "besovlab/approx.hpp"
#include "besovlab/besov.hpp"
#include "besovlab/io.hpp"
#include "besovlab/noise.hpp"
#include "besovlab/rng.hpp"
#include "besovlab/spde.hpp"
#include "besovlab/table_io.hpp"
#include "besovlab/testfunctions.hpp"

namespace besovlab {

inline constexpr const char* version_string = "1.0.0";

enum class ExperimentKind { simulate, regularity, approx_rates, noise_check, norm_equivalence };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::simulate: return "simulate";
    case ExperimentKind::regularity: return "regularity";
    case ExperimentKind::approx_rates: return "approx-rates";
    case ExperimentKind::noise_check: return "noise-check";
    case ExperimentKind::norm_equivalence: return "norm-equivalence";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::simulate, ExperimentKind::regularity, ExperimentKind::approx_rates,
                 ExperimentKind::noise_check, ExperimentKind::norm_equivalence})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("kind: unknown experiment kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Worker pool

/// Calls fn(i) for i in [0, count) on up to `threads` workers. Tasks are
/// handed out in index order; the first failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (count == 0) return;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Aggregation

struct Aggregate {
  std::size_t paths = 0;
  std::optional<double> tau;  ///< power mean (mean |x|^tau)^{1/tau} when set
  std::vector<double> mean;
  std::vector<double> stderr_;

  nlohmann::json entry(std::size_t i) const { return {{"mean", mean.at(i)}, {"stderr", stderr_.at(i)}}; }
};

/// Mean and standard error of each component across paths, folded in path
/// order. With tau the mean is the tau-power mean and the standard error is
/// propagated by the delta method.
inline Aggregate aggregate(const std::vector<std::vector<double>>& per_path, std::optional<double> tau = {}) {
  if (per_path.empty()) throw std::invalid_argument("aggregate: need at least one path");
  if (tau && !(*tau > 0)) throw std::invalid_argument("aggregate: tau must be positive");
  const std::size_t width = per_path.front().size();
  for (const auto& p : per_path)
    if (p.size() != width) throw std::invalid_argument("aggregate: paths have inconsistent schemas");
  Aggregate a;
  a.paths = per_path.size();
  a.tau = tau;
  const double K = static_cast<double>(per_path.size());
  for (std::size_t c = 0; c < width; ++c) {
    auto val = [&](std::size_t k) { return tau ? std::pow(std::abs(per_path[k][c]), *tau) : per_path[k][c]; };
    // shifted sums keep identical inputs exact
    const double x0 = val(0);
    double s = 0.0;
    for (std::size_t k = 0; k < per_path.size(); ++k) s += val(k) - x0;
    const double m = x0 + s / K;
    double ss = 0.0;
    for (std::size_t k = 0; k < per_path.size(); ++k) ss += (val(k) - m) * (val(k) - m);
    const double se = per_path.size() > 1 ? std::sqrt(ss / (K - 1) / K) : 0.0;
    if (tau) {
      const double pm = std::pow(m, 1.0 / *tau);
      a.mean.push_back(pm);
      a.stderr_.push_back(m > 0 ? se * pm / (*tau * m) : 0.0);
    } else {
      a.mean.push_back(m);
      a.stderr_.push_back(se);
    }
  }
  return a;
}

inline Aggregate aggregate_scalar(const std::vector<double>& values, std::optional<double> tau = {}) {
  std::vector<std::vector<double>> v;
  for (double x : values) v.push_back({x});
  return aggregate(v, tau);
}

// ---------------------------------------------------------------------------
// Configuration blocks

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

/// Runs f and prefixes any error with the config path it came from.
template <class F>
auto in_block(const std::string& where, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(where + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    if (msg.rfind(where, 0) == 0) throw;
    throw std::invalid_argument(where + ": " + msg);
  }
}

inline void check_domain_name(const std::string& name) { (void)load_domain(name); }

inline void check_function_name(const std::string& name) { (void)testfn::by_name(name); }

inline void check_spde(const SpdeConfig& c) {
  check_domain_name(c.domain);
  (void)build_basis(c.wavelet, 1);
  if (c.initial != "zero") check_function_name(c.initial);
  if (c.J < 2 || c.J > 12) throw std::invalid_argument("grid.J must lie in 2..12");
}

}  // namespace detail

struct ApproxSettings {
  ErrorNorm norm = ErrorNorm::W12();
  std::string wavelet = "spline-4.8";
  int j0 = 3;
  std::vector<std::size_t> N = dyadic_counts(16, 4096);
  double fit_lo = 16;
  double fit_hi = 4096;

  void validate(int J) const {
    (void)build_basis(wavelet, 1);
    if (j0 < 0 || j0 >= J) throw std::invalid_argument("j0 must lie in [0, J)");
    if (N.empty()) throw std::invalid_argument("N must not be empty");
    std::size_t in_window = 0;
    for (std::size_t n : N) in_window += n >= fit_lo && n <= fit_hi;
    if (in_window < 5) throw std::invalid_argument("fit window must contain at least 5 N values");
  }

  nlohmann::json to_json() const {
    return {{"norm", norm.name()}, {"wavelet", wavelet}, {"j0", j0}, {"N", N}, {"fit", {fit_lo, fit_hi}}};
  }
};

inline ApproxSettings approx_settings_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"norm", "wavelet", "j0", "N", "fit"}, "approx");
  return detail::in_block("approx", [&] {
    ApproxSettings s;
    if (j.contains("norm")) s.norm = error_norm_from_string(j["norm"].get<std::string>());
    s.wavelet = j.value("wavelet", s.wavelet);
    s.j0 = j.value("j0", s.j0);
    if (j.contains("N")) {
      const auto& n = j["N"];
      if (n.is_object()) s.N = dyadic_counts(n.at("lo").get<std::size_t>(), n.at("hi").get<std::size_t>());
      else s.N = n.get<std::vector<std::size_t>>();
    }
    if (j.contains("fit")) {
      const auto w = j["fit"].get<std::vector<double>>();
      if (w.size() != 2 || !(w[0] < w[1])) throw std::invalid_argument("fit must be [lo, hi] with lo < hi");
      s.fit_lo = w[0];
      s.fit_hi = w[1];
    }
    return s;
  });
}

struct RegularitySettings {
  std::string wavelet = "spline-4.8";
  int j0 = 3;
  double p = 2.0;

  void validate(int J) const {
    (void)build_basis(wavelet, 1);
    // the Sobolev fit uses levels j0 + 1 .. J - 3
    if (j0 < 0 || J - j0 < 7) throw std::invalid_argument("need j0 >= 0 and J - j0 >= 7 for a 4-level fit");
    if (!(p >= 1)) throw std::invalid_argument("p must be >= 1");
  }

  nlohmann::json to_json() const { return {{"wavelet", wavelet}, {"j0", j0}, {"p", p}}; }
};

inline RegularitySettings regularity_settings_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"wavelet", "j0", "p"}, "regularity");
  return detail::in_block("regularity", [&] {
    RegularitySettings s;
    s.wavelet = j.value("wavelet", s.wavelet);
    s.j0 = j.value("j0", s.j0);
    s.p = j.value("p", s.p);
    return s;
  });
}

/// Fields to analyse: a bundled test function on a domain, or the final
/// state of SPDE paths.
struct FieldSource {
  std::string function;  ///< empty when spde is set
  std::string domain = "lshape";
  int J = 9;
  std::optional<SpdeConfig> spde;

  int level() const { return spde ? spde->J : J; }
  std::string domain_name() const { return spde ? spde->domain : domain; }

  nlohmann::json to_json() const {
    if (spde) return {{"spde", spde->to_json()}};
    return {{"function", function}, {"domain", domain}, {"J", J}};
  }
};

inline FieldSource field_source_from_json(const nlohmann::json& j) {
  detail::check_keys(j, {"function", "domain", "J", "spde"}, "source");
  return detail::in_block("source", [&] {
    FieldSource s;
    if (j.contains("spde") == j.contains("function"))
      throw std::invalid_argument("give exactly one of 'function' and 'spde'");
    if (j.contains("spde")) {
      s.spde = detail::in_block("source.spde", [&] { return spde_config_from_json(j["spde"]); });
      detail::in_block("source.spde", [&] {
        detail::check_spde(*s.spde);
        return 0;
      });
      return s;
    }
    s.function = j["function"].get<std::string>();
    detail::check_function_name(s.function);
    s.domain = j.value("domain", s.domain);
    detail::check_domain_name(s.domain);
    s.J = j.value("J", s.J);
    if (s.J < 4 || s.J > 12) throw std::invalid_argument("J must lie in 4..12");
    return s;
  });
}

struct SimulateConfig {
  SpdeConfig spde;
  std::optional<ApproxSettings> approx;
  std::optional<RegularitySettings> regularity;
  std::optional<double> tau;  ///< power of the (path, time) average of the diagnostic
  bool save_coefficients = false;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"spde", spde.to_json()}, {"save_coefficients", save_coefficients}};
    if (approx) j["approx"] = approx->to_json();
    if (regularity) j["regularity"] = regularity->to_json();
    if (tau) j["tau"] = *tau;
    return j;
  }
};

struct RegularityConfig {
  FieldSource source;
  RegularitySettings settings;
  nlohmann::json to_json() const { return {{"source", source.to_json()}, {"regularity", settings.to_json()}}; }
};

struct ApproxRatesConfig {
  FieldSource source;
  ApproxSettings settings;
  nlohmann::json to_json() const { return {{"source", source.to_json()}, {"approx", settings.to_json()}}; }
};

struct NoiseCheckConfig {
  NoiseModel noise;
  int J = 12;                    ///< summability truncation
  std::vector<int> orders{0, 1};
  int isometry_J = 6;            ///< truncation level of the sampled expansion
  double dt = 1e-3;
  std::size_t samples = 100000;

  nlohmann::json to_json() const {
    return {{"noise", noise.to_json()},
            {"J", J},
            {"orders", orders},
            {"isometry", {{"J", isometry_J}, {"dt", dt}, {"samples", samples}}}};
  }
};

struct NormEquivalenceConfig {
  std::string domain = "lshape";
  std::vector<std::string> functions{"bump", "spline", "singular"};
  std::vector<int> levels{8, 9, 10};
  std::vector<BesovParams> params{{1.0, 2.0, 2.0, 2}, {0.8, 3.0, 3.0, 2}};
  std::vector<std::string> wavelets{"spline-2.2", "spline-4.8"};
  int j0 = 3;
  ModulusOptions modulus;
  double width_bound = 50.0;
  double drift_bound = 0.2;

  nlohmann::json to_json() const {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& p : params) ps.push_back({{"s", p.s}, {"p", p.p}, {"q", p.q}, {"n", p.n}});
    return {{"domain", domain},
            {"functions", functions},
            {"levels", levels},
            {"params", ps},
            {"wavelets", wavelets},
            {"j0", j0},
            {"modulus", {{"random_directions", modulus.random_directions}, {"seed", modulus.seed}}},
            {"width_bound", width_bound},
            {"drift_bound", drift_bound}};
  }
};

using ExperimentPayload =
    std::variant<SimulateConfig, RegularityConfig, ApproxRatesConfig, NoiseCheckConfig, NormEquivalenceConfig>;

struct Experiment {
  ExperimentKind kind = ExperimentKind::simulate;
  nlohmann::json config = nlohmann::json::object();  ///< kind-specific payload
  std::filesystem::path out;
  std::size_t paths = 1;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool plot_script = false;

  std::uint64_t path_seed(std::size_t i) const { return rng::derive_seed(seed, i); }
};

/// Reads the top level of a config file: "kind", "paths", "seed", "threads",
/// "plot_script" and the kind-specific blocks, which stay in `config`.
inline Experiment experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: must be a JSON object");
  Experiment e;
  e.config = j;
  detail::in_block("config", [&] {
    if (j.contains("kind")) e.kind = experiment_kind_from_string(j["kind"].get<std::string>());
    if (j.contains("paths")) {
      const auto k = j["paths"].get<long long>();
      if (k < 1) throw std::invalid_argument("paths: must be >= 1");
      e.paths = static_cast<std::size_t>(k);
    }
    if (j.contains("seed")) e.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("threads")) e.threads = std::max(1u, j["threads"].get<unsigned>());
    e.plot_script = j.value("plot_script", false);
    return 0;
  });
  for (const char* k : {"kind", "paths", "seed", "threads", "plot_script"}) e.config.erase(k);
  return e;
}

/// Parses and validates the payload of `exp` without running anything.
inline ExperimentPayload parse_payload(const Experiment& exp) {
  const auto& j = exp.config;
  using detail::check_keys;
  using detail::in_block;
  switch (exp.kind) {
    case ExperimentKind::simulate: {
      check_keys(j, {"spde", "approx", "regularity", "tau", "save_coefficients"}, "config");
      if (!j.contains("spde")) throw std::invalid_argument("config: simulate needs an 'spde' block");
      SimulateConfig c;
      c.spde = in_block("spde", [&] { return spde_config_from_json(j["spde"]); });
      in_block("spde", [&] {
        detail::check_spde(c.spde);
        return 0;
      });
      c.spde.seed = exp.seed;
      if (j.contains("approx")) {
        c.approx = approx_settings_from_json(j["approx"]);
        in_block("approx", [&] {
          c.approx->validate(c.spde.J);
          return 0;
        });
      }
      if (j.contains("regularity")) {
        c.regularity = regularity_settings_from_json(j["regularity"]);
        in_block("regularity", [&] {
          c.regularity->validate(c.spde.J);
          return 0;
        });
      }
      if (j.contains("tau")) {
        c.tau = in_block("tau", [&] { return j["tau"].get<double>(); });
        if (!(*c.tau > 0)) throw std::invalid_argument("tau: must be positive");
      }
      c.save_coefficients = in_block("save_coefficients", [&] { return j.value("save_coefficients", false); });
      return c;
    }
    case ExperimentKind::regularity: {
      check_keys(j, {"source", "regularity"}, "config");
      if (!j.contains("source")) throw std::invalid_argument("config: regularity needs a 'source' block");
      RegularityConfig c;
      c.source = field_source_from_json(j["source"]);
      if (c.source.spde) c.source.spde->seed = exp.seed;
      if (j.contains("regularity")) c.settings = regularity_settings_from_json(j["regularity"]);
      in_block("regularity", [&] {
        c.settings.validate(c.source.level());
        return 0;
      });
      return c;
    }
    case ExperimentKind::approx_rates: {
      check_keys(j, {"source", "approx"}, "config");
      if (!j.contains("source")) throw std::invalid_argument("config: approx-rates needs a 'source' block");
      ApproxRatesConfig c;
      c.source = field_source_from_json(j["source"]);
      if (c.source.spde) c.source.spde->seed = exp.seed;
      if (j.contains("approx")) c.settings = approx_settings_from_json(j["approx"]);
      in_block("approx", [&] {
        c.settings.validate(c.source.level());
        return 0;
      });
      return c;
    }
    case ExperimentKind::noise_check: {
      check_keys(j, {"noise", "J", "orders", "isometry"}, "config");
      NoiseCheckConfig c;
      if (j.contains("noise")) c.noise = in_block("noise", [&] { return noise_model_from_json(j["noise"]); });
      in_block("config", [&] {
        c.J = j.value("J", c.J);
        if (c.J <= c.noise.j0 || c.J > 40) throw std::invalid_argument("J must lie in (noise.j0, 40]");
        if (j.contains("orders")) c.orders = j["orders"].get<std::vector<int>>();
        for (int o : c.orders)
          if (o < 0 || o > 3) throw std::invalid_argument("orders must lie in 0..3");
        return 0;
      });
      if (j.contains("isometry")) {
        const auto& iso = j["isometry"];
        check_keys(iso, {"J", "dt", "samples"}, "isometry");
        in_block("isometry", [&] {
          c.isometry_J = iso.value("J", c.isometry_J);
          c.dt = iso.value("dt", c.dt);
          c.samples = iso.value("samples", c.samples);
          if (c.isometry_J <= c.noise.j0 || c.isometry_J > 10) throw std::invalid_argument("J must lie in (noise.j0, 10]");
          if (!(c.dt > 0)) throw std::invalid_argument("dt must be positive");
          if (c.samples < 2) throw std::invalid_argument("samples must be >= 2");
          return 0;
        });
      }
      c.noise.seed = exp.seed;
      return c;
    }
    case ExperimentKind::norm_equivalence: {
      check_keys(j, {"domain", "functions", "levels", "params", "wavelets", "j0", "modulus", "width_bound", "drift_bound"},
                 "config");
      NormEquivalenceConfig c;
      in_block("config", [&] {
        c.domain = j.value("domain", c.domain);
        detail::check_domain_name(c.domain);
        if (j.contains("functions")) c.functions = j["functions"].get<std::vector<std::string>>();
        for (const auto& f : c.functions) detail::check_function_name(f);
        if (j.contains("levels")) c.levels = j["levels"].get<std::vector<int>>();
        for (int J : c.levels)
          if (J < 5 || J > 11) throw std::invalid_argument("levels must lie in 5..11");
        if (j.contains("wavelets")) c.wavelets = j["wavelets"].get<std::vector<std::string>>();
        c.j0 = j.value("j0", c.j0);
        c.width_bound = j.value("width_bound", c.width_bound);
        c.drift_bound = j.value("drift_bound", c.drift_bound);
        if (c.functions.empty() || c.levels.empty() || c.wavelets.empty())
          throw std::invalid_argument("functions, levels and wavelets must not be empty");
        return 0;
      });
      if (j.contains("params")) {
        c.params.clear();
        for (std::size_t i = 0; i < j["params"].size(); ++i) {
          const auto& p = j["params"][i];
          const std::string where = "params[" + std::to_string(i) + "]";
          check_keys(p, {"s", "p", "q", "n"}, where);
          c.params.push_back(in_block(where, [&] {
            BesovParams bp{p.at("s").get<double>(), p.at("p").get<double>(), p.at("q").get<double>(), 2};
            bp.n = p.value("n", static_cast<int>(std::floor(bp.s)) + 1);
            bp.validate();
            return bp;
          }));
        }
      }
      if (j.contains("modulus")) {
        const auto& m = j["modulus"];
        check_keys(m, {"random_directions", "seed"}, "modulus");
        in_block("modulus", [&] {
          c.modulus.random_directions = m.value("random_directions", c.modulus.random_directions);
          c.modulus.seed = m.value("seed", c.modulus.seed);
          return 0;
        });
      }
      for (const auto& w : c.wavelets) {
        const auto b = in_block("wavelets", [&] { return build_basis(w, 1); });
        for (const auto& bp : c.params) {
          if (!(b.r > bp.s)) throw std::invalid_argument("params: s = " + format_double(bp.s) + " needs more vanishing moments than " + w + " has");
          if (!(bp.s > std::max(0.0, 2.0 * (1.0 / bp.p - 1.0)))) throw std::invalid_argument("params: s must exceed max(0, d(1/p - 1))");
        }
        if (c.j0 < 0 || c.j0 >= *std::min_element(c.levels.begin(), c.levels.end()) - 3)
          throw std::invalid_argument("j0: must leave at least 4 levels below the coarsest J");
      }
      return c;
    }
  }
  throw std::invalid_argument("config: unknown experiment kind");
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentResult {
  std::filesystem::path out;
  nlohmann::json summary;
};

namespace detail {

inline nlohmann::json versions() {
  return {{"besovlab", version_string},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"openssl", OpenSSL_version(OPENSSL_VERSION)},
          {"compiler", __VERSION__}};
}

inline std::string path_name(std::size_t i) {
  std::string s = std::to_string(i);
  return "path_" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

inline const char* plot_rates_script() {
  return R"(# Plots best-N-term and uniform approximation errors from approx_errors.csv.
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "approx_errors.csv"
with open(path) as f:
    rows = list(csv.DictReader(f))
N = [float(r["N"]) for r in rows]
plt.loglog(N, [float(r["best_mean"]) for r in rows], "o-", label="best N-term")
plt.loglog(N, [float(r["uniform_mean"]) for r in rows], "s-", label="uniform")
plt.xlabel("N")
plt.ylabel("error")
plt.legend()
plt.savefig("approx_rates.png", dpi=150)
)";
}

/// Per-path result of an approximation study, stripped to plain numbers.
struct PathRates {
  std::vector<double> best, uniform;
  std::vector<std::size_t> level_counts;
  std::vector<double> level_errors;
  RateFit best_fit, uniform_fit;
};

inline PathRates rates_of(const ApproxReport& r) {
  return {r.best, r.uniform, r.uniform_counts, r.uniform_level_errors, r.best_fit, r.uniform_fit};
}

inline nlohmann::json write_rates(OutputDir& dir, const ApproxSettings& s, const std::vector<PathRates>& paths,
                                  const Experiment& exp) {
  std::vector<std::vector<double>> best, uni;
  for (const auto& p : paths) {
    best.push_back(p.best);
    uni.push_back(p.uniform);
  }
  const auto ab = aggregate(best), au = aggregate(uni);
  Csv errors({"N", "best_mean", "best_stderr", "uniform_mean", "uniform_stderr"});
  for (std::size_t i = 0; i < s.N.size(); ++i) errors.row(s.N[i], ab.mean[i], ab.stderr_[i], au.mean[i], au.stderr_[i]);
  dir.write("approx_errors.csv", errors.str());

  Csv levels({"path", "n", "N", "error"});
  Csv fits({"path", "seed", "best_exponent", "best_stderr", "uniform_exponent", "uniform_stderr"});
  std::vector<double> eb, eu, gap;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto& p = paths[k];
    for (std::size_t n = 0; n < p.level_counts.size(); ++n) levels.row(k, n, p.level_counts[n], p.level_errors[n]);
    fits.row(k, std::to_string(exp.path_seed(k)), p.best_fit.exponent, p.best_fit.stderr_, p.uniform_fit.exponent,
             p.uniform_fit.stderr_);
    eb.push_back(p.best_fit.exponent);
    eu.push_back(p.uniform_fit.exponent);
    gap.push_back(p.best_fit.exponent - p.uniform_fit.exponent);
  }
  dir.write("approx_levels.csv", levels.str());
  dir.write("approx_fits.csv", fits.str());
  if (exp.plot_script) dir.write("plot_rates.py", plot_rates_script());
  return {{"norm", s.norm.name()},
          {"fit_window", {s.fit_lo, s.fit_hi}},
          {"best_exponent", aggregate_scalar(eb).entry(0)},
          {"uniform_exponent", aggregate_scalar(eu).entry(0)},
          {"gap", aggregate_scalar(gap).entry(0)}};
}

struct PathSmoothness {
  SmoothnessReport sobolev, adaptivity;
};

inline PathSmoothness smoothness_of(const Field& u, const WaveletBasis& b, const RegularitySettings& s) {
  const auto c = dwt2(u, b, s.j0);
  return {estimate_smoothness(c, s.p, SmoothnessMode::sobolev), estimate_smoothness(c, s.p, SmoothnessMode::adaptivity)};
}

inline nlohmann::json write_smoothness(OutputDir& dir, const std::vector<PathSmoothness>& paths, const Experiment& exp) {
  Csv est({"path", "seed", "s_star", "sobolev_residual", "alpha_star", "beta", "adaptivity_residual"});
  Csv lv({"path", "level", "level_norm"});
  std::vector<double> s, a;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto& p = paths[k];
    est.row(k, std::to_string(exp.path_seed(k)), p.sobolev.s_star, p.sobolev.residual, p.adaptivity.alpha_star,
            p.adaptivity.beta, p.adaptivity.residual);
    for (std::size_t i = 0; i < p.sobolev.levels.size(); ++i) lv.row(k, p.sobolev.levels[i], p.sobolev.level_norms[i]);
    s.push_back(p.sobolev.s_star);
    a.push_back(p.adaptivity.alpha_star);
  }
  dir.write("regularity.csv", est.str());
  dir.write("regularity_levels.csv", lv.str());
  return {{"s_star", aggregate_scalar(s).entry(0)}, {"alpha_star", aggregate_scalar(a).entry(0)}};
}

/// Final state u(T) of each SPDE path.
inline std::vector<Field> final_states(const SpdeConfig& base, const Experiment& exp) {
  SpdeConfig cfg = base;
  cfg.snapshots = {cfg.steps};
  cfg.diagnostics = false;
  const PolygonDomain dom = load_domain(cfg.domain);
  const DiscreteOperator op(dom, cfg.J, cfg.diffusion);
  std::vector<Field> out(exp.paths);
  parallel_for(exp.paths, exp.threads, [&](std::size_t k) {
    out[k] = run_path(cfg, dom, op, nullptr, exp.path_seed(k)).snapshots.back().u;
  });
  return out;
}

inline nlohmann::json run_simulate(const SimulateConfig& c, const Experiment& exp, OutputDir& dir) {
  const PolygonDomain dom = load_domain(c.spde.domain);
  const DiscreteOperator op(dom, c.spde.J, c.spde.diffusion);
  std::optional<WeightedQuadrature> quad;
  if (c.spde.diagnostics) quad.emplace(dom, c.spde.J);
  std::optional<WaveletBasis> abasis, rbasis;
  std::vector<std::uint8_t> eligible;
  if (c.approx) {
    abasis = build_basis(c.approx->wavelet, 1);
    eligible = eligible_indices(CoefficientTable(*abasis, c.approx->j0, c.spde.J), *abasis, dom);
  }
  if (c.regularity) rbasis = build_basis(c.regularity->wavelet, 1);

  struct Row {
    int step;
    double time, l2, diagnostic;
    int cg;
  };
  std::vector<std::vector<Row>> rows(exp.paths);
  std::vector<PathRates> rates(exp.paths);
  std::vector<PathSmoothness> smooth(exp.paths);
  std::vector<std::vector<char>> coeffs(exp.paths);

  parallel_for(exp.paths, exp.threads, [&](std::size_t k) {
    const auto tr = run_path(c.spde, dom, op, quad ? &*quad : nullptr, exp.path_seed(k));
    for (const auto& s : tr.snapshots)
      rows[k].push_back({s.step, s.time, s.l2, s.diagnostic, s.step > 0 ? tr.cg_iterations[s.step - 1] : 0});
    const Field& u = tr.snapshots.back().u;
    if (c.approx)
      rates[k] = rates_of(approximation_study(u, dom, *abasis, c.approx->j0, c.approx->norm, c.approx->N,
                                              c.approx->fit_lo, c.approx->fit_hi, &eligible));
    if (c.regularity) smooth[k] = smoothness_of(u, *rbasis, *c.regularity);
    if (c.save_coefficients) coeffs[k] = to_binary(dwt2(u, build_basis(c.spde.wavelet, 1), c.spde.noise ? c.spde.noise->j0 : 3));
  });

  std::vector<std::vector<double>> l2(exp.paths), diag(exp.paths);
  for (std::size_t k = 0; k < exp.paths; ++k) {
    Csv csv({"step", "time", "l2", "diagnostic", "cg_iterations"});
    for (const auto& r : rows[k]) {
      csv.row(r.step, r.time, r.l2, r.diagnostic, r.cg);
      l2[k].push_back(r.l2);
      diag[k].push_back(r.diagnostic);
    }
    dir.write("paths/" + path_name(k) + ".csv", csv.str());
    if (c.save_coefficients) dir.write("paths/" + path_name(k) + "_u.blct", std::string(coeffs[k].begin(), coeffs[k].end()));
  }
  const auto al2 = aggregate(l2), adiag = aggregate(diag);
  Csv snaps({"step", "time", "l2_mean", "l2_stderr", "diagnostic_mean", "diagnostic_stderr"});
  nlohmann::json snap_json = nlohmann::json::array();
  for (std::size_t i = 0; i < rows[0].size(); ++i) {
    snaps.row(rows[0][i].step, rows[0][i].time, al2.mean[i], al2.stderr_[i], adiag.mean[i], adiag.stderr_[i]);
    snap_json.push_back({{"step", rows[0][i].step}, {"time", rows[0][i].time}, {"l2", al2.entry(i)}, {"diagnostic", adiag.entry(i)}});
  }
  dir.write("snapshots.csv", snaps.str());

  nlohmann::json summary = {{"snapshots", snap_json}};
  if (c.spde.diagnostics) {
    // (path, time) average over all recorded snapshots
    std::vector<double> per_path;
    for (const auto& d : diag) {
      double s = 0.0;
      for (double v : d) s += c.tau ? std::pow(std::abs(v), *c.tau) : v;
      per_path.push_back(c.tau ? std::pow(s / static_cast<double>(d.size()), 1.0 / *c.tau) : s / static_cast<double>(d.size()));
    }
    const auto a = aggregate_scalar(per_path, c.tau);
    summary["diagnostic_average"] = a.entry(0);
    if (c.tau) summary["diagnostic_average"]["tau"] = *c.tau;
  }
  if (c.approx) summary["approx"] = write_rates(dir, *c.approx, rates, exp);
  if (c.regularity) summary["regularity"] = write_smoothness(dir, smooth, exp);
  return summary;
}

inline nlohmann::json run_regularity(const RegularityConfig& c, const Experiment& exp, OutputDir& dir) {
  const WaveletBasis b = build_basis(c.settings.wavelet, 1);
  std::vector<Field> fields;
  if (c.source.spde) {
    fields = final_states(*c.source.spde, exp);
  } else {
    fields.push_back(testfn::sample(load_domain(c.source.domain), c.source.J, testfn::by_name(c.source.function)));
  }
  std::vector<PathSmoothness> out(fields.size());
  parallel_for(fields.size(), exp.threads, [&](std::size_t k) { out[k] = smoothness_of(fields[k], b, c.settings); });
  auto s = write_smoothness(dir, out, exp);
  s["paths"] = fields.size();
  return s;
}

inline nlohmann::json run_approx_rates(const ApproxRatesConfig& c, const Experiment& exp, OutputDir& dir) {
  const WaveletBasis b = build_basis(c.settings.wavelet, 1);
  const PolygonDomain dom = load_domain(c.source.domain_name());
  std::vector<Field> fields;
  if (c.source.spde) {
    fields = final_states(*c.source.spde, exp);
  } else {
    fields.push_back(testfn::sample(dom, c.source.J, testfn::by_name(c.source.function)));
  }
  const auto eligible = eligible_indices(CoefficientTable(b, c.settings.j0, c.source.level()), b, dom);
  std::vector<PathRates> out(fields.size());
  parallel_for(fields.size(), exp.threads, [&](std::size_t k) {
    out[k] = rates_of(approximation_study(fields[k], dom, b, c.settings.j0, c.settings.norm, c.settings.N,
                                          c.settings.fit_lo, c.settings.fit_hi, &eligible));
  });
  auto s = write_rates(dir, c.settings, out, exp);
  s["paths"] = fields.size();
  return s;
}

inline nlohmann::json run_noise_check(const NoiseCheckConfig& c, const Experiment& exp, OutputDir& dir) {
  nlohmann::json summary;
  Csv sums({"order", "level", "partial_sum"});
  nlohmann::json orders = nlohmann::json::array();
  for (int order : c.orders) {
    const auto rep = summability_check(c.noise, c.J, order);
    for (std::size_t i = 0; i < rep.levels.size(); ++i) sums.row(order, rep.levels[i], rep.partial_sums[i]);
    orders.push_back({{"order", order},
                      {"tail_fraction", rep.tail_fraction},
                      {"converged", rep.converged},
                      {"predicted", rep.predicted}});
  }
  dir.write("summability.csv", sums.str());
  summary["summability"] = orders;

  // Ito isometry: one active index per (level, type), variance of the
  // increments over `samples` steps, summed in fixed chunks
  const WaveletBasis b = build_basis("spline-2.2", 1);
  const NoiseRealization r(c.noise, b, c.isometry_J, exp.seed);
  const CoefficientTable layout(b, c.noise.j0, c.isometry_J);
  struct Probe {
    int level, type;
    std::size_t k;
  };
  std::vector<Probe> probes;
  for (int l = c.noise.j0 - 1; l < c.isometry_J; ++l)
    for (int type = l < c.noise.j0 ? 0 : 1; type <= (l < c.noise.j0 ? 0 : 3); ++type) {
      const std::size_t off = layout.block_offset(type, l), len = layout.block_size(type, l);
      for (std::size_t k = off; k < off + len; ++k)
        if (r.pattern()[k]) {
          probes.push_back({l, type, k});
          break;
        }
    }
  constexpr std::size_t chunks = 64;
  std::vector<std::vector<std::array<double, 2>>> part(chunks, std::vector<std::array<double, 2>>(probes.size(), {0.0, 0.0}));
  parallel_for(chunks, exp.threads, [&](std::size_t ch) {
    const std::size_t lo = c.samples * ch / chunks, hi = c.samples * (ch + 1) / chunks;
    for (std::size_t s = lo; s < hi; ++s)
      for (std::size_t i = 0; i < probes.size(); ++i) {
        const double x = r.entry(s, probes[i].k, c.dt);
        part[ch][i][0] += x * x;
        part[ch][i][1] += x * x * x * x;
      }
  });
  Csv iso({"level", "type", "index", "expected", "estimate", "stderr", "z"});
  double zmax = 0.0;
  const double n = static_cast<double>(c.samples);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    double s2 = 0.0, s4 = 0.0;
    for (std::size_t ch = 0; ch < chunks; ++ch) {
      s2 += part[ch][i][0];
      s4 += part[ch][i][1];
    }
    const double est = s2 / n;
    const double se = std::sqrt(std::max(s4 / n - est * est, 0.0) / n);
    const double sig = c.noise.sigma(probes[i].level);
    const double expected = sig * sig * c.dt;
    const double z = se > 0 ? (est - expected) / se : 0.0;
    zmax = std::max(zmax, std::abs(z));
    iso.row(probes[i].level, probes[i].type, probes[i].k, expected, est, se, z);
  }
  dir.write("isometry.csv", iso.str());
  summary["isometry"] = {{"samples", c.samples}, {"probes", probes.size()}, {"max_abs_z", zmax}, {"within_3_stderr", zmax <= 3.0}};
  return summary;
}

inline nlohmann::json run_norm_equivalence(const NormEquivalenceConfig& c, const Experiment& exp, OutputDir& dir) {
  const PolygonDomain dom = load_domain(c.domain);
  std::vector<WaveletBasis> bases;
  for (const auto& w : c.wavelets) bases.push_back(build_basis(w, 1));
  const std::size_t nf = c.functions.size(), nl = c.levels.size(), np = c.params.size(), nw = bases.size();
  // value[(f, J)][param] and wnorm[(f, J)][wavelet][param]
  std::vector<std::vector<double>> modulus(nf * nl);
  std::vector<std::vector<std::vector<double>>> wavelet(nf * nl);
  parallel_for(nf * nl, exp.threads, [&](std::size_t task) {
    const std::size_t fi = task / nl, li = task % nl;
    const Field f = testfn::sample(dom, c.levels[li], testfn::by_name(c.functions[fi]));
    for (const auto& bp : c.params) modulus[task].push_back(besov_norm_modulus(f, dom, bp, c.modulus).total);
    wavelet[task].resize(nw);
    for (std::size_t w = 0; w < nw; ++w) {
      const auto coeffs = dwt2(f, bases[w], c.j0);
      for (const auto& bp : c.params) wavelet[task][w].push_back(besov_norm_wavelet(to_lp(coeffs, bp.p), bp).total);
    }
  });
  Csv csv({"wavelet", "function", "s", "p", "q", "J", "wavelet_norm", "modulus_norm", "ratio"});
  double lo_all = 1e300, hi_all = 0.0, drift_all = 0.0;
  nlohmann::json per = nlohmann::json::object();
  for (std::size_t w = 0; w < nw; ++w) {
    double lo = 1e300, hi = 0.0, drift = 0.0;
    for (std::size_t fi = 0; fi < nf; ++fi)
      for (std::size_t pi = 0; pi < np; ++pi) {
        double prev = 0.0;
        for (std::size_t li = 0; li < nl; ++li) {
          const std::size_t task = fi * nl + li;
          const double ratio = wavelet[task][w][pi] / modulus[task][pi];
          csv.row(c.wavelets[w], c.functions[fi], c.params[pi].s, c.params[pi].p, c.params[pi].q, c.levels[li],
                  wavelet[task][w][pi], modulus[task][pi], ratio);
          lo = std::min(lo, ratio);
          hi = std::max(hi, ratio);
          if (prev > 0) drift = std::max(drift, std::abs(ratio / prev - 1.0));
          prev = ratio;
        }
      }
    per[c.wavelets[w]] = {{"ratio_min", lo}, {"ratio_max", hi}, {"width", hi / lo}, {"max_drift", drift}};
    lo_all = std::min(lo_all, lo);
    hi_all = std::max(hi_all, hi);
    drift_all = std::max(drift_all, drift);
  }
  dir.write("norm_equivalence.csv", csv.str());
  return {{"per_wavelet", per},
          {"ratio_min", lo_all},
          {"ratio_max", hi_all},
          {"width", hi_all / lo_all},
          {"max_drift", drift_all},
          {"within_bounds", hi_all / lo_all <= c.width_bound && drift_all <= c.drift_bound}};
}

}  // namespace detail

/// Validates, runs and persists one experiment. The output directory holds
/// manifest.json, summary.json and the kind-specific CSV files; it replaces
/// an earlier run in the same place only once everything is written.
inline ExperimentResult run_experiment(const Experiment& request) {
  const ExperimentPayload payload = parse_payload(request);
  if (request.paths < 1) throw std::invalid_argument("paths: must be >= 1");
  // deterministic sources and the noise check are single-path experiments
  Experiment exp = request;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, RegularityConfig> || std::is_same_v<T, ApproxRatesConfig>) {
          if (!c.source.spde) exp.paths = 1;
        } else if constexpr (!std::is_same_v<T, SimulateConfig>) {
          exp.paths = 1;
        }
      },
      payload);
  OutputDir dir(exp.out);
  nlohmann::json summary = std::visit(
      [&](const auto& c) -> nlohmann::json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, SimulateConfig>) return detail::run_simulate(c, exp, dir);
        else if constexpr (std::is_same_v<T, RegularityConfig>) return detail::run_regularity(c, exp, dir);
        else if constexpr (std::is_same_v<T, ApproxRatesConfig>) return detail::run_approx_rates(c, exp, dir);
        else if constexpr (std::is_same_v<T, NoiseCheckConfig>) return detail::run_noise_check(c, exp, dir);
        else return detail::run_norm_equivalence(c, exp, dir);
      },
      payload);
  summary["kind"] = to_string(exp.kind);
  dir.write("summary.json", summary.dump(2) + "\n");

  const nlohmann::json echo = std::visit([](const auto& c) { return c.to_json(); }, payload);
  std::vector<std::string> seeds;
  for (std::size_t k = 0; k < exp.paths; ++k) seeds.push_back(std::to_string(exp.path_seed(k)));
  nlohmann::json meta = {{"tool", "besovlab"},
                         {"kind", to_string(exp.kind)},
                         {"config", echo},
                         {"paths", exp.paths},
                         {"seeds", {{"base", std::to_string(exp.seed)}, {"paths", seeds}}},
                         {"versions", detail::versions()}};
  const auto target = dir.target();
  dir.commit(meta);
  return {target, summary};
}

}  // namespace besovlab
