#pragma once

// Driving noise in wavelet coordinates: a wavelet-diagonal Q-Wiener process
// (dense mode) and the sparse stochastic wavelet expansion with Bernoulli
// activity pattern (sparse mode).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "besovlab/rng.hpp"
#include "besovlab/wavelet.hpp"

namespace besovlab {

enum class NoiseMode { dense, sparse };

inline std::string to_string(NoiseMode m) { return m == NoiseMode::dense ? "dense" : "sparse"; }

inline NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "dense") return NoiseMode::dense;
  if (s == "sparse") return NoiseMode::sparse;
  throw std::invalid_argument("unknown noise mode: " + s);
}

struct NoiseModel {
  static constexpr int d = 2;
  double a = 2.5;
  double b = 0.0;
  double c = 0.0;
  int j0 = 3;
  NoiseMode mode = NoiseMode::dense;
  int J_noise = 0;  ///< finest level + 1 of the expansion; 0 means the grid level
  std::uint64_t seed = 0;

  void validate() const {
    if (!(a >= 0)) throw std::invalid_argument("noise: a must be >= 0");
    if (!(b >= 0 && b <= 1)) throw std::invalid_argument("noise: b must lie in [0, 1]");
    if (!std::isfinite(c)) throw std::invalid_argument("noise: c must be finite");
    if (!(a + b > 1)) throw std::invalid_argument("noise: a + b must exceed 1");
    if (j0 < 0) throw std::invalid_argument("noise: j0 must be >= 0");
    if (mode == NoiseMode::dense && b != 0) throw std::invalid_argument("noise: dense mode requires b = 0");
  }

  /// a + b > 2: the H^1 regime.
  bool h1_regime() const noexcept { return a + b > 2; }

  /// sigma_j = (j - j0 + 2)^{cd/2} 2^{-a (j - j0 + 1) d / 2}; level j0 - 1 is the scaling level.
  double sigma(int j) const {
    return std::pow(j - j0 + 2.0, c * d / 2.0) * std::exp2(-a * (j - j0 + 1.0) * d / 2.0);
  }

  /// p_j = 2^{-b (j - j0 + 1) d}; 1 in dense mode.
  double activity(int j) const {
    if (mode == NoiseMode::dense) return 1.0;
    return std::exp2(-b * (j - j0 + 1.0) * d);
  }

  int truncation(int grid_level) const { return J_noise > 0 ? J_noise : grid_level; }

  nlohmann::json to_json() const {
    return {{"a", a}, {"b", b}, {"c", c}, {"j0", j0}, {"mode", to_string(mode)}, {"J_noise", J_noise}, {"seed", seed}};
  }
};

inline NoiseModel noise_model_from_json(const nlohmann::json& j) {
  NoiseModel m;
  m.a = j.value("a", m.a);
  m.b = j.value("b", m.b);
  m.c = j.value("c", m.c);
  m.j0 = j.value("j0", m.j0);
  m.mode = noise_mode_from_string(j.value("mode", std::string("dense")));
  m.J_noise = j.value("J_noise", m.J_noise);
  m.seed = j.value("seed", m.seed);
  m.validate();
  return m;
}

/// Number of wavelet indices at level j (all three types); the scaling block for j = j0 - 1.
inline std::size_t level_cardinality(int j, int j0) {
  const double m = std::exp2(j < j0 ? j0 : j);
  if (j < j0) return static_cast<std::size_t>((m + 1) * (m + 1));
  return static_cast<std::size_t>(3 * m * m + 2 * m);
}

/// One sample path of the noise: the activity pattern is drawn once at
/// construction and never changes afterwards.
class NoiseRealization {
 public:
  NoiseRealization(const NoiseModel& model, const WaveletBasis& basis, int J_noise, std::uint64_t path_seed)
      : model_(model), layout_(basis, model.j0, J_noise), seed_(path_seed) {
    model_.validate();
    if (J_noise <= model.j0) throw std::invalid_argument("noise: truncation level must exceed j0");
    const auto lv = layout_.level_map();
    pattern_.assign(lv.size(), 1);
    sigma_.resize(lv.size());
    for (std::size_t k = 0; k < lv.size(); ++k) {
      sigma_[k] = model_.sigma(lv[k]);
      if (model_.mode == NoiseMode::sparse)
        pattern_[k] = rng::uniform(seed_, rng::Stream::pattern, k) < model_.activity(lv[k]) ? 1 : 0;
    }
  }

  /// Realization with a given activity pattern instead of a sampled one.
  NoiseRealization(const NoiseModel& model, const WaveletBasis& basis, int J_noise, std::uint64_t path_seed,
                   std::vector<std::uint8_t> pattern)
      : NoiseRealization(model, basis, J_noise, path_seed) {
    if (pattern.size() != pattern_.size()) throw std::invalid_argument("noise: pattern size does not match layout");
    for (auto& y : pattern) y = y ? 1 : 0;
    pattern_ = std::move(pattern);
  }

  const NoiseModel& model() const noexcept { return model_; }
  const std::vector<std::uint8_t>& pattern() const noexcept { return pattern_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int J_noise() const noexcept { return layout_.J; }

  std::size_t active_count() const {
    std::size_t n = 0;
    for (auto y : pattern_) n += y;
    return n;
  }

  /// Brownian increment of index k over step `step` of length dt.
  double entry(std::uint64_t step, std::size_t k, double dt) const {
    if (!pattern_[k]) return 0.0;
    return sigma_[k] * rng::normal(seed_, rng::Stream::increment, step, k) * std::sqrt(dt);
  }

  /// Coefficient table of sigma_j Y xi sqrt(dt), L2-normalized.
  CoefficientTable increment(std::uint64_t step, double dt) const {
    if (!(dt > 0)) throw std::invalid_argument("noise increment: dt must be positive");
    CoefficientTable t = layout_;
    for (std::size_t k = 0; k < t.values.size(); ++k) t.values[k] = entry(step, k, dt);
    return t;
  }

  /// dt * sum sigma_j^2 Y: expected squared l2 norm of one increment.
  double expected_energy(double dt) const {
    double s = 0.0;
    for (std::size_t k = 0; k < sigma_.size(); ++k)
      if (pattern_[k]) s += sigma_[k] * sigma_[k];
    return s * dt;
  }

 private:
  NoiseModel model_;
  CoefficientTable layout_;
  std::uint64_t seed_;
  std::vector<std::uint8_t> pattern_;
  std::vector<double> sigma_;
};

/// Copies a coarser table into a zero table with finest level J.
inline CoefficientTable pad_to_level(const CoefficientTable& t, const WaveletBasis& basis, int J) {
  if (J < t.J) throw std::invalid_argument("pad_to_level: target level below table level");
  if (J == t.J) return t;
  CoefficientTable out(basis, t.j0, J);
  out.norm = t.norm;
  out.p = t.p;
  std::copy(t.values.begin(), t.values.end(), out.values.begin());  // finer blocks follow coarser ones
  return out;
}

struct SummabilityReport {
  int order = 1;                      ///< derivative order of the weight 2^{2 order j}
  std::vector<int> levels;            ///< j0 - 1 .. J - 1
  std::vector<double> partial_sums;   ///< cumulative sums up to each level
  double tail_fraction = 1.0;         ///< (S_far - S_J) / S_far with S_far summed 64 levels further
  bool converged = false;             ///< tail_fraction < 1%
  bool predicted = false;             ///< the analytic criterion

  nlohmann::json to_json() const {
    return {{"order", order},         {"levels", levels},       {"partial_sums", partial_sums},
            {"tail_fraction", tail_fraction}, {"converged", converged}, {"predicted", predicted}};
  }
};

/// Partial sums of sum_j |nabla_j| sigma_j^2 p_j 2^{2 order j} up to level
/// J - 1. order = 0 is the trace of the covariance, order = 1 the H^1 majorant.
/// The analytic criterion is a + b > 1 + order.
inline SummabilityReport summability_check(const NoiseModel& model, int J, int order = 1) {
  model.validate();
  if (J <= model.j0) throw std::invalid_argument("summability check: J must exceed j0");
  SummabilityReport rep;
  rep.order = order;
  auto term = [&](int j) {
    return static_cast<double>(level_cardinality(j, model.j0)) * model.sigma(j) * model.sigma(j) * model.activity(j) *
           std::exp2(2.0 * order * (j < model.j0 ? model.j0 : j));
  };
  double s = 0.0;
  for (int j = model.j0 - 1; j < J; ++j) {
    s += term(j);
    rep.levels.push_back(j);
    rep.partial_sums.push_back(s);
  }
  double far = s;
  for (int j = J; j < J + 64; ++j) far += term(j);
  rep.tail_fraction = std::isfinite(far) && far > 0 ? (far - s) / far : 1.0;
  rep.converged = rep.tail_fraction < 0.01;
  rep.predicted = model.a + model.b > 1.0 + order;
  return rep;
}

inline SummabilityReport h1_summability_check(const NoiseModel& model, int J) { return summability_check(model, J, 1); }

}  // namespace besovlab
