#pragma once

// Uniform (all levels up to a cutoff) and best-N-term wavelet approximation,
// their errors in L_p and in the W^1_2 energy norm, and rate fitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "besovlab/besov.hpp"
#include "besovlab/domain.hpp"
#include "besovlab/field.hpp"
#include "besovlab/wavelet.hpp"

namespace besovlab {

struct ErrorNorm {
  enum class Kind { lp, w12 };
  Kind kind = Kind::lp;
  double p = 2.0;

  static ErrorNorm L2() { return {Kind::lp, 2.0}; }
  static ErrorNorm Lp(double p) { return {Kind::lp, p}; }
  static ErrorNorm W12() { return {Kind::w12, 2.0}; }

  std::string name() const {
    if (kind == Kind::w12) return "W12";
    std::ostringstream s;
    s << "L" << p;
    return s.str();
  }
};

/// "L2", "Lp:<p>" (e.g. "Lp:3"), "L<p>" or "W12".
inline ErrorNorm error_norm_from_string(const std::string& s) {
  if (s == "W12" || s == "w12" || s == "energy") return ErrorNorm::W12();
  std::string num;
  if (s.rfind("Lp:", 0) == 0) num = s.substr(3);
  else if (s.size() > 1 && (s[0] == 'L' || s[0] == 'l')) num = s.substr(1);
  else throw std::invalid_argument("unknown error norm: " + s);
  std::size_t used = 0;
  double p = 0.0;
  try {
    p = std::stod(num, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("unknown error norm: " + s);
  }
  if (used != num.size() || !(p >= 1)) throw std::invalid_argument("unknown error norm: " + s);
  return ErrorNorm::Lp(p);
}

struct UniformApprox {
  CoefficientTable table;
  std::size_t N = 0;  ///< retained entries (eligible ones when a mask is given)
};

/// Keeps every coefficient at levels <= j0 - 1 + n (n = 0: scaling block only).
inline UniformApprox uniform_approx(const CoefficientTable& t, int n, const std::vector<std::uint8_t>* eligible = nullptr) {
  if (n < 0) throw std::invalid_argument("uniform approximation: n must be >= 0");
  if (t.j0 - 1 + n > t.J - 1) throw std::invalid_argument("uniform approximation: level beyond the table");
  UniformApprox out{t, 0};
  const std::size_t end = t.level_end(t.j0 - 1 + n);
  std::fill(out.table.values.begin() + static_cast<std::ptrdiff_t>(end), out.table.values.end(), 0.0);
  for (std::size_t k = 0; k < end; ++k) out.N += !eligible || (*eligible)[k];
  return out;
}

/// Discrete L2 norms over a mask of the synthesized primal functions, one
/// per table entry. The primal functions of the lifted families are far from
/// unit norm on the grid (the finest levels and the boundary-adjacent
/// functions most of all), so the L2 greedy key uses these instead of 1.
struct SynthesisNorms {
  int j0 = 0, J = 1;
  std::vector<double> values;
};

namespace detail {

struct Line {
  std::size_t first = 0;
  std::vector<double> v;  ///< nonzero window starting at `first`
};

/// 1-D synthesis of a unit coefficient at position k of the scaling (kind 0)
/// or detail (kind 1) part at level l, carried to level J.
inline Line synthesize_line(const WaveletBasis& b, int l, int kind, std::size_t k, int J) {
  const std::size_t m = std::size_t{1} << l;
  std::vector<double> s(m + 1, 0.0), d(m, 0.0), x;
  (kind == 0 ? s : d)[k] = 1.0;
  std::size_t n = 2 * m + 1;
  x.resize(n);
  inverse_line(b, s.data(), d.data(), static_cast<std::ptrdiff_t>(n), x.data());
  for (int j = l + 1; j < J; ++j) {
    s = x;
    d.assign(n - 1, 0.0);
    n = 2 * n - 1;
    x.assign(n, 0.0);
    inverse_line(b, s.data(), d.data(), static_cast<std::ptrdiff_t>(n), x.data());
  }
  Line out;
  std::size_t lo = 0, hi = n;
  while (lo < n && x[lo] == 0.0) ++lo;
  while (hi > lo && x[hi - 1] == 0.0) --hi;
  out.first = lo;
  out.v.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
  return out;
}

}  // namespace detail

/// `mask` is a node mask of the level-J grid (row-major, as in Field); empty
/// means the whole box.
inline SynthesisNorms synthesis_norms(const WaveletBasis& basis, int j0, int J,
                                      const std::vector<std::uint8_t>& mask = {}) {
  CoefficientTable layout(basis, j0, J);
  const std::size_t nn = CoefficientTable::side(J) + 1;
  if (!mask.empty() && mask.size() != nn * nn) throw std::invalid_argument("synthesis norms: mask size mismatch");
  SynthesisNorms out{j0, J, std::vector<double>(layout.values.size(), 0.0)};
  for (int l = j0 - 1; l < J; ++l) {
    const int lev = l < j0 ? j0 : l;
    const std::size_t m = CoefficientTable::side(lev);
    std::array<std::vector<detail::Line>, 2> lines;
    for (int kind = 0; kind < 2; ++kind)
      for (std::size_t k = 0; k < m + (kind == 0 ? 1 : 0); ++k)
        lines[kind].push_back(detail::synthesize_line(basis, lev, kind, k, J));
    for (int type = l < j0 ? 0 : 1; type <= (l < j0 ? 0 : 3); ++type) {
      const auto& L1 = lines[type >= 2 ? 1 : 0];
      const auto& L2 = lines[type % 2 == 1 ? 1 : 0];
      const auto shape = layout.block_shape(type, l);
      const std::size_t off = layout.block_offset(type, l);
      for (std::size_t kx = 0; kx < shape[0]; ++kx)
        for (std::size_t ky = 0; ky < shape[1]; ++ky) {
          const auto& g1 = L1[kx];
          const auto& g2 = L2[ky];
          double acc = 0.0;
          for (std::size_t i = 0; i < g1.v.size(); ++i) {
            const std::size_t row = (g1.first + i) * nn + g2.first;
            double r = 0.0;
            for (std::size_t c = 0; c < g2.v.size(); ++c)
              if (mask.empty() || mask[row + c]) r += g2.v[c] * g2.v[c];
            acc += g1.v[i] * g1.v[i] * r;
          }
          out.values[off + kx * shape[1] + ky] = std::sqrt(acc);
        }
    }
  }
  return out;
}

/// Selection weight of each entry of an L2-normalized table: |c| times the
/// norm of the synthesized function for L2 (so that the key is the size of
/// the term in the error), the Lp renormalization factor for other p, and
/// 2^j for the energy norm.
inline std::vector<double> selection_keys(const CoefficientTable& t, const ErrorNorm& norm,
                                          const SynthesisNorms* l2_norms = nullptr) {
  if (t.norm != Normalization::L2) throw std::invalid_argument("best N-term: table must be L2-normalized");
  if (l2_norms && (l2_norms->j0 != t.j0 || l2_norms->J != t.J))
    throw std::invalid_argument("best N-term: synthesis norms for a different layout");
  std::vector<double> key(t.values.size());
  const bool l2 = norm.kind == ErrorNorm::Kind::lp && norm.p == 2.0;
  for (int l = t.j0 - 1; l < t.J; ++l) {
    const int dil = t.dilation(l);
    for (int type = l < t.j0 ? 0 : 1; type <= (l < t.j0 ? 0 : 3); ++type) {
      double w;
      if (norm.kind == ErrorNorm::Kind::w12) w = std::exp2(dil);
      else w = l2 ? 1.0 : lp_factor(dil, norm.p);
      const std::size_t off = t.block_offset(type, l), len = t.block_size(type, l);
      for (std::size_t k = off; k < off + len; ++k)
        key[k] = (l2 && l2_norms ? l2_norms->values[k] : w) * std::abs(t.values[k]);
    }
  }
  return key;
}

/// Entries whose support cube meets the open domain.
inline std::vector<std::uint8_t> eligible_indices(const CoefficientTable& t, const WaveletBasis& basis,
                                                  const PolygonDomain& dom) {
  std::vector<std::uint8_t> out(t.values.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = dom.meets(physical_cube(support_cube(t.index_of(k), basis, t.j0), dom.box())) ? 1 : 0;
  return out;
}

/// Greedy order: decreasing key, ties by flat position (level, type, kx, ky).
/// Zero entries and ineligible ones are left out, so prefixes of the order
/// are the nested best-N-term index sets.
inline std::vector<std::size_t> greedy_order(const CoefficientTable& t, const ErrorNorm& norm,
                                             const std::vector<std::uint8_t>* eligible = nullptr,
                                             const SynthesisNorms* l2_norms = nullptr) {
  const auto key = selection_keys(t, norm, l2_norms);
  std::vector<std::size_t> idx;
  idx.reserve(key.size());
  for (std::size_t k = 0; k < key.size(); ++k)
    if (key[k] > 0 && (!eligible || (*eligible)[k])) idx.push_back(k);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  return idx;
}

/// Table holding the first N entries of a greedy order.
inline CoefficientTable take_prefix(const CoefficientTable& t, const std::vector<std::size_t>& order, std::size_t N) {
  CoefficientTable out = t;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t i = 0; i < std::min(N, order.size()); ++i) out.values[order[i]] = t.values[order[i]];
  return out;
}

inline CoefficientTable best_n_term(const CoefficientTable& t, std::size_t N, const ErrorNorm& norm,
                                    const std::vector<std::uint8_t>* eligible = nullptr,
                                    const SynthesisNorms* l2_norms = nullptr) {
  return take_prefix(t, greedy_order(t, norm, eligible, l2_norms), N);
}

/// ||f - synthesis(approx)|| on the mask of f. The approximant is synthesized
/// on f's grid, restricted to the domain, and f is taken as zero off the mask.
inline double approximation_error(const Field& f, const CoefficientTable& approx, const WaveletBasis& basis,
                                  const ErrorNorm& norm) {
  if (approx.J != f.grid.J) throw std::invalid_argument("approximation error: table and field levels differ");
  const Field g = idwt2(approx, basis, f.grid.box);
  // restriction norm on the domain: off-mask neighbours keep their values, so
  // a mismatch of traces on the boundary is not counted as a jump
  Field e = f;
  for (std::size_t k = 0; k < e.values.size(); ++k) e.values[k] = f.values[k] - g.values[k];
  if (norm.kind == ErrorNorm::Kind::w12) return w12_norm(e);
  return lp_norm(e, norm.p);
}

struct RateFit {
  double exponent = 0.0;   ///< -slope of log error vs log N
  double intercept = 0.0;  ///< log error at log N = 0
  double residual = 0.0;   ///< RMS residual in natural-log units
  double stderr_ = 0.0;    ///< standard error of the exponent
  std::size_t points = 0;

  double band_lo() const { return exponent - 2 * stderr_; }
  double band_hi() const { return exponent + 2 * stderr_; }
};

/// Least-squares power law over the pairs with N in [n_lo, n_hi].
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs, double n_lo = 0,
                        double n_hi = std::numeric_limits<double>::infinity()) {
  std::vector<double> x, y;
  for (const auto& [N, e] : pairs) {
    if (N < n_lo || N > n_hi) continue;
    if (!(e > 0) || !(N > 0)) throw std::invalid_argument("fit_rate: non-positive value in the fit window");
    x.push_back(std::log(N));
    y.push_back(std::log(e));
  }
  if (x.size() < 5) throw std::invalid_argument("fit_rate: need at least 5 pairs in the window");
  const auto f = least_squares(x, y);
  RateFit r;
  r.exponent = -f.slope;
  r.intercept = f.intercept;
  r.residual = f.residual;
  r.points = x.size();
  double mx = 0, sxx = 0;
  for (double v : x) mx += v / static_cast<double>(x.size());
  for (double v : x) sxx += (v - mx) * (v - mx);
  const double dof = static_cast<double>(x.size()) - 2.0;
  r.stderr_ = dof > 0 ? std::sqrt(f.residual * f.residual * static_cast<double>(x.size()) / dof / sxx) : 0.0;
  return r;
}

/// N values 2^k in [n_lo, n_hi].
inline std::vector<std::size_t> dyadic_counts(std::size_t n_lo, std::size_t n_hi) {
  std::vector<std::size_t> out;
  for (std::size_t n = 1; n <= n_hi; n *= 2)
    if (n >= n_lo) out.push_back(n);
  return out;
}

struct ApproxReport {
  ErrorNorm norm;
  std::vector<std::size_t> N;
  std::vector<double> best;     ///< best-N-term error at N
  std::vector<double> uniform;  ///< error of the largest uniform level set with at most N entries
  std::vector<std::size_t> uniform_counts;  ///< N(n) for n = 0, 1, ...
  std::vector<double> uniform_level_errors;  ///< error at N(n)
  RateFit best_fit, uniform_fit;
  double norm_f = 0.0;  ///< ||f|| in the chosen norm (the N = 0 error)

  nlohmann::json to_json() const {
    auto fit = [](const RateFit& r) {
      return nlohmann::json{{"exponent", r.exponent}, {"intercept", r.intercept}, {"residual", r.residual},
                             {"stderr", r.stderr_},   {"band", {r.band_lo(), r.band_hi()}}, {"points", r.points}};
    };
    return {{"norm", norm.name()},
            {"N", N},
            {"best_n_term", best},
            {"uniform", uniform},
            {"uniform_counts", uniform_counts},
            {"uniform_level_errors", uniform_level_errors},
            {"norm_f", norm_f},
            {"fit", {{"best_n_term", fit(best_fit)}, {"uniform", fit(uniform_fit)}}}};
  }
};

/// Best-N-term and uniform error curves of f for the given N values, with
/// exponents fitted over [fit_lo, fit_hi].
inline ApproxReport approximation_study(const Field& f, const PolygonDomain& dom, const WaveletBasis& basis, int j0,
                                        const ErrorNorm& norm, const std::vector<std::size_t>& Ns, double fit_lo = 16,
                                        double fit_hi = 4096, const std::vector<std::uint8_t>* eligible = nullptr) {
  const CoefficientTable c = dwt2(f, basis, j0);
  std::vector<std::uint8_t> own;
  if (!eligible) {
    own = eligible_indices(c, basis, dom);
    eligible = &own;
  }
  ApproxReport rep;
  rep.norm = norm;
  rep.N = Ns;
  CoefficientTable zero = c;
  std::fill(zero.values.begin(), zero.values.end(), 0.0);
  rep.norm_f = approximation_error(f, zero, basis, norm);

  SynthesisNorms sn;
  const bool l2 = norm.kind == ErrorNorm::Kind::lp && norm.p == 2.0;
  if (l2) sn = synthesis_norms(basis, c.j0, c.J, f.mask);
  const auto order = greedy_order(c, norm, eligible, l2 ? &sn : nullptr);
  for (std::size_t N : Ns) rep.best.push_back(N == 0 ? rep.norm_f : approximation_error(f, take_prefix(c, order, N), basis, norm));

  for (int n = 0; c.j0 - 1 + n <= c.J - 1; ++n) {
    const auto u = uniform_approx(c, n, eligible);
    rep.uniform_counts.push_back(u.N);
    rep.uniform_level_errors.push_back(approximation_error(f, u.table, basis, norm));
  }
  for (std::size_t N : Ns) {
    double e = rep.norm_f;
    for (std::size_t n = 0; n < rep.uniform_counts.size(); ++n)
      if (rep.uniform_counts[n] <= N) e = rep.uniform_level_errors[n];
    rep.uniform.push_back(e);
  }
  std::vector<std::pair<double, double>> pb, pu;
  for (std::size_t i = 0; i < Ns.size(); ++i) {
    pb.emplace_back(static_cast<double>(Ns[i]), rep.best[i]);
    pu.emplace_back(static_cast<double>(Ns[i]), rep.uniform[i]);
  }
  rep.best_fit = fit_rate(pb, fit_lo, fit_hi);
  rep.uniform_fit = fit_rate(pu, fit_lo, fit_hi);
  return rep;
}

}  // namespace besovlab
