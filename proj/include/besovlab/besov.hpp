#pragma once

// Besov (quasi-)norms by the modulus of smoothness and by wavelet
// coefficients, and smoothness estimation from coefficient decay.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "besovlab/domain.hpp"
#include "besovlab/field.hpp"
#include "besovlab/rng.hpp"
#include "besovlab/wavelet.hpp"

namespace besovlab {

struct BesovParams {
  double s = 1.0;
  double p = 2.0;
  double q = 2.0;
  int n = 2;  ///< difference order, n > s

  void validate() const {
    if (!(s > 0) || !(p > 0) || !(q > 0)) throw std::invalid_argument("Besov parameters s, p, q must be positive");
    if (!(n > s)) throw std::invalid_argument("difference order n must exceed s");
  }
};

/// 1/tau = alpha/d + 1/p with d = 2.
inline double adaptivity_tau(double alpha, double p) {
  const double inv = alpha / 2.0 + 1.0 / p;
  if (!(inv > 0)) throw std::invalid_argument("adaptivity scale: tau must be positive");
  return 1.0 / inv;
}

struct ModulusOptions {
  int random_directions = 8;
  std::uint64_t seed = 0;
};

namespace detail {

inline double pow_abs(double d, double p) {
  if (p == 2.0) return d * d;
  if (p == 1.0) return std::abs(d);
  if (p == 3.0) return d * d * std::abs(d);
  return std::pow(std::abs(d), p);
}

/// Sum over grid nodes x of |Delta_h^n f(x)|^p h^2 for the step (hx, hy),
/// restricted to nodes whose whole stencil lies inside the domain.
inline double difference_power_sum(const Field& f, int n, double hx, double hy, double p) {
  const std::size_t N = f.n();
  const double h = f.grid.h();
  const double sx = hx / h, sy = hy / h;
  const bool on_nodes = std::abs(sx - std::round(sx)) < 1e-12 && std::abs(sy - std::round(sy)) < 1e-12;
  std::vector<double> binom(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i)
    binom[static_cast<std::size_t>(i)] = ((n - i) % 2 ? -1.0 : 1.0) * std::tgamma(n + 1.0) /
                                          (std::tgamma(i + 1.0) * std::tgamma(n - i + 1.0));
  const auto* v = f.values.data();
  const auto* m = f.mask.data();
  double acc = 0.0;
  if (on_nodes) {
    const long dx = std::lround(sx), dy = std::lround(sy);
    const long nn = static_cast<long>(N);
    const long ilo = std::max(0L, -n * dx), ihi = std::min(nn, nn - n * dx);
    const long jlo = std::max(0L, -n * dy), jhi = std::min(nn, nn - n * dy);
    for (long i = std::max(ilo, 0L); i < ihi; ++i) {
      for (long j = std::max(jlo, 0L); j < jhi; ++j) {
        double d = 0.0;
        bool ok = true;
        for (int k = 0; k <= n; ++k) {
          const long idx = (i + k * dx) * nn + (j + k * dy);
          if (!m[idx]) {
            ok = false;
            break;
          }
          d += binom[static_cast<std::size_t>(k)] * v[idx];
        }
        if (ok) acc += pow_abs(d, p);
      }
    }
    return acc * h * h;
  }
  // off-grid steps: bilinear interpolation, the stencil point must lie in a
  // cell whose four corners are inside
  auto interp = [&](double gx, double gy, double& out) {
    if (gx < 0 || gy < 0 || gx > static_cast<double>(N - 1) || gy > static_cast<double>(N - 1)) return false;
    auto i0 = static_cast<std::size_t>(gx), j0 = static_cast<std::size_t>(gy);
    if (i0 == N - 1) --i0;
    if (j0 == N - 1) --j0;
    const std::size_t a = i0 * N + j0;
    if (!m[a] || !m[a + 1] || !m[a + N] || !m[a + N + 1]) return false;
    const double tx = gx - static_cast<double>(i0), ty = gy - static_cast<double>(j0);
    out = (1 - tx) * ((1 - ty) * v[a] + ty * v[a + 1]) + tx * ((1 - ty) * v[a + N] + ty * v[a + N + 1]);
    return true;
  };
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (!m[i * N + j]) continue;
      double d = binom[0] * v[i * N + j];
      bool ok = true;
      for (int k = 1; k <= n && ok; ++k) {
        double val = 0.0;
        ok = interp(static_cast<double>(i) + k * sx, static_cast<double>(j) + k * sy, val);
        d += binom[static_cast<std::size_t>(k)] * val;
      }
      if (ok) acc += pow_abs(d, p);
    }
  }
  return acc * h * h;
}

}  // namespace detail

/// Finite direction set: 8 compass directions plus seeded random ones.
inline std::vector<Point> modulus_directions(const ModulusOptions& opt) {
  std::vector<Point> dirs;
  for (int k = 0; k < 8; ++k) {
    const double a = std::numbers::pi / 4 * k;
    dirs.push_back({std::cos(a), std::sin(a)});
  }
  for (int k = 0; k < opt.random_directions; ++k) {
    const double a = 2 * std::numbers::pi * rng::uniform(opt.seed, rng::Stream::direction, static_cast<std::uint64_t>(k));
    dirs.push_back({std::cos(a), std::sin(a)});
  }
  return dirs;
}

/// Lower approximation of omega^n(t, f)_p on the domain: the maximum of
/// ||Delta_h^n f||_{L_p} over the direction set and |h| in {t, t/2, t/4}.
/// Compass steps are snapped to whole grid steps of length <= t.
inline double modulus_of_smoothness(const Field& field, int n, double t, double p, const ModulusOptions& opt = {}) {
  if (n < 1) throw std::invalid_argument("modulus of smoothness: order n must be >= 1");
  const double h = field.grid.h();
  if (t < h * (1 - 1e-12)) throw std::invalid_argument("modulus of smoothness: t below grid spacing");
  if (!(p > 0)) throw std::invalid_argument("modulus of smoothness: p must be positive");
  const auto dirs = modulus_directions(opt);
  double best = 0.0;
  for (std::size_t di = 0; di < dirs.size(); ++di) {
    for (double mag : {t, t / 2, t / 4}) {
      if (mag < h * (1 - 1e-12)) continue;
      double hx = dirs[di].x * mag, hy = dirs[di].y * mag;
      if (di < 8) {
        // whole grid steps along the compass direction
        const bool diag = di % 2 == 1;
        const double steps = std::floor(mag / (diag ? std::sqrt(2.0) * h : h) + 1e-9);
        if (steps < 1) continue;
        hx = std::round(dirs[di].x * (diag ? std::sqrt(2.0) : 1.0)) * steps * h;
        hy = std::round(dirs[di].y * (diag ? std::sqrt(2.0) : 1.0)) * steps * h;
      }
      best = std::max(best, detail::difference_power_sum(field, n, hx, hy, p));
    }
  }
  return std::pow(best, 1.0 / p);
}

/// Overload taking the domain explicitly; the field mask already encodes it.
inline double modulus_of_smoothness(const Field& field, const PolygonDomain&, int n, double t, double p,
                                    const ModulusOptions& opt = {}) {
  return modulus_of_smoothness(field, n, t, p, opt);
}

struct ModulusNorm {
  double lp = 0.0;                 ///< ||f||_{L_p(domain)}
  double seminorm = 0.0;
  double total = 0.0;
  std::vector<double> t;           ///< dyadic t values, decreasing
  std::vector<double> omega;       ///< modulus at each t (made nondecreasing in t)
  std::vector<double> terms;       ///< quadrature terms per dyadic interval
  double tail = 0.0;               ///< closed-form contribution above t[0]
  double term_slope = 0.0;         ///< log2 slope of the finest terms per level
  bool diverging = false;          ///< terms not decaying at the finest scales
};

/// Besov norm from the modulus of smoothness by dyadic quadrature: t_l = side 2^-l from
/// the first dyadic value >= diam down to side 2^-(J-2); each dyadic interval
/// contributes ln 2 * omega(t_{l+1})^q t_l^{-sq}, a lower Riemann sum of
/// the integral with dt/t. Above t_0 omega is constant and the tail is
/// summed in closed form.
inline ModulusNorm besov_norm_modulus(const Field& field, const PolygonDomain& dom, const BesovParams& bp,
                                      const ModulusOptions& opt = {}) {
  bp.validate();
  ModulusNorm out;
  out.lp = lp_norm(field, bp.p);
  const double side = field.grid.box.side;
  const double diam = dom.diameter();
  int lmin = 0;
  while (side * std::exp2(-lmin) < diam) --lmin;
  while (side * std::exp2(-(lmin + 1)) >= diam) ++lmin;
  const int lmax = field.grid.J - 2;
  for (int l = lmin; l <= lmax; ++l) {
    out.t.push_back(side * std::exp2(-l));
    out.omega.push_back(modulus_of_smoothness(field, bp.n, out.t.back(), bp.p, opt));
  }
  // omega is nondecreasing in t
  for (std::size_t i = out.omega.size() - 1; i-- > 0;) out.omega[i] = std::max(out.omega[i], out.omega[i + 1]);

  const double sq = bp.s * bp.q;
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < out.t.size(); ++i) {
    const double term = std::log(2.0) * std::pow(out.omega[i + 1], bp.q) * std::pow(out.t[i], -sq);
    out.terms.push_back(term);
    sum += term;
  }
  out.tail = std::pow(out.omega.front(), bp.q) * std::pow(out.t.front(), -sq) / sq;
  sum += out.tail;
  out.seminorm = std::pow(sum, 1.0 / bp.q);
  out.total = out.lp + out.seminorm;

  // divergence: regression slope of log2(term) over the finer half of the
  // levels (at least four); a positive slope means the terms do not decay
  const std::size_t k = out.terms.size();
  const std::size_t w = std::min(k, std::max<std::size_t>(4, k / 2));
  if (w >= 3) {
    std::vector<double> x, y;
    for (std::size_t i = k - w; i < k; ++i) {
      x.push_back(static_cast<double>(i));
      y.push_back(std::log2(std::max(out.terms[i], 1e-300)));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < w; ++i) {
      mx += x[i] / w;
      my += y[i] / w;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < w; ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    out.term_slope = sxy / sxx;
    out.diverging = out.terms.back() > 0 && out.term_slope > 0.0;
  }
  return out;
}

struct WaveletNorm {
  double scaling = 0.0;
  double wavelet = 0.0;
  double total = 0.0;
};

/// Coefficient form of the Besov norm on an Lp-normalized table:
/// (sum_k |c_k|^p)^{1/p} + (sum_i sum_j 2^{jsq} (sum_k |c_{i,j,k}|^p)^{q/p})^{1/q}.
inline WaveletNorm besov_norm_wavelet(const CoefficientTable& t, const BesovParams& bp) {
  if (!(bp.s > 0) || !(bp.p > 0) || !(bp.q > 0)) throw std::invalid_argument("Besov parameters must be positive");
  if (t.norm != Normalization::Lp || t.p != bp.p)
    throw std::invalid_argument("besov_norm_wavelet: table must be Lp-normalized with the same p");
  if (!(t.r > bp.s)) throw std::invalid_argument("besov_norm_wavelet: basis needs more vanishing moments than s");
  if (!(bp.s > std::max(0.0, 2.0 * (1.0 / bp.p - 1.0))))
    throw std::invalid_argument("besov_norm_wavelet: s must exceed max(0, d(1/p - 1))");
  WaveletNorm out;
  double acc = 0.0;
  for (std::size_t k = 0; k < t.level_end(t.j0 - 1); ++k) acc += std::pow(std::abs(t.values[k]), bp.p);
  out.scaling = std::pow(acc, 1.0 / bp.p);
  double wsum = 0.0;
  for (int j = t.j0; j < t.J; ++j) {
    for (int type = 1; type <= 3; ++type) {
      const std::size_t off = t.block_offset(type, j), len = t.block_size(type, j);
      double b = 0.0;
      for (std::size_t k = off; k < off + len; ++k) b += std::pow(std::abs(t.values[k]), bp.p);
      wsum += std::exp2(j * bp.s * bp.q) * std::pow(b, bp.q / bp.p);
    }
  }
  out.wavelet = std::pow(wsum, 1.0 / bp.q);
  out.total = out.scaling + out.wavelet;
  return out;
}

/// l_tau quasi-norm of an Lp-normalized table, scaling and wavelet parts
/// taken separately and added.
inline WaveletNorm tau_quasi_norm(const CoefficientTable& t, double tau) {
  if (!(tau > 0)) throw std::invalid_argument("tau must be positive");
  if (t.norm != Normalization::Lp) throw std::invalid_argument("tau quasi-norm: table must be Lp-normalized");
  WaveletNorm out;
  const std::size_t ns = t.level_end(t.j0 - 1);
  double a = 0.0, b = 0.0;
  for (std::size_t k = 0; k < ns; ++k) a += std::pow(std::abs(t.values[k]), tau);
  for (std::size_t k = ns; k < t.values.size(); ++k) b += std::pow(std::abs(t.values[k]), tau);
  out.scaling = std::pow(a, 1.0 / tau);
  out.wavelet = std::pow(b, 1.0 / tau);
  out.total = out.scaling + out.wavelet;
  return out;
}

/// Norm of B^alpha_{tau,tau} with 1/tau = alpha/d + 1/p.
inline double besov_norm_adaptivity_scale(const CoefficientTable& t, double alpha, double p) {
  if (!(alpha > 0)) throw std::invalid_argument("adaptivity scale: alpha must be positive");
  if (t.norm != Normalization::Lp || t.p != p)
    throw std::invalid_argument("adaptivity scale: table must be Lp-normalized with the same p");
  return tau_quasi_norm(t, adaptivity_tau(alpha, p)).total;
}

enum class SmoothnessMode { sobolev, adaptivity };

struct SmoothnessOptions {
  int level_lo = -1;       ///< first level of the Sobolev fit; default j0 + 1
  int level_hi = -1;       ///< last level of the Sobolev fit; default J - 3
  std::size_t n_lo = 16;   ///< rearrangement window start
  std::size_t n_hi = 0;    ///< rearrangement window end; default min(4096, nonzero / 4)
};

struct SmoothnessReport {
  SmoothnessMode mode = SmoothnessMode::sobolev;
  double p = 2.0;
  std::vector<int> levels;            ///< wavelet levels j0..J-1
  std::vector<double> level_norms;    ///< l_p norm of Lp-normalized coefficients per level
  double s_star = 0.0;
  double alpha_star = 0.0;
  double beta = 0.0;                  ///< decay exponent of the rearrangement
  std::vector<int> levels_used;
  std::size_t n_lo = 0, n_hi = 0;
  double residual = 0.0;              ///< RMS residual of the regression in log2 units

  nlohmann::json to_json() const {
    return {{"mode", mode == SmoothnessMode::sobolev ? "sobolev-scale" : "adaptivity-scale"},
            {"p", p},
            {"levels", levels},
            {"level_norms", level_norms},
            {"s_star", s_star},
            {"alpha_star", alpha_star},
            {"beta", beta},
            {"levels_used", levels_used},
            {"n_window", {n_lo, n_hi}},
            {"residual", residual}};
  }
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< RMS of residuals
};

inline LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least squares: need >= 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0) throw std::invalid_argument("least squares: degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rr = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    rr += e * e;
  }
  f.residual = std::sqrt(rr / n);
  return f;
}

/// Per-level l_p norms of the Lp-normalized wavelet coefficients.
inline std::vector<double> level_lp_norms(const CoefficientTable& lp) {
  std::vector<double> out;
  for (int j = lp.j0; j < lp.J; ++j) {
    double acc = 0.0;
    for (std::size_t k = lp.level_offset(j); k < lp.level_end(j); ++k) acc += std::pow(std::abs(lp.values[k]), lp.p);
    out.push_back(std::pow(acc, 1.0 / lp.p));
  }
  return out;
}

/// Decay exponents of a coefficient table. An L2 table is converted to the
/// Lp normalization first.
inline SmoothnessReport estimate_smoothness(const CoefficientTable& coeffs, double p, SmoothnessMode mode,
                                            const SmoothnessOptions& opt = {}) {
  const CoefficientTable lp = coeffs.norm == Normalization::L2 ? to_lp(coeffs, p) : coeffs;
  if (lp.p != p) throw std::invalid_argument("estimate_smoothness: table normalized for a different p");
  if (std::all_of(lp.values.begin(), lp.values.end(), [](double v) { return v == 0.0; }))
    throw std::invalid_argument("estimate_smoothness: all-zero table");
  if (lp.J - lp.j0 < 4) throw std::invalid_argument("estimate_smoothness: fewer than 4 levels");

  SmoothnessReport rep;
  rep.mode = mode;
  rep.p = p;
  for (int j = lp.j0; j < lp.J; ++j) rep.levels.push_back(j);
  rep.level_norms = level_lp_norms(lp);

  if (mode == SmoothnessMode::sobolev) {
    const int lo = opt.level_lo >= 0 ? opt.level_lo : lp.j0 + 1;
    const int hi = opt.level_hi >= 0 ? opt.level_hi : lp.J - 3;
    std::vector<double> x, y;
    for (int j = std::max(lo, lp.j0); j <= std::min(hi, lp.J - 1); ++j) {
      const double v = rep.level_norms[static_cast<std::size_t>(j - lp.j0)];
      if (v <= 0) continue;
      rep.levels_used.push_back(j);
      x.push_back(j);
      y.push_back(std::log2(v));
    }
    if (x.size() < 4) throw std::invalid_argument("estimate_smoothness: fewer than 4 usable levels");
    const auto fit = least_squares(x, y);
    rep.s_star = -fit.slope;
    rep.residual = fit.residual;
    return rep;
  }

  std::vector<double> mags;
  mags.reserve(lp.values.size());
  for (double v : lp.values)
    if (v != 0.0) mags.push_back(std::abs(v));
  std::sort(mags.begin(), mags.end(), std::greater<>());
  const std::size_t nlo = std::max<std::size_t>(opt.n_lo, 1);
  const std::size_t nhi = opt.n_hi > 0 ? std::min(opt.n_hi, mags.size()) : std::min<std::size_t>(4096, mags.size() / 4);
  if (nhi < nlo * 4) throw std::invalid_argument("estimate_smoothness: rearrangement window too short");
  // log-spaced sample of the window so that every scale weighs the same
  std::vector<double> x, y;
  const int samples = 64;
  std::size_t last = 0;
  for (int i = 0; i <= samples; ++i) {
    const auto n = static_cast<std::size_t>(
        std::llround(std::exp(std::log(double(nlo)) + (std::log(double(nhi)) - std::log(double(nlo))) * i / samples)));
    if (n == last) continue;
    last = n;
    x.push_back(std::log2(static_cast<double>(n)));
    y.push_back(std::log2(mags[n - 1]));
  }
  const auto fit = least_squares(x, y);
  rep.beta = -fit.slope;
  rep.alpha_star = 2.0 * (rep.beta - 1.0 / p);
  rep.residual = fit.residual;
  rep.n_lo = nlo;
  rep.n_hi = nhi;
  return rep;
}

}  // namespace besovlab
