#pragma once

// Integer-order weighted Sobolev norms with the boundary distance as weight,
// and the weighted m-th derivative diagnostic.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "besovlab/domain.hpp"
#include "besovlab/field.hpp"

namespace besovlab {

/// Where a weight exponent sits relative to the admissible interval
/// (d - k0, d - 2 + p + k0) for an unknown k0 in (0, 1).
enum class ThetaRange {
  always_valid,  ///< inside the interval for every k0
  conditional,   ///< inside for k0 close enough to 1
  outside,       ///< outside for every k0
};

inline std::string to_string(ThetaRange r) {
  switch (r) {
    case ThetaRange::always_valid: return "always-valid";
    case ThetaRange::conditional: return "conditional";
    default: return "outside";
  }
}

struct WeightedParams {
  static constexpr int d = 2;
  int m = 1;
  double p = 2.0;
  double theta = 2.0;

  double delta() const noexcept { return 1.0 + (d - theta) / p; }

  void validate() const {
    if (m < 0 || m > 2) throw std::invalid_argument("weighted Sobolev order must be 0, 1 or 2");
    if (!(p > 1)) throw std::invalid_argument("weighted Sobolev norm needs p > 1");
    if (!std::isfinite(theta)) throw std::invalid_argument("theta must be finite");
  }

  ThetaRange range() const noexcept {
    if (theta >= d && theta <= d - 2 + p) return ThetaRange::always_valid;
    if (theta > d - 1 && theta < d - 1 + p) return ThetaRange::conditional;
    return ThetaRange::outside;
  }
};

/// Grid derivatives up to order two. Differences use nodes of the closed
/// domain: central where both neighbours are usable, one-sided otherwise.
struct GridDerivatives {
  std::vector<double> ux, uy, uxx, uxy, uyy;
};

struct WeightedNorm {
  double total = 0.0;
  std::array<double, 3> order_terms{};  ///< sum over |alpha| = k of the weighted integrals
};

/// Quadrature over grid cells whose closed square lies inside the domain:
/// a cell counts iff rho(center) > h sqrt(2) / 2. Integrands are evaluated at
/// the cell center, derivatives as the mean of the four corner values.
class WeightedQuadrature {
 public:
  WeightedQuadrature(const PolygonDomain& dom, int J) : grid_(J, dom.box()) {
    const std::size_t n = grid_.n();
    const double h = grid_.h();
    const double tol = 1e-9 * grid_.box.side;
    usable_.assign(grid_.size(), 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const Point x = grid_.node(i, j);
        usable_[grid_.index(i, j)] = dom.contains(x) || dom.rho(x) <= tol;
      }
    const double cut = h * std::sqrt(2.0) / 2;
    for (std::size_t i = 0; i + 1 < n; ++i)
      for (std::size_t j = 0; j + 1 < n; ++j) {
        const Point c{grid_.x(i) + h / 2, grid_.y(j) + h / 2};
        if (!dom.contains(c)) continue;
        const double r = dom.rho(c);
        if (r <= cut) continue;
        cells_.push_back(grid_.index(i, j));
        rho_.push_back(r);
      }
    if (cells_.empty()) throw std::invalid_argument("weighted quadrature: no grid cell inside the domain");
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t cell_count() const noexcept { return cells_.size(); }
  const std::vector<double>& cell_rho() const noexcept { return rho_; }
  const std::vector<std::size_t>& cells() const noexcept { return cells_; }
  bool usable(std::size_t k) const { return usable_[k] != 0; }

  GridDerivatives derivatives(const Field& f, int order) const {
    check(f);
    const std::size_t n = grid_.n();
    const double h = grid_.h();
    GridDerivatives D;
    const auto& u = f.values;
    auto ok = [&](long i, long j) {
      return i >= 0 && j >= 0 && i < static_cast<long>(n) && j < static_cast<long>(n) &&
             usable_[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
    };
    auto at = [&](const std::vector<double>& v, long i, long j) {
      return v[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
    };
    // first derivative along axis (di, dj) of v at (i, j)
    auto d1 = [&](const std::vector<double>& v, long i, long j, long di, long dj) {
      const bool fwd = ok(i + di, j + dj), bwd = ok(i - di, j - dj);
      if (fwd && bwd) return (at(v, i + di, j + dj) - at(v, i - di, j - dj)) / (2 * h);
      if (fwd) return (at(v, i + di, j + dj) - at(v, i, j)) / h;
      if (bwd) return (at(v, i, j) - at(v, i - di, j - dj)) / h;
      return 0.0;
    };
    auto d2 = [&](const std::vector<double>& v, long i, long j, long di, long dj) {
      const bool fwd = ok(i + di, j + dj), bwd = ok(i - di, j - dj);
      if (fwd && bwd) return (at(v, i + di, j + dj) - 2 * at(v, i, j) + at(v, i - di, j - dj)) / (h * h);
      if (fwd && ok(i + 2 * di, j + 2 * dj))
        return (at(v, i + 2 * di, j + 2 * dj) - 2 * at(v, i + di, j + dj) + at(v, i, j)) / (h * h);
      if (bwd && ok(i - 2 * di, j - 2 * dj))
        return (at(v, i, j) - 2 * at(v, i - di, j - dj) + at(v, i - 2 * di, j - 2 * dj)) / (h * h);
      return 0.0;
    };
    const std::size_t N = grid_.size();
    if (order >= 1) {
      D.ux.assign(N, 0.0);
      D.uy.assign(N, 0.0);
    }
    if (order >= 2) {
      D.uxx.assign(N, 0.0);
      D.uxy.assign(N, 0.0);
      D.uyy.assign(N, 0.0);
    }
    if (order < 1) return D;
    for (long i = 0; i < static_cast<long>(n); ++i)
      for (long j = 0; j < static_cast<long>(n); ++j) {
        if (!ok(i, j)) continue;
        const std::size_t k = static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j);
        D.ux[k] = d1(u, i, j, 1, 0);
        D.uy[k] = d1(u, i, j, 0, 1);
        if (order >= 2) {
          D.uxx[k] = d2(u, i, j, 1, 0);
          D.uyy[k] = d2(u, i, j, 0, 1);
        }
      }
    if (order >= 2) {
      for (long i = 0; i < static_cast<long>(n); ++i)
        for (long j = 0; j < static_cast<long>(n); ++j)
          if (ok(i, j)) D.uxy[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = d1(D.uy, i, j, 1, 0);
    }
    return D;
  }

  /// (sum_{|alpha| <= m} int |rho^{|alpha|} D^alpha u|^p rho^{theta - d} dx)^{1/p}
  WeightedNorm norm(const Field& f, const WeightedParams& wp) const {
    wp.validate();
    const auto D = derivatives(f, wp.m);
    WeightedNorm out;
    const double area = grid_.h() * grid_.h();
    const std::size_t n = grid_.n();
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      const double r = rho_[c];
      const double w = std::pow(r, wp.theta - WeightedParams::d) * area;
      out.order_terms[0] += std::pow(std::abs(center(f.values, cells_[c], n)), wp.p) * w;
      if (wp.m >= 1) {
        const double s = std::pow(std::abs(center(D.ux, cells_[c], n)), wp.p) +
                         std::pow(std::abs(center(D.uy, cells_[c], n)), wp.p);
        out.order_terms[1] += std::pow(r, wp.p) * s * w;
      }
      if (wp.m >= 2) {
        const double s = std::pow(std::abs(center(D.uxx, cells_[c], n)), wp.p) +
                         std::pow(std::abs(center(D.uxy, cells_[c], n)), wp.p) +
                         std::pow(std::abs(center(D.uyy, cells_[c], n)), wp.p);
        out.order_terms[2] += std::pow(r, 2 * wp.p) * s * w;
      }
    }
    out.total = std::pow(out.order_terms[0] + out.order_terms[1] + out.order_terms[2], 1.0 / wp.p);
    return out;
  }

  /// || rho^{m - delta} |D^m u|_{l_p} ||_{L_p}, delta = 1 + (d - theta) / p.
  double diagnostic(const Field& f, int m, double p, double theta) const {
    if (m < 1 || m > 2) throw std::invalid_argument("diagnostic order must be 1 or 2");
    const WeightedParams wp{m, p, theta};
    wp.validate();
    const auto D = derivatives(f, m);
    const double e = m - wp.delta();
    const double area = grid_.h() * grid_.h();
    const std::size_t n = grid_.n();
    double acc = 0.0;
    for (std::size_t c = 0; c < cells_.size(); ++c) {
      double s;
      if (m == 1)
        s = std::pow(std::abs(center(D.ux, cells_[c], n)), p) + std::pow(std::abs(center(D.uy, cells_[c], n)), p);
      else
        s = std::pow(std::abs(center(D.uxx, cells_[c], n)), p) + std::pow(std::abs(center(D.uxy, cells_[c], n)), p) +
            std::pow(std::abs(center(D.uyy, cells_[c], n)), p);
      acc += std::pow(rho_[c], e * p) * s * area;
    }
    return std::pow(acc, 1.0 / p);
  }

 private:
  void check(const Field& f) const {
    if (!(f.grid == grid_)) throw std::invalid_argument("field grid does not match the quadrature grid");
  }
  static double center(const std::vector<double>& v, std::size_t k, std::size_t n) {
    return 0.25 * (v[k] + v[k + 1] + v[k + n] + v[k + n + 1]);
  }

  Grid grid_;
  std::vector<std::uint8_t> usable_;
  std::vector<std::size_t> cells_;  ///< lower-left node index of each included cell
  std::vector<double> rho_;
};

inline WeightedNorm weighted_sobolev_norm(const Field& f, const PolygonDomain& dom, const WeightedParams& wp) {
  return WeightedQuadrature(dom, f.grid.J).norm(f, wp);
}

inline double corollary36_diagnostic(const Field& f, const PolygonDomain& dom, int m, double p, double theta) {
  return WeightedQuadrature(dom, f.grid.J).diagnostic(f, m, p, theta);
}

}  // namespace besovlab
