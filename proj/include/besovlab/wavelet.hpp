#pragma once

// Biorthogonal spline wavelets realized by lifting, and the separable 2-D
// transform on a dyadic grid with whole-point symmetric extension at the
// edges of the bounding square.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "besovlab/field.hpp"

namespace besovlab {

/// FIR filter with taps at integer positions first, first + 1, ...
struct Filter {
  int first = 0;
  std::vector<double> taps;

  int last() const noexcept { return first + static_cast<int>(taps.size()) - 1; }
  double sum() const noexcept {
    double s = 0.0;
    for (double t : taps) s += t;
    return s;
  }
};

struct LiftingStep {
  enum class Kind { predict, update };
  Kind kind;
  std::vector<double> taps;
};

struct WaveletBasis {
  std::string family;
  int r = 0;               ///< vanishing moments of the dual (analysis) wavelet
  int smoothness = 0;      ///< polynomial degree + 1 of the primal spline
  double N = 0.0;          ///< support radius in units of 2^-j
  std::vector<LiftingStep> steps;
  double zeta = 1.0;
  Filter primal_low;       ///< synthesis lowpass (refinement mask of phi)
  Filter primal_high;      ///< synthesis highpass, positions relative to 2k
  Filter dual_low;         ///< analysis lowpass
  Filter dual_high;        ///< analysis highpass, positions relative to 2k
};

namespace detail {

/// Whole-point symmetric reflection of an index into [0, n - 1].
inline std::ptrdiff_t reflect(std::ptrdiff_t idx, std::ptrdiff_t n) noexcept {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  idx %= period;
  if (idx < 0) idx += period;
  return idx > n - 1 ? period - idx : idx;
}

inline std::ptrdiff_t s_index(std::ptrdiff_t q, std::ptrdiff_t n) noexcept {
  return reflect(2 * q, n) / 2;
}

inline std::ptrdiff_t d_index(std::ptrdiff_t q, std::ptrdiff_t n) noexcept {
  return (reflect(2 * q + 1, n) - 1) / 2;
}

inline void apply_step(const LiftingStep& st, double* s, double* d, std::ptrdiff_t n, double sign) {
  const std::ptrdiff_t m = (n - 1) / 2;
  const auto taps = static_cast<std::ptrdiff_t>(st.taps.size());
  if (st.kind == LiftingStep::Kind::predict) {
    for (std::ptrdiff_t k = 0; k < m; ++k) {
      double acc = 0.0;
      if (k - taps + 1 >= 0 && k + taps <= m) {
        for (std::ptrdiff_t i = 0; i < taps; ++i) acc += st.taps[i] * (s[k - i] + s[k + 1 + i]);
      } else {
        for (std::ptrdiff_t i = 0; i < taps; ++i)
          acc += st.taps[i] * (s[s_index(k - i, n)] + s[s_index(k + 1 + i, n)]);
      }
      d[k] += sign * acc;
    }
  } else {
    for (std::ptrdiff_t k = 0; k <= m; ++k) {
      double acc = 0.0;
      if (k - taps >= 0 && k + taps - 1 < m) {
        for (std::ptrdiff_t i = 0; i < taps; ++i) acc += st.taps[i] * (d[k - 1 - i] + d[k + i]);
      } else {
        for (std::ptrdiff_t i = 0; i < taps; ++i)
          acc += st.taps[i] * (d[d_index(k - 1 - i, n)] + d[d_index(k + i, n)]);
      }
      s[k] += sign * acc;
    }
  }
}

/// Forward 1-D transform of x (length n = 2m + 1) into s (m + 1) and d (m).
inline void forward_line(const WaveletBasis& b, const double* x, std::ptrdiff_t n, double* s, double* d) {
  const std::ptrdiff_t m = (n - 1) / 2;
  for (std::ptrdiff_t k = 0; k <= m; ++k) s[k] = x[2 * k];
  for (std::ptrdiff_t k = 0; k < m; ++k) d[k] = x[2 * k + 1];
  for (const auto& st : b.steps) apply_step(st, s, d, n, 1.0);
  for (std::ptrdiff_t k = 0; k <= m; ++k) s[k] *= b.zeta;
  for (std::ptrdiff_t k = 0; k < m; ++k) d[k] /= b.zeta;
}

/// Inverse of forward_line. s and d are used as scratch and overwritten.
inline void inverse_line(const WaveletBasis& b, double* s, double* d, std::ptrdiff_t n, double* x) {
  const std::ptrdiff_t m = (n - 1) / 2;
  for (std::ptrdiff_t k = 0; k <= m; ++k) s[k] /= b.zeta;
  for (std::ptrdiff_t k = 0; k < m; ++k) d[k] *= b.zeta;
  for (auto it = b.steps.rbegin(); it != b.steps.rend(); ++it) apply_step(*it, s, d, n, -1.0);
  for (std::ptrdiff_t k = 0; k <= m; ++k) x[2 * k] = s[k];
  for (std::ptrdiff_t k = 0; k < m; ++k) x[2 * k + 1] = d[k];
}

inline Filter trim(const std::vector<double>& v, int origin) {
  std::size_t lo = 0, hi = v.size();
  while (lo < hi && std::abs(v[lo]) < 1e-14) ++lo;
  while (hi > lo && std::abs(v[hi - 1]) < 1e-14) --hi;
  Filter f;
  f.first = static_cast<int>(lo) - origin;
  f.taps.assign(v.begin() + static_cast<std::ptrdiff_t>(lo), v.begin() + static_cast<std::ptrdiff_t>(hi));
  return f;
}

/// Reads the four filters off impulse responses on a long line.
inline void derive_filters(WaveletBasis& b) {
  constexpr std::ptrdiff_t m = 64, n = 2 * m + 1, k0 = m / 2;
  std::vector<double> s(m + 1), d(m), x(n);

  std::fill(s.begin(), s.end(), 0.0);
  std::fill(d.begin(), d.end(), 0.0);
  s[k0] = 1.0;
  inverse_line(b, s.data(), d.data(), n, x.data());
  b.primal_low = trim(x, 2 * k0);

  std::fill(s.begin(), s.end(), 0.0);
  std::fill(d.begin(), d.end(), 0.0);
  d[k0] = 1.0;
  inverse_line(b, s.data(), d.data(), n, x.data());
  b.primal_high = trim(x, 2 * k0);

  std::vector<double> lo(n, 0.0), hi(n, 0.0);
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    std::fill(x.begin(), x.end(), 0.0);
    x[p] = 1.0;
    forward_line(b, x.data(), n, s.data(), d.data());
    lo[p] = s[k0];
    hi[p] = d[k0];
  }
  b.dual_low = trim(lo, 2 * k0);
  b.dual_high = trim(hi, 2 * k0);
}

inline double support_radius(const WaveletBasis& b) {
  const double a = b.primal_low.first, bb = b.primal_low.last();
  const double at = b.dual_low.first, bt = b.dual_low.last();
  const std::array<double, 8> ends = {
      a, bb, at, bt,
      (b.primal_high.first + a) / 2.0, (b.primal_high.last() + bb) / 2.0,
      (b.dual_high.first + at) / 2.0, (b.dual_high.last() + bt) / 2.0};
  double r = 0.0;
  for (double e : ends) r = std::max(r, std::abs(e));
  return r;
}

}  // namespace detail

/// Supported families: "spline-biorthogonal" (smallest member with enough
/// moments), "spline-2.2" and "spline-4.8".
inline WaveletBasis build_basis(const std::string& family, int min_vanishing_moments) {
  std::string member;
  if (family == "spline-biorthogonal") {
    if (min_vanishing_moments <= 2) member = "spline-2.2";
    else if (min_vanishing_moments <= 4) member = "spline-4.8";
    else throw std::invalid_argument("spline-biorthogonal: at most 4 vanishing moments are available");
  } else if (family == "spline-2.2" || family == "spline-4.8") {
    member = family;
  } else {
    throw std::invalid_argument("unsupported wavelet family: " + family);
  }

  WaveletBasis b;
  b.family = member;
  using K = LiftingStep::Kind;
  if (member == "spline-2.2") {
    b.r = 2;
    b.smoothness = 2;
    b.steps = {{K::predict, {-0.5}}, {K::update, {0.25}}};
    b.zeta = std::sqrt(2.0);
  } else {
    b.r = 4;
    b.smoothness = 4;
    b.steps = {{K::update, {-0.25}},
               {K::predict, {-1.0}},
               {K::update, {8299.0 / 32768.0, -2687.0 / 32768.0, 595.0 / 32768.0, -63.0 / 32768.0}}};
    b.zeta = 2.0 * std::sqrt(2.0);
  }
  if (b.r < min_vanishing_moments)
    throw std::invalid_argument(member + ": requested vanishing moments not achievable");
  detail::derive_filters(b);
  b.N = detail::support_radius(b);
  return b;
}

enum class Normalization { L2, Lp };

/// type 0 is the scaling function (level j0 - 1), types 1..3 are wavelets:
/// 1 = low in x / high in y, 2 = high in x / low in y, 3 = high in both.
struct WaveletIndex {
  int type = 0;
  int level = 0;
  int kx = 0;
  int ky = 0;
  bool operator==(const WaveletIndex&) const = default;
};

/// Flat container of coefficients. Blocks are stored in ascending level
/// order: the scaling block, then types 1, 2, 3 of level j0, then j0 + 1, ...
/// Each block is row-major with kx outermost.
struct CoefficientTable {
  std::string family;
  int r = 0;
  int j0 = 0;
  int J = 1;
  Normalization norm = Normalization::L2;
  double p = 2.0;  ///< integrability of the Lp normalization; 2 when norm = L2
  std::vector<double> values;

  CoefficientTable() = default;
  CoefficientTable(const WaveletBasis& b, int coarsest, int finest)
      : family(b.family), r(b.r), j0(coarsest), J(finest) {
    if (coarsest < 0 || coarsest >= finest) throw std::invalid_argument("need 0 <= j0 < J");
    values.assign(total_size(), 0.0);
  }

  static std::size_t side(int level) { return std::size_t{1} << level; }

  /// Dimensions (nx, ny) of a block.
  std::array<std::size_t, 2> block_shape(int type, int level) const {
    if (type == 0) return {side(j0) + 1, side(j0) + 1};
    const std::size_t m = side(level);
    switch (type) {
      case 1: return {m + 1, m};
      case 2: return {m, m + 1};
      case 3: return {m, m};
      default: throw std::out_of_range("wavelet type must be 0..3");
    }
  }

  std::size_t block_size(int type, int level) const {
    const auto s = block_shape(type, level);
    return s[0] * s[1];
  }

  /// Offset of a block in the flat array.
  std::size_t block_offset(int type, int level) const {
    if (type == 0) return 0;
    std::size_t off = block_size(0, j0 - 1);
    for (int l = j0; l < level; ++l) {
      const std::size_t m = side(l);
      off += 2 * (m + 1) * m + m * m;
    }
    for (int t = 1; t < type; ++t) off += block_size(t, level);
    return off;
  }

  /// First flat index of level j (j0 - 1 denotes the scaling block).
  std::size_t level_offset(int level) const {
    return level < j0 ? 0 : block_offset(1, level);
  }
  std::size_t level_end(int level) const {
    return level < j0 ? block_size(0, j0 - 1) : block_offset(1, level + 1);
  }

  std::size_t total_size() const { return block_offset(1, J); }

  bool valid(const WaveletIndex& idx) const {
    if (idx.type == 0 ? idx.level != j0 - 1 : (idx.level < j0 || idx.level >= J)) return false;
    if (idx.type < 0 || idx.type > 3) return false;
    const auto s = block_shape(idx.type, idx.level);
    return idx.kx >= 0 && idx.ky >= 0 && static_cast<std::size_t>(idx.kx) < s[0] &&
           static_cast<std::size_t>(idx.ky) < s[1];
  }

  std::size_t flat(const WaveletIndex& idx) const {
    if (!valid(idx)) throw std::out_of_range("wavelet index outside table");
    const auto s = block_shape(idx.type, idx.level);
    return block_offset(idx.type, idx.level) + static_cast<std::size_t>(idx.kx) * s[1] +
           static_cast<std::size_t>(idx.ky);
  }

  WaveletIndex index_of(std::size_t pos) const {
    const std::size_t n0 = block_size(0, j0 - 1);
    if (pos < n0) {
      const std::size_t ny = side(j0) + 1;
      return {0, j0 - 1, static_cast<int>(pos / ny), static_cast<int>(pos % ny)};
    }
    for (int l = j0; l < J; ++l) {
      if (pos >= level_end(l)) continue;
      std::size_t off = level_offset(l);
      for (int t = 1; t <= 3; ++t) {
        const std::size_t sz = block_size(t, l);
        if (pos < off + sz) {
          const std::size_t ny = block_shape(t, l)[1];
          return {t, l, static_cast<int>((pos - off) / ny), static_cast<int>((pos - off) % ny)};
        }
        off += sz;
      }
    }
    throw std::out_of_range("flat position outside table");
  }

  /// Level of each flat entry (j0 - 1 for scaling entries).
  std::vector<int> level_map() const {
    std::vector<int> lv(values.size());
    std::fill(lv.begin(), lv.begin() + static_cast<std::ptrdiff_t>(level_end(j0 - 1)), j0 - 1);
    for (int l = j0; l < J; ++l)
      std::fill(lv.begin() + static_cast<std::ptrdiff_t>(level_offset(l)),
                lv.begin() + static_cast<std::ptrdiff_t>(level_end(l)), l);
    return lv;
  }

  /// Dilation exponent of a level: j for wavelets, j0 for the scaling block.
  int dilation(int level) const noexcept { return level < j0 ? j0 : level; }

  double& at(const WaveletIndex& idx) { return values[flat(idx)]; }
  double at(const WaveletIndex& idx) const { return values[flat(idx)]; }

  bool same_layout(const CoefficientTable& o) const {
    return j0 == o.j0 && J == o.J && values.size() == o.values.size();
  }
};

/// Multiplier turning an L2 coefficient at `dilation` into the coefficient
/// against the Lp-normalized dual: 2^{j d (1/2 - 1/p)}, d = 2.
inline double lp_factor(int dilation, double p) {
  return std::exp2(2.0 * dilation * (0.5 - 1.0 / p));
}

inline CoefficientTable to_lp(const CoefficientTable& t, double p) {
  if (t.norm != Normalization::L2) throw std::invalid_argument("table is already Lp-normalized");
  if (!(p > 0.0)) throw std::invalid_argument("p must be positive");
  CoefficientTable out = t;
  out.norm = Normalization::Lp;
  out.p = p;
  for (int l = t.j0 - 1; l < t.J; ++l) {
    const double f = lp_factor(t.dilation(l), p);
    for (std::size_t k = t.level_offset(l); k < t.level_end(l); ++k) out.values[k] *= f;
  }
  return out;
}

inline CoefficientTable to_l2(const CoefficientTable& t) {
  if (t.norm == Normalization::L2) return t;
  CoefficientTable out = t;
  for (int l = t.j0 - 1; l < t.J; ++l) {
    const double f = lp_factor(t.dilation(l), t.p);
    for (std::size_t k = t.level_offset(l); k < t.level_end(l); ++k) out.values[k] /= f;
  }
  out.norm = Normalization::L2;
  out.p = 2.0;
  return out;
}

/// Forward 2-D transform. Coefficients approximate L2 pairings with the
/// dual system on the physical bounding square.
inline CoefficientTable dwt2(const Field& field, const WaveletBasis& basis, int j0) {
  const int J = field.grid.J;
  if (j0 < 0 || j0 >= J) throw std::invalid_argument("dwt2: need 0 <= j0 < J");
  CoefficientTable table(basis, j0, J);

  std::size_t n = field.n();
  std::vector<double> a(field.values);
  const double h = field.grid.h();
  for (double& v : a) v *= h;

  std::vector<double> line(n), s(n), d(n), lowx, highx;
  for (int j = J - 1; j >= j0; --j) {
    const std::size_t m = (n - 1) / 2;
    // along x: columns of a
    lowx.assign((m + 1) * n, 0.0);
    highx.assign(m * n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t i = 0; i < n; ++i) line[i] = a[i * n + c];
      detail::forward_line(basis, line.data(), static_cast<std::ptrdiff_t>(n), s.data(), d.data());
      for (std::size_t k = 0; k <= m; ++k) lowx[k * n + c] = s[k];
      for (std::size_t k = 0; k < m; ++k) highx[k * n + c] = d[k];
    }
    // along y: rows of lowx and highx
    std::vector<double> next((m + 1) * (m + 1));
    double* t1 = table.values.data() + table.block_offset(1, j);
    double* t2 = table.values.data() + table.block_offset(2, j);
    double* t3 = table.values.data() + table.block_offset(3, j);
    for (std::size_t i = 0; i <= m; ++i) {
      detail::forward_line(basis, lowx.data() + i * n, static_cast<std::ptrdiff_t>(n), s.data(), d.data());
      std::copy_n(s.data(), m + 1, next.data() + i * (m + 1));
      std::copy_n(d.data(), m, t1 + i * m);
    }
    for (std::size_t i = 0; i < m; ++i) {
      detail::forward_line(basis, highx.data() + i * n, static_cast<std::ptrdiff_t>(n), s.data(), d.data());
      std::copy_n(s.data(), m + 1, t2 + i * (m + 1));
      std::copy_n(d.data(), m, t3 + i * m);
    }
    a.swap(next);
    n = m + 1;
  }
  std::copy(a.begin(), a.end(), table.values.begin());
  return table;
}

/// Inverse 2-D transform onto the grid of level table.J over `box`.
inline Field idwt2(const CoefficientTable& table, const WaveletBasis& basis, const Square& box) {
  if (table.norm != Normalization::L2) throw std::invalid_argument("idwt2: convert the table to L2 first");
  const int J = table.J;
  std::size_t n = CoefficientTable::side(table.j0) + 1;
  std::vector<double> a(table.values.begin(), table.values.begin() + static_cast<std::ptrdiff_t>(n * n));
  const std::size_t nmax = CoefficientTable::side(J) + 1;
  std::vector<double> s(nmax), d(nmax), line(nmax), lowx, highx;
  for (int j = table.j0; j < J; ++j) {
    const std::size_t m = n - 1;
    const std::size_t nn = 2 * m + 1;
    const double* t1 = table.values.data() + table.block_offset(1, j);
    const double* t2 = table.values.data() + table.block_offset(2, j);
    const double* t3 = table.values.data() + table.block_offset(3, j);
    lowx.assign((m + 1) * nn, 0.0);
    highx.assign(m * nn, 0.0);
    for (std::size_t i = 0; i <= m; ++i) {
      std::copy_n(a.data() + i * (m + 1), m + 1, s.data());
      std::copy_n(t1 + i * m, m, d.data());
      detail::inverse_line(basis, s.data(), d.data(), static_cast<std::ptrdiff_t>(nn), lowx.data() + i * nn);
    }
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(t2 + i * (m + 1), m + 1, s.data());
      std::copy_n(t3 + i * m, m, d.data());
      detail::inverse_line(basis, s.data(), d.data(), static_cast<std::ptrdiff_t>(nn), highx.data() + i * nn);
    }
    std::vector<double> next(nn * nn);
    for (std::size_t c = 0; c < nn; ++c) {
      for (std::size_t k = 0; k <= m; ++k) s[k] = lowx[k * nn + c];
      for (std::size_t k = 0; k < m; ++k) d[k] = highx[k * nn + c];
      detail::inverse_line(basis, s.data(), d.data(), static_cast<std::ptrdiff_t>(nn), line.data());
      for (std::size_t i = 0; i < nn; ++i) next[i * nn + c] = line[i];
    }
    a.swap(next);
    n = nn;
  }
  Field out(Grid(J, box));
  const double h = out.grid.h();
  for (std::size_t k = 0; k < a.size(); ++k) out.values[k] = a[k] / h;
  return out;
}

/// Reference-coordinate square Q_{j,k} = 2^-j k + 2^-j [-N, N]^2. Scaling
/// indices use the dilation 2^-j0 of the scaling functions.
inline Square support_cube(const WaveletIndex& idx, double N, int j0 = 0) {
  const int j = idx.type == 0 ? j0 : idx.level;
  const double s = std::exp2(-j);
  return {s * (idx.kx - N), s * (idx.ky - N), 2.0 * N * s};
}

inline Square support_cube(const WaveletIndex& idx, const WaveletBasis& b, int j0 = 0) {
  return support_cube(idx, b.N, j0);
}

/// Physical support cube for a grid over `box`.
inline Square physical_cube(const Square& ref, const Square& box) {
  return {box.x0 + box.side * ref.x0, box.y0 + box.side * ref.y0, box.side * ref.side};
}

/// Cascade algorithm for the refinable function with mask `h` (rescaled to
/// sum 2): values at the dyadic points first + i 2^-levels after `levels`
/// refinements. The classical start is a unit impulse at the origin, which
/// converges to phi; with exact_start the integer values of phi are taken
/// from the eigenvector of the refinement matrix and every sample is exact.
inline std::vector<double> cascade(const Filter& h, int levels, bool exact_start = false) {
  const double scale = 2.0 / h.sum();
  const int a = h.first, b = h.last();
  const int len = b - a + 1;
  auto tap = [&](int n) { return (n < a || n > b) ? 0.0 : h.taps[static_cast<std::size_t>(n - a)] * scale; };

  std::vector<double> vals(static_cast<std::size_t>(len), 0.0);
  const int inner = len - 2;
  if (!exact_start || inner <= 0) {
    if (a <= 0 && b >= 0) vals[static_cast<std::size_t>(-a)] = 1.0;
  } else {
    // phi(m) = sum_n h[n] phi(2m - n) on interior integers a < m < b
    Eigen::MatrixXd T(inner, inner);
    for (int r = 0; r < inner; ++r)
      for (int c = 0; c < inner; ++c) T(r, c) = tap(2 * (a + 1 + r) - (a + 1 + c));
    Eigen::EigenSolver<Eigen::MatrixXd> es(T);
    int best = 0;
    for (int i = 1; i < inner; ++i)
      if (std::abs(es.eigenvalues()[i] - 1.0) < std::abs(es.eigenvalues()[best] - 1.0)) best = i;
    Eigen::VectorXd v = es.eigenvectors().col(best).real();
    v /= v.sum();
    for (int i = 0; i < inner; ++i) vals[static_cast<std::size_t>(i + 1)] = v[i];
  }

  // refine: phi(x) at spacing 2^-(l+1) from spacing 2^-l
  for (int l = 0; l < levels; ++l) {
    const int step = 1 << l;  // points per unit at level l
    const int cnt_new = len * 2 * step - 2 * step + 1;
    std::vector<double> next(static_cast<std::size_t>(cnt_new), 0.0);
    for (int q = 0; q < cnt_new; ++q) {
      // x = a + q / (2 step); 2x - n = 2a + q/step - n
      double acc = 0.0;
      for (int nn = a; nn <= b; ++nn) {
        const int num = (2 * a - nn - a) * step + q;  // (2x - n - a) * step
        if (num < 0) continue;
        if (num >= static_cast<int>(vals.size())) continue;
        acc += tap(nn) * vals[static_cast<std::size_t>(num)];
      }
      next[static_cast<std::size_t>(q)] = acc;
    }
    vals.swap(next);
  }
  return vals;
}

}  // namespace besovlab
