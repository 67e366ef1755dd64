#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace besovlab {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Axis-aligned square [x0, x0 + side] x [y0, y0 + side].
struct Square {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 1.0;

  double x1() const noexcept { return x0 + side; }
  double y1() const noexcept { return y0 + side; }
  /// Physical point of reference coordinates (s, t) in [0,1]^2.
  Point map(double s, double t) const noexcept { return {x0 + side * s, y0 + side * t}; }
};

/// Dyadic grid with 2^J + 1 nodes per axis covering a square, endpoints included.
struct Grid {
  int J = 0;
  Square box;

  Grid() = default;
  Grid(int level, Square square) : J(level), box(square) {
    if (level < 1 || level > 14) throw std::invalid_argument("grid level must lie in [1, 14]");
  }

  std::size_t n() const noexcept { return (std::size_t{1} << J) + 1; }
  std::size_t size() const noexcept { return n() * n(); }
  double h() const noexcept { return box.side / static_cast<double>(std::size_t{1} << J); }
  double x(std::size_t i) const noexcept { return box.x0 + h() * static_cast<double>(i); }
  double y(std::size_t j) const noexcept { return box.y0 + h() * static_cast<double>(j); }
  Point node(std::size_t i, std::size_t j) const noexcept { return {x(i), y(j)}; }
  std::size_t index(std::size_t i, std::size_t j) const noexcept { return i * n() + j; }

  bool operator==(const Grid& o) const noexcept {
    return J == o.J && box.x0 == o.box.x0 && box.y0 == o.box.y0 && box.side == o.box.side;
  }
};

/// Samples on a grid, row-major with the x index outermost: values[i * n + j] = f(x_i, y_j).
/// mask[k] != 0 marks nodes strictly inside the domain.
struct Field {
  Grid grid;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0)
      : grid(g), values(g.size(), fill), mask(g.size(), 1) {}
  Field(const Grid& g, std::vector<std::uint8_t> m)
      : grid(g), values(g.size(), 0.0), mask(std::move(m)) {
    if (mask.size() != g.size()) throw std::invalid_argument("mask size does not match grid");
  }

  std::size_t n() const noexcept { return grid.n(); }
  double& operator()(std::size_t i, std::size_t j) { return values[grid.index(i, j)]; }
  double operator()(std::size_t i, std::size_t j) const { return values[grid.index(i, j)]; }
  bool inside(std::size_t i, std::size_t j) const { return mask[grid.index(i, j)] != 0; }

  /// Fills values from f(x, y) at every node.
  template <class F>
  Field& sample(F&& f) {
    const std::size_t m = n();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) values[i * m + j] = f(grid.x(i), grid.y(j));
    return *this;
  }

  /// Zeroes every node outside the mask.
  Field& restrict_to_mask() {
    for (std::size_t k = 0; k < values.size(); ++k)
      if (!mask[k]) values[k] = 0.0;
    return *this;
  }

  std::size_t mask_count() const {
    std::size_t c = 0;
    for (auto m : mask) c += m != 0;
    return c;
  }
};

/// Discrete L_p norm over mask nodes, h^2-weighted.
inline double lp_norm(const Field& f, double p) {
  const double h = f.grid.h();
  double acc = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k)
    if (f.mask[k]) acc += std::pow(std::abs(f.values[k]), p);
  return std::pow(acc * h * h, 1.0 / p);
}

inline double l2_norm(const Field& f) {
  const double h = f.grid.h();
  double acc = 0.0;
  for (std::size_t k = 0; k < f.values.size(); ++k)
    if (f.mask[k]) acc += f.values[k] * f.values[k];
  return std::sqrt(acc * h * h);
}

/// Squared L2 norm of the centered-difference gradient over mask nodes.
/// One-sided differences are used on the outer grid rows.
inline double gradient_l2_squared(const Field& f) {
  const std::size_t n = f.n();
  const double h = f.grid.h();
  double acc = 0.0;
  auto v = [&](std::size_t i, std::size_t j) { return f.values[i * n + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!f.mask[i * n + j]) continue;
      const double gx = i == 0       ? (v(1, j) - v(0, j)) / h
                        : i == n - 1 ? (v(n - 1, j) - v(n - 2, j)) / h
                                     : (v(i + 1, j) - v(i - 1, j)) / (2 * h);
      const double gy = j == 0       ? (v(i, 1) - v(i, 0)) / h
                        : j == n - 1 ? (v(i, n - 1) - v(i, n - 2)) / h
                                     : (v(i, j + 1) - v(i, j - 1)) / (2 * h);
      acc += gx * gx + gy * gy;
    }
  }
  return acc * h * h;
}

/// Discrete W^1_2 norm: sqrt(||f||_2^2 + ||grad f||_2^2) over mask nodes.
inline double w12_norm(const Field& f) {
  const double l2 = l2_norm(f);
  return std::sqrt(l2 * l2 + gradient_l2_squared(f));
}

inline Field operator-(const Field& a, const Field& b) {
  if (!(a.grid == b.grid)) throw std::invalid_argument("field grids differ");
  Field out = a;
  for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] -= b.values[k];
  return out;
}

}  // namespace besovlab
