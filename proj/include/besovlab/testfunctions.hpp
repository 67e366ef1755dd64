#pragma once

// Bundled test functions for the regularity and approximation experiments.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

#include "besovlab/domain.hpp"

namespace besovlab::testfn {

/// 1 - t^4 (35 - 84 t + 70 t^2 - 20 t^3) on [0, 1]: a C^3 step from 1 to 0.
inline double smooth_cutoff(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return 1.0 - t * t * t * t * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
}

/// Quintic on [0, L] matching value, slope and curvature at both ends.
inline double hermite5(double t, double L, double y0, double d0, double dd0, double y1, double d1, double dd1) {
  // p(t) = c0 + c1 t + c2 t^2 + c3 t^3 + c4 t^4 + c5 t^5
  const double c0 = y0, c1 = d0, c2 = dd0 / 2;
  const double r0 = y1 - (c0 + c1 * L + c2 * L * L);
  const double r1 = d1 - (c1 + 2 * c2 * L);
  const double r2 = dd1 - 2 * c2;
  const double L2 = L * L, L3 = L2 * L, L4 = L3 * L, L5 = L4 * L;
  const double c3 = (20 * r0 - 8 * r1 * L + r2 * L2) / (2 * L3);
  const double c4 = (-30 * r0 + 14 * r1 * L - 2 * r2 * L2) / (2 * L4);
  const double c5 = (12 * r0 - 6 * r1 * L + r2 * L2) / (2 * L5);
  return c0 + t * (c1 + t * (c2 + t * (c3 + t * (c4 + t * c5))));
}

/// r^{2/3} sin(2 phi / 3) chi(r) for the L-shape (-1,1)^2 \ [0,1)^2, with
/// phi = theta - pi/2 in (0, 3pi/2) measured from the positive y-axis. It
/// vanishes on both edges at the reentrant corner. In the missing quadrant the
/// angular factor continues as a quintic that matches value, slope and
/// curvature at both edges, so the sampled function on the whole square is
/// smooth away from the corner.
inline double lshape_singular(double x, double y, bool cutoff = true) {
  const double r = std::hypot(x, y);
  if (r == 0.0) return 0.0;
  double phi = std::atan2(y, x) - std::numbers::pi / 2;
  if (phi < 0) phi += 2 * std::numbers::pi;
  const double gap = 1.5 * std::numbers::pi;
  const double ang = phi <= gap ? std::sin(2.0 * phi / 3.0)
                                : hermite5(phi - gap, std::numbers::pi / 2, 0.0, -2.0 / 3.0, 0.0, 0.0, 2.0 / 3.0, 0.0);
  return std::pow(r, 2.0 / 3.0) * ang * (cutoff ? smooth_cutoff(r) : 1.0);
}

/// The same corner function without the cutoff: harmonic in the L-shape.
inline double lshape_singular_homogeneous(double x, double y) { return lshape_singular(x, y, false); }

/// C-infinity bump exp(1 - 1 / (1 - |x - c|^2 / R^2)) supported in the disc B(c, R).
inline double bump(double x, double y, double cx = -0.5, double cy = -0.5, double R = 0.4) {
  const double q = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (R * R);
  return q < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - q)) : 0.0;
}

/// Centered cubic B-spline on [-2, 2].
inline double cubic_bspline(double t) {
  t = std::abs(t);
  if (t >= 2.0) return 0.0;
  if (t >= 1.0) return (2.0 - t) * (2.0 - t) * (2.0 - t) / 6.0;
  return 2.0 / 3.0 - t * t + 0.5 * t * t * t;
}

/// Tensor product of cubic B-splines of width 4w centered at (cx, cy).
inline double tensor_spline(double x, double y, double cx = -0.5, double cy = -0.5, double w = 0.1) {
  return cubic_bspline((x - cx) / w) * cubic_bspline((y - cy) / w) * 1.5;
}

/// Product sin(pi x) sin(pi y), the first Dirichlet eigenfunction of the unit square.
inline double square_eigenfunction(double x, double y) {
  return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y);
}

inline std::function<double(double, double)> by_name(const std::string& name) {
  if (name == "singular") return [](double x, double y) { return lshape_singular(x, y); };
  if (name == "singular-homogeneous") return lshape_singular_homogeneous;
  if (name == "bump") return [](double x, double y) { return bump(x, y); };
  if (name == "spline") return [](double x, double y) { return tensor_spline(x, y); };
  if (name == "eigenfunction") return square_eigenfunction;
  throw std::invalid_argument("unknown test function: " + name);
}

/// Samples a test function on the whole bounding square of `dom`.
inline Field sample(const PolygonDomain& dom, int J, const std::function<double(double, double)>& f) {
  Field out = dom.make_field(J);
  out.sample(f);
  return out;
}

}  // namespace besovlab::testfn
