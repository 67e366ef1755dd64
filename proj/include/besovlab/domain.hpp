#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "besovlab/field.hpp"
#include "besovlab/wavelet.hpp"

namespace besovlab {

namespace geom {

inline double cross(Point a, Point b, Point c) noexcept {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

inline double dist(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

/// Closest point to p on segment [a, b].
inline Point closest_on_segment(Point p, Point a, Point b) noexcept {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return {a.x + t * dx, a.y + t * dy};
}

inline double point_segment_distance(Point p, Point a, Point b) noexcept {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double dot = (p.x - a.x) * dx + (p.y - a.y) * dy;
  const double len2 = dx * dx + dy * dy;
  if (dot <= 0 || len2 == 0) return dist(p, a);
  if (dot >= len2) return dist(p, b);
  return std::abs(cross(a, b, p)) / std::sqrt(len2);
}

inline bool on_segment(Point p, Point a, Point b) noexcept {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Point p1, Point p2, Point q1, Point q2) noexcept {
  const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

inline double segment_segment_distance(Point p1, Point p2, Point q1, Point q2) noexcept {
  if (segments_intersect(p1, p2, q1, q2)) return 0.0;
  return std::min({point_segment_distance(p1, q1, q2), point_segment_distance(p2, q1, q2),
                   point_segment_distance(q1, p1, p2), point_segment_distance(q2, p1, p2)});
}

inline double signed_area(const std::vector<Point>& poly) noexcept {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point p = poly[i], q = poly[(i + 1) % poly.size()];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

/// Sutherland-Hodgman clip of a polygon against an axis-aligned square.
inline std::vector<Point> clip_to_square(const std::vector<Point>& poly, const Square& q) {
  std::vector<Point> out = poly;
  auto clip = [&](auto inside, auto intersect) {
    std::vector<Point> in;
    in.swap(out);
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Point cur = in[i], prev = in[(i + in.size() - 1) % in.size()];
      const bool ci = inside(cur), pi = inside(prev);
      if (ci) {
        if (!pi) out.push_back(intersect(prev, cur));
        out.push_back(cur);
      } else if (pi) {
        out.push_back(intersect(prev, cur));
      }
    }
  };
  auto at_x = [](double x) {
    return [x](Point a, Point b) { const double t = (x - a.x) / (b.x - a.x); return Point{x, a.y + t * (b.y - a.y)}; };
  };
  auto at_y = [](double y) {
    return [y](Point a, Point b) { const double t = (y - a.y) / (b.y - a.y); return Point{a.x + t * (b.x - a.x), y}; };
  };
  clip([&](Point p) { return p.x >= q.x0; }, at_x(q.x0));
  if (!out.empty()) clip([&](Point p) { return p.x <= q.x1(); }, at_x(q.x1()));
  if (!out.empty()) clip([&](Point p) { return p.y >= q.y0; }, at_y(q.y0));
  if (!out.empty()) clip([&](Point p) { return p.y <= q.y1(); }, at_y(q.y1()));
  return out;
}

}  // namespace geom

/// Simple polygon, stored counterclockwise. The domain is the open interior.
class PolygonDomain {
 public:
  PolygonDomain(std::string name, std::vector<Point> vertices) : name_(std::move(name)), v_(std::move(vertices)) {
    if (v_.size() < 3) throw std::invalid_argument("polygon needs at least 3 vertices");
    const double area = geom::signed_area(v_);
    if (area == 0.0) throw std::invalid_argument("polygon is degenerate");
    if (area < 0) std::reverse(v_.begin(), v_.end());
    check_simple();
    compute_box();
    compute_angles();
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<Point>& vertices() const noexcept { return v_; }
  std::size_t edge_count() const noexcept { return v_.size(); }
  Point edge_start(std::size_t e) const { return v_[e]; }
  Point edge_end(std::size_t e) const { return v_[(e + 1) % v_.size()]; }

  /// Tight bounding square: the longer side of the bounding box, the shorter
  /// dimension centered.
  const Square& box() const noexcept { return box_; }
  const std::vector<double>& angles() const noexcept { return angles_; }
  double gamma0() const noexcept { return *std::max_element(angles_.begin(), angles_.end()); }
  double area() const noexcept { return geom::signed_area(v_); }

  double diameter() const noexcept {
    double d = 0.0;
    for (const auto& a : v_)
      for (const auto& b : v_) d = std::max(d, geom::dist(a, b));
    return d;
  }

  /// Distance to the boundary.
  double rho(Point x) const noexcept {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < v_.size(); ++e) d = std::min(d, geom::point_segment_distance(x, edge_start(e), edge_end(e)));
    return d;
  }

  /// Nearest boundary point.
  Point nearest_boundary_point(Point x) const noexcept {
    double best = std::numeric_limits<double>::infinity();
    Point arg{};
    for (std::size_t e = 0; e < v_.size(); ++e) {
      const Point c = geom::closest_on_segment(x, edge_start(e), edge_end(e));
      const double d = geom::dist(x, c);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    return arg;
  }

  /// Point-in-polygon; points on the boundary are outside.
  bool contains(Point x) const noexcept {
    bool in = false;
    for (std::size_t e = 0; e < v_.size(); ++e) {
      const Point a = edge_start(e), b = edge_end(e);
      if (geom::cross(a, b, x) == 0.0 && geom::on_segment(x, a, b)) return false;
      if ((a.y > x.y) != (b.y > x.y)) {
        const double xi = a.x + (x.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (x.x < xi) in = !in;
      }
    }
    return in;
  }

  /// True when the closed square meets the open polygon in positive area.
  bool meets(const Square& q) const {
    const auto clipped = geom::clip_to_square(v_, q);
    return clipped.size() >= 3 && std::abs(geom::signed_area(clipped)) > 1e-14 * q.side * q.side;
  }

  /// dist(Q, boundary); zero when an edge touches Q.
  double square_boundary_distance(const Square& q) const {
    const Point c[4] = {{q.x0, q.y0}, {q.x1(), q.y0}, {q.x1(), q.y1()}, {q.x0, q.y1()}};
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < v_.size(); ++e) {
      const Point a = edge_start(e), b = edge_end(e);
      if (a.x >= q.x0 && a.x <= q.x1() && a.y >= q.y0 && a.y <= q.y1()) return 0.0;
      for (int s = 0; s < 4; ++s) d = std::min(d, geom::segment_segment_distance(a, b, c[s], c[(s + 1) % 4]));
      if (d == 0.0) return 0.0;
    }
    return d;
  }

  /// Grid over the bounding square with the domain mask.
  Field make_field(int J) const {
    const Grid g(J, box_);
    std::vector<std::uint8_t> mask(g.size());
    for (std::size_t i = 0; i < g.n(); ++i)
      for (std::size_t j = 0; j < g.n(); ++j) mask[g.index(i, j)] = contains(g.node(i, j)) ? 1 : 0;
    return Field(g, std::move(mask));
  }

  nlohmann::json to_json() const {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& p : v_) verts.push_back({p.x, p.y});
    return {{"name", name_}, {"vertices", verts}};
  }

 private:
  void check_simple() const {
    const std::size_t n = v_.size();
    for (std::size_t e = 0; e < n; ++e) {
      if (geom::dist(edge_start(e), edge_end(e)) == 0.0) throw std::invalid_argument("polygon has a repeated vertex");
      for (std::size_t f = e + 1; f < n; ++f) {
        const bool adjacent = f == e + 1 || (e == 0 && f == n - 1);
        if (adjacent) continue;
        if (geom::segments_intersect(edge_start(e), edge_end(e), edge_start(f), edge_end(f)))
          throw std::invalid_argument("polygon is not simple");
      }
    }
  }

  void compute_box() {
    double x0 = v_[0].x, x1 = x0, y0 = v_[0].y, y1 = y0;
    for (const auto& p : v_) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    const double side = std::max(x1 - x0, y1 - y0);
    box_ = {x0 - 0.5 * (side - (x1 - x0)), y0 - 0.5 * (side - (y1 - y0)), side};
  }

  void compute_angles() {
    const std::size_t n = v_.size();
    angles_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Point prev = v_[(i + n - 1) % n], cur = v_[i], next = v_[(i + 1) % n];
      const double ax = prev.x - cur.x, ay = prev.y - cur.y;
      const double bx = next.x - cur.x, by = next.y - cur.y;
      // interior lies to the left of each edge; measure from `next` around to `prev`
      double ang = std::atan2(bx * ay - by * ax, bx * ax + by * ay);
      if (ang < 0) ang += 2 * std::numbers::pi;
      angles_[i] = ang;
    }
  }

  std::string name_;
  std::vector<Point> v_;
  Square box_;
  std::vector<double> angles_;
};

/// L-shape (-1,1)^2 minus [0,1)^2.
inline PolygonDomain lshape() {
  return {"lshape", {{-1, -1}, {1, -1}, {1, 0}, {0, 0}, {0, 1}, {-1, 1}}};
}

inline PolygonDomain unit_square() { return {"square", {{0, 0}, {1, 0}, {1, 1}, {0, 1}}}; }

/// Regular hexagon of circumradius 1 centered at the origin.
inline PolygonDomain hexagon() {
  std::vector<Point> v;
  for (int i = 0; i < 6; ++i) {
    const double t = std::numbers::pi / 3 * i;
    v.push_back({std::cos(t), std::sin(t)});
  }
  return {"hexagon", v};
}

inline PolygonDomain domain_from_json(const nlohmann::json& j) {
  std::vector<Point> v;
  for (const auto& p : j.at("vertices")) {
    if (!p.is_array() || p.size() != 2) throw std::invalid_argument("domain vertices must be [x, y] pairs");
    v.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return {j.value("name", std::string("custom")), v};
}

/// Built-in name (lshape, square, hexagon) or path to a JSON domain file.
inline PolygonDomain load_domain(const std::string& spec) {
  if (spec == "lshape") return lshape();
  if (spec == "square" || spec == "unit_square") return unit_square();
  if (spec == "hexagon") return hexagon();
  std::ifstream in(spec);
  if (!in) throw std::invalid_argument("unknown domain '" + spec + "' (not a built-in name or readable file)");
  return domain_from_json(nlohmann::json::parse(in));
}

/// Index sets of the boundary-layer decomposition at one level.
struct BoundaryLayerSets {
  int level = 0;
  std::vector<WaveletIndex> all;                   ///< indices with Q meeting the domain
  std::vector<double> rho;                         ///< dist(Q, boundary), parallel to `all`
  std::vector<std::vector<WaveletIndex>> layers;   ///< layers[m]

  std::size_t count(std::size_t m) const { return m < layers.size() ? layers[m].size() : 0; }
  std::size_t max_layer_size() const {
    std::size_t c = 0;
    for (const auto& l : layers) c = std::max(c, l.size());
    return c;
  }
  /// Size of the set of indices away from the boundary layer m = 0.
  std::size_t interior_count() const { return all.size() - count(0); }
  /// Smallest m with all layers >= m empty.
  std::size_t extent() const { return layers.size(); }
};

/// Partitions the wavelet indices of level j whose support cube meets the
/// domain by m 2^-j <= rho_{j,k} < (m + 1) 2^-j. Lengths are physical, with
/// 2^-j scaled by the side of the bounding square.
inline BoundaryLayerSets boundary_layers(const PolygonDomain& dom, const WaveletBasis& basis, int j) {
  if (j < 0) throw std::invalid_argument("boundary_layers: level must be nonnegative");
  BoundaryLayerSets out;
  out.level = j;
  const double unit = dom.box().side * std::exp2(-j);
  const int m = 1 << j;
  for (int type = 1; type <= 3; ++type) {
    const int nx = type == 2 || type == 3 ? m : m + 1;
    const int ny = type == 1 || type == 3 ? m : m + 1;
    for (int kx = 0; kx < nx; ++kx) {
      for (int ky = 0; ky < ny; ++ky) {
        const WaveletIndex idx{type, j, kx, ky};
        const Square q = physical_cube(support_cube(idx, basis), dom.box());
        if (!dom.meets(q)) continue;
        const double r = dom.square_boundary_distance(q);
        const auto layer = static_cast<std::size_t>(std::floor(r / unit));
        if (layer >= out.layers.size()) out.layers.resize(layer + 1);
        out.layers[layer].push_back(idx);
        out.all.push_back(idx);
        out.rho.push_back(r);
      }
    }
  }
  return out;
}

enum class Extension { none, zero_fill, reflect };

inline Extension extension_from_string(const std::string& s) {
  if (s == "none") return Extension::none;
  if (s == "zero_fill" || s == "zero-fill") return Extension::zero_fill;
  if (s == "reflect") return Extension::reflect;
  throw std::invalid_argument("unknown extension policy: " + s);
}

/// Values outside the mask: kept (none), zeroed (zero_fill), or copied from
/// the mirror image across the nearest polygon edge when that image lies
/// inside the domain, zero otherwise (reflect).
inline Field extend(const Field& f, const PolygonDomain& dom, Extension policy) {
  Field out = f;
  if (policy == Extension::none) return out;
  const std::size_t n = f.n();
  const double h = f.grid.h();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      if (f.mask[k]) continue;
      out.values[k] = 0.0;
      if (policy != Extension::reflect) continue;
      const Point p = f.grid.node(i, j);
      const Point c = dom.nearest_boundary_point(p);
      const Point img{2 * c.x - p.x, 2 * c.y - p.y};
      if (!dom.contains(img)) continue;
      const double sx = (img.x - f.grid.box.x0) / h, sy = (img.y - f.grid.box.y0) / h;
      const auto i0 = static_cast<std::size_t>(std::clamp(std::floor(sx), 0.0, static_cast<double>(n - 2)));
      const auto j0 = static_cast<std::size_t>(std::clamp(std::floor(sy), 0.0, static_cast<double>(n - 2)));
      const double tx = sx - static_cast<double>(i0), ty = sy - static_cast<double>(j0);
      double acc = 0.0, wsum = 0.0;
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) {
          const std::size_t q = (i0 + di) * n + (j0 + dj);
          if (!f.mask[q]) continue;
          const double w = (di ? tx : 1 - tx) * (dj ? ty : 1 - ty);
          acc += w * f.values[q];
          wsum += w;
        }
      if (wsum > 0) out.values[k] = acc / wsum;
    }
  }
  return out;
}

}  // namespace besovlab
