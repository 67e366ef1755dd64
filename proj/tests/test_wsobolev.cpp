#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "besovlab/testfunctions.hpp"
#include "besovlab/wsobolev.hpp"

using namespace besovlab;

namespace {

/// Adaptive Simpson on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, double eps, int depth = 40) {
  const auto step = [&](auto&& self, double lo, double hi, double flo, double fmid, double fhi, double whole, double tol,
                        int d) -> double {
    const double mid = 0.5 * (lo + hi), lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = (mid - lo) / 6 * (flo + 4 * flm + fmid), right = (hi - mid) / 6 * (fmid + 4 * frm + fhi);
    if (d <= 0 || std::abs(left + right - whole) <= 15 * tol) return left + right + (left + right - whole) / 15;
    return self(self, lo, mid, flo, flm, fmid, left, tol / 2, d - 1) +
           self(self, mid, hi, fmid, frm, fhi, right, tol / 2, d - 1);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return step(step, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), eps, depth);
}

/// (1 - q)^4 with q = |x - c|^2 / R^2, supported in B(c, R); returns value and
/// the three second derivatives.
struct PolyBump {
  double cx = 0.5, cy = 0.5, R = 0.3;
  double operator()(double x, double y) const {
    const double q = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (R * R);
    return q < 1 ? std::pow(1 - q, 4) : 0.0;
  }
  std::array<double, 3> hessian(double x, double y) const {
    const double dx = x - cx, dy = y - cy, q = (dx * dx + dy * dy) / (R * R);
    if (q >= 1) return {0, 0, 0};
    const double R2 = R * R;
    // g = (1-q)^4: g' = -4 (1-q)^3, g'' = 12 (1-q)^2 in q; q_x = 2 dx / R2
    const double g1 = -4 * std::pow(1 - q, 3), g2 = 12 * (1 - q) * (1 - q);
    return {g2 * 4 * dx * dx / (R2 * R2) + g1 * 2 / R2, g2 * 4 * dx * dy / (R2 * R2), g2 * 4 * dy * dy / (R2 * R2) + g1 * 2 / R2};
  }
};

}  // namespace

TEST(WeightedParams, DeltaAndRanges) {
  const WeightedParams a{1, 2.0, 2.0};
  EXPECT_EQ(a.delta(), 1.0);
  const WeightedParams b{2, 3.0, 1.4};
  EXPECT_EQ(b.delta(), 1.0 + (2.0 - 1.4) / 3.0);
  EXPECT_EQ((WeightedParams{1, 2, 2.0}).range(), ThetaRange::always_valid);
  EXPECT_EQ((WeightedParams{1, 3, 3.0}).range(), ThetaRange::always_valid);
  EXPECT_EQ((WeightedParams{1, 2, 1.5}).range(), ThetaRange::conditional);
  EXPECT_EQ((WeightedParams{1, 2, 2.9}).range(), ThetaRange::conditional);
  EXPECT_EQ((WeightedParams{1, 2, 1.0}).range(), ThetaRange::outside);
  EXPECT_EQ((WeightedParams{1, 2, 3.0}).range(), ThetaRange::outside);
  EXPECT_THROW((WeightedParams{3, 2, 2}.validate()), std::invalid_argument);
  EXPECT_THROW((WeightedParams{1, 1, 2}.validate()), std::invalid_argument);
}

TEST(WeightedNorm, CollapsesToLpWhenThetaIsD) {
  const auto sq = unit_square();
  auto f = sq.make_field(8);
  f.sample([](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); });
  // ||sin sin||_{L_3}^3 = (int_0^1 sin^3)^2 = (4 / (3 pi))^2
  const double exact = std::cbrt(std::pow(4.0 / (3.0 * std::numbers::pi), 2));
  EXPECT_NEAR(weighted_sobolev_norm(f, sq, {0, 3.0, 2.0}).total, exact, 2e-3 * exact);
  f.sample([](double, double) { return 1.0; });
  const auto one = weighted_sobolev_norm(f, sq, {1, 2.0, 2.0});
  EXPECT_EQ(one.order_terms[1], 0.0);
  EXPECT_NEAR(one.total, 1.0, 1e-2);  // cells touching the boundary are dropped
  const auto fine = weighted_sobolev_norm(sq.make_field(10).sample([](double, double) { return 1.0; }), sq, {1, 2.0, 2.0});
  EXPECT_LT(1.0 - fine.total, 1.0 - one.total);
}

TEST(WeightedNorm, DistancePowerMatchesEdgeReduction) {
  // u = rho^0.4: rho grad u = 0.4 rho^0.4 grad rho with |grad rho| = 1, and
  // the unit square has |{rho > r}| = (1 - 2r)^2
  const auto sq = unit_square();
  auto f = sq.make_field(9);
  f.sample([&](double x, double y) { return std::pow(sq.rho({x, y}), 0.4); });
  const double oracle = simpson([](double r) { return 0.16 * std::pow(r, 0.8) * 4 * (1 - 2 * r); }, 0.0, 0.5, 1e-12);
  const auto got = weighted_sobolev_norm(f, sq, {1, 2.0, 2.0});
  EXPECT_TRUE(std::isfinite(got.order_terms[1]));
  EXPECT_NEAR(got.order_terms[1], oracle, 0.05 * oracle);
}

TEST(Diagnostic, ZeroAndDistanceFunction) {
  const auto sq = unit_square();
  auto f = sq.make_field(8);
  EXPECT_EQ(corollary36_diagnostic(f, sq, 1, 2.0, 2.0), 0.0);
  EXPECT_EQ(corollary36_diagnostic(f, sq, 2, 2.0, 2.0), 0.0);
  f.sample([&](double x, double y) { return sq.rho({x, y}); });
  // |grad rho| = 1 off the diagonals; only the cells on the ridge deviate
  EXPECT_NEAR(corollary36_diagnostic(f, sq, 1, 2.0, 2.0), 1.0, 0.02);
  EXPECT_THROW(corollary36_diagnostic(f, sq, 3, 2.0, 2.0), std::invalid_argument);
}

TEST(Diagnostic, SecondOrderBumpAgainstDenseQuadrature) {
  const auto sq = unit_square();
  const PolyBump u;
  auto f = sq.make_field(9);
  f.sample(u);
  const double got = corollary36_diagnostic(f, sq, 2, 2.0, 2.0);
  // dense midpoint quadrature of rho^2 (u_xx^2 + u_xy^2 + u_yy^2)
  const int M = 1500;
  double acc = 0.0, plain = 0.0;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j) {
      const double x = (i + 0.5) / M, y = (j + 0.5) / M;
      const auto H = u.hessian(x, y);
      const double s = H[0] * H[0] + H[1] * H[1] + H[2] * H[2];
      const double r = sq.rho({x, y});
      acc += r * r * s;
      plain += s;
    }
  const double oracle = std::sqrt(acc) / M, unweighted = std::sqrt(plain) / M;
  EXPECT_NEAR(got, oracle, 0.02 * oracle);
  // rho ranges over [0.2, 0.5] on the support
  EXPECT_GE(got, 0.2 * unweighted * 0.98);
  EXPECT_LE(got, 0.5 * unweighted * 1.02);
}

TEST(WeightedNorm, ThetaShiftBounds) {
  const auto L = lshape();
  const double diam = L.diameter();
  const auto f = testfn::sample(L, 8, [](double x, double y) { return testfn::bump(x, y, -0.5, -0.5, 0.25); });
  for (double p : {1.5, 2.0, 3.0})
    for (double theta : {1.0, 2.0, 2.5})
      for (int m : {0, 1, 2}) {
        const double a = weighted_sobolev_norm(f, L, {m, p, theta}).total;
        const double b = weighted_sobolev_norm(f, L, {m, p, theta + 1}).total;
        EXPECT_GE(b / a, std::pow(0.25, 1 / p)) << p << ' ' << theta << ' ' << m;
        EXPECT_LE(b / a, std::pow(diam, 1 / p)) << p << ' ' << theta << ' ' << m;
      }
}

TEST(WeightedNorm, ZeroTraceMatchesW12) {
  // H^1_{2,0}: int u^2 rho^-2 + |grad u|^2. On a convex domain Hardy's
  // inequality gives int u^2 / rho^2 <= 4 int |grad u|^2, and rho <= 1/2 on
  // the unit square, so the ratio to the W^1_2 norm lies in [1, sqrt 5].
  const auto sq = unit_square();
  const std::vector<std::function<double(double, double)>> family = {
      [](double x, double y) { return std::sin(std::numbers::pi * x) * std::sin(std::numbers::pi * y); },
      [](double x, double y) { return 16 * x * (1 - x) * y * (1 - y); },
      [](double x, double y) { return testfn::bump(x, y, 0.4, 0.6, 0.3); },
      [](double x, double y) { return x * y * (1 - x) * (1 - y) * std::exp(x - y); }};
  for (int J : {7, 8}) {
    for (const auto& g : family) {
      auto f = sq.make_field(J);
      f.sample(g);
      const double h = weighted_sobolev_norm(f, sq, {1, 2.0, 0.0}).total;
      const double w = w12_norm(f);
      EXPECT_GE(h / w, 0.99);
      EXPECT_LE(h / w, std::sqrt(5.0));
    }
  }
}

TEST(WeightedNorm, Errors) {
  const auto sq = unit_square();
  const auto f = sq.make_field(5);
  EXPECT_THROW(weighted_sobolev_norm(f, sq, {3, 2.0, 2.0}), std::invalid_argument);
  const auto g = lshape().make_field(5);
  EXPECT_THROW(weighted_sobolev_norm(g, sq, {1, 2.0, 2.0}), std::invalid_argument);  // grid mismatch
  const PolygonDomain tiny("tiny", {{0, 0}, {1, 0}, {0.5, 0.001}});
  EXPECT_THROW(WeightedQuadrature(tiny, 3), std::invalid_argument);
}
