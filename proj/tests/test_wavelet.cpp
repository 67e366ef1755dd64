#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "besovlab/table_io.hpp"
#include "besovlab/wavelet.hpp"

using namespace besovlab;

namespace {

Field random_field(int J, std::mt19937_64& gen, Square box = {0, 0, 1}) {
  std::normal_distribution<double> nd;
  Field f(Grid(J, box));
  for (auto& v : f.values) v = nd(gen);
  return f;
}

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    num += (a[k] - b[k]) * (a[k] - b[k]);
    den += a[k] * a[k];
  }
  return std::sqrt(num / den);
}

bool inside_unit(const Square& q) {
  return q.x0 >= 0 && q.y0 >= 0 && q.x1() <= 1 && q.y1() <= 1;
}

}  // namespace

TEST(Basis, FamiliesAndErrors) {
  const auto b2 = build_basis("spline-biorthogonal", 2);
  EXPECT_EQ(b2.r, 2);
  EXPECT_DOUBLE_EQ(b2.N, 2.0);
  const auto b4 = build_basis("spline-biorthogonal", 4);
  EXPECT_EQ(b4.r, 4);
  EXPECT_DOUBLE_EQ(b4.N, 9.0);
  EXPECT_EQ(build_basis("spline-biorthogonal", 3).r, 4);
  EXPECT_THROW(build_basis("unknown-family", 2), std::invalid_argument);
  EXPECT_THROW(build_basis("spline-biorthogonal", 5), std::invalid_argument);
  EXPECT_THROW(build_basis("spline-2.2", 3), std::invalid_argument);
}

TEST(Basis, FilterShapes) {
  // CDF 5/3: analysis lowpass (-1, 2, 6, 2, -1)/8 * sqrt2
  const auto b2 = build_basis("spline-2.2", 2);
  ASSERT_EQ(b2.dual_low.first, -2);
  const double ref53[] = {-1, 2, 6, 2, -1};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(b2.dual_low.taps[i], ref53[i] / 8 * std::sqrt(2.0), 1e-15);

  // spline 4.8: primal lowpass is the cubic B-spline mask, dual has 19 taps
  const auto b4 = build_basis("spline-4.8", 4);
  ASSERT_EQ(b4.primal_low.first, -2);
  ASSERT_EQ(b4.primal_low.taps.size(), 5u);
  const double bspline[] = {1, 4, 6, 4, 1};
  for (int i = 0; i < 5; ++i)
    EXPECT_NEAR(b4.primal_low.taps[i] / b4.primal_low.taps[2], bspline[i] / 6, 1e-14);
  EXPECT_EQ(b4.dual_low.taps.size(), 19u);
  EXPECT_NEAR(b4.dual_low.sum(), std::sqrt(2.0), 1e-14);
}

TEST(Basis, DualHighpassAnnihilatesMonomials) {
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    for (int q = 0; q < b.r; ++q) {
      double acc = 0, scale = 0;
      for (std::size_t i = 0; i < b.dual_high.taps.size(); ++i) {
        const double n = b.dual_high.first + static_cast<int>(i);
        acc += b.dual_high.taps[i] * std::pow(n, q);
        scale += std::abs(b.dual_high.taps[i] * std::pow(n, q));
      }
      EXPECT_LE(std::abs(acc), 1e-13 * scale) << fam << " degree " << q;
    }
    double acc = 0;
    for (std::size_t i = 0; i < b.dual_high.taps.size(); ++i)
      acc += b.dual_high.taps[i] * std::pow(b.dual_high.first + static_cast<int>(i), b.r);
    EXPECT_GT(std::abs(acc), 1e-6) << fam << " has more moments than declared";
  }
}

TEST(Transform, PerfectReconstruction) {
  std::mt19937_64 gen(7);
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    for (int J = 1; J <= 7; ++J) {
      for (int j0 = 0; j0 < J; ++j0) {
        const Square box{-1.0, 0.5, 2.5};
        const auto f = random_field(J, gen, box);
        const auto t = dwt2(f, b, j0);
        EXPECT_EQ(t.values.size(), f.values.size());
        const auto g = idwt2(t, b, box);
        EXPECT_LE(rel_err(f.values, g.values), 1e-12) << fam << " J=" << J << " j0=" << j0;
      }
    }
  }
}

TEST(Transform, ZeroInZeroOut) {
  const auto b = build_basis("spline-4.8", 4);
  const Field f(Grid(6, {0, 0, 1}));
  const auto t = dwt2(f, b, 0);
  for (double v : t.values) EXPECT_EQ(v, 0.0);
  const auto g = idwt2(t, b, f.grid.box);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Transform, Biorthogonality) {
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    const int J = 5, j0 = 1;
    CoefficientTable e(b, j0, J);
    double worst = 0.0;
    for (std::size_t pos = 0; pos < e.values.size(); ++pos) {
      std::fill(e.values.begin(), e.values.end(), 0.0);
      e.values[pos] = 1.0;
      const auto t = dwt2(idwt2(e, b, {0, 0, 1}), b, j0);
      for (std::size_t q = 0; q < t.values.size(); ++q)
        worst = std::max(worst, std::abs(t.values[q] - (q == pos ? 1.0 : 0.0)));
    }
    EXPECT_LE(worst, 1e-8) << fam;
  }
}

TEST(Transform, VanishingMomentsOnPolynomials) {
  const int J = 8, j0 = 2;
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    std::vector<std::pair<int, int>> degrees;
    for (int a = 0; a < b.r; ++a)
      for (int c = 0; a + c < b.r; ++c) degrees.emplace_back(a, c);
    for (auto [a, c] : degrees) {
      Field f(Grid(J, {0, 0, 1}));
      f.sample([&](double x, double y) { return std::pow(x - 0.3, a) * std::pow(y + 0.2, c); });
      double sup = 0;
      for (double v : f.values) sup = std::max(sup, std::abs(v));
      const auto t = dwt2(f, b, j0);
      double worst = 0;
      for (std::size_t pos = t.level_end(j0 - 1); pos < t.values.size(); ++pos) {
        const auto idx = t.index_of(pos);
        if (!inside_unit(support_cube(idx, b, j0))) continue;
        worst = std::max(worst, std::abs(t.values[pos]));
      }
      EXPECT_LE(worst, 1e-8 * sup) << fam << " x^" << a << " y^" << c;
    }
  }
}

TEST(Transform, SingleWaveletSynthesisRoundTrip) {
  const auto b = build_basis("spline-4.8", 4);
  CoefficientTable t(b, 0, 7);
  const WaveletIndex idx{2, 4, 5, 9};
  t.at(idx) = 1.0;
  const auto back = dwt2(idwt2(t, b, {0, 0, 1}), b, 0);
  for (std::size_t pos = 0; pos < back.values.size(); ++pos)
    EXPECT_NEAR(back.values[pos], pos == t.flat(idx) ? 1.0 : 0.0, 1e-8);
}

TEST(Transform, ScalingFunctionMatchesCascade) {
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    const int iters = 8, j0 = 2, J = j0 + iters;
    const int a = b.primal_low.first;
    const int per = 1 << iters;

    const Square box{-1, -1, 2};
    CoefficientTable t(b, j0, J);
    const WaveletIndex idx{0, j0 - 1, 2, 2};
    t.at(idx) = 1.0;
    const auto f = idwt2(t, b, box);

    auto worst_against = [&](const std::vector<double>& phi) {
      auto phi_at = [&](long m) {  // phi(m / per)
        const long q = m - static_cast<long>(a) * per;
        return (q < 0 || q >= static_cast<long>(phi.size())) ? 0.0 : phi[static_cast<std::size_t>(q)];
      };
      double worst = 0;
      for (std::size_t i = 0; i < f.n(); ++i) {
        for (std::size_t j = 0; j < f.n(); ++j) {
          const long mx = static_cast<long>(i) - static_cast<long>(idx.kx) * per;
          const long my = static_cast<long>(j) - static_cast<long>(idx.ky) * per;
          const double expect = phi_at(mx) * phi_at(my) * std::exp2(j0) / box.side;
          worst = std::max(worst, std::abs(f(i, j) - expect));
        }
      }
      return worst;
    };
    EXPECT_LE(worst_against(cascade(b.primal_low, iters)), 1e-6) << fam;
    // against exact dyadic values the cascade error shrinks like 4^-iters
    EXPECT_LE(worst_against(cascade(b.primal_low, iters, true)), 4.0 * std::exp2(-2.0 * iters)) << fam;
  }
}

TEST(Geometry, SupportCubeFormula) {
  const auto q0 = support_cube(WaveletIndex{1, 0, 0, 0}, 1.0);
  EXPECT_DOUBLE_EQ(q0.x0, -1.0);
  EXPECT_DOUBLE_EQ(q0.x1(), 1.0);
  EXPECT_DOUBLE_EQ(q0.y0, -1.0);
  const auto q3 = support_cube(WaveletIndex{3, 3, 8, 0}, 1.0);
  EXPECT_DOUBLE_EQ(q3.x0, 1.0 - 1.0 / 8);
  EXPECT_DOUBLE_EQ(q3.x1(), 1.0 + 1.0 / 8);
  EXPECT_DOUBLE_EQ(q3.y0, -1.0 / 8);
  EXPECT_DOUBLE_EQ(q3.y1(), 1.0 / 8);
}

TEST(Geometry, SynthesizedFunctionsVanishOutsideSupportCube) {
  std::mt19937_64 gen(11);
  for (const char* fam : {"spline-2.2", "spline-4.8"}) {
    const auto b = build_basis(fam, 1);
    const int J = 8, j0 = 1;
    const Square box{-1, -1, 2};
    CoefficientTable t(b, j0, J);
    std::uniform_int_distribution<std::size_t> pick(0, t.values.size() - 1);
    for (int trial = 0; trial < 40; ++trial) {
      std::fill(t.values.begin(), t.values.end(), 0.0);
      const std::size_t pos = pick(gen);
      t.values[pos] = 1.0;
      const auto idx = t.index_of(pos);
      const auto q = physical_cube(support_cube(idx, b, j0), box);
      const auto f = idwt2(t, b, box);
      double outside = 0;
      for (std::size_t i = 0; i < f.n(); ++i)
        for (std::size_t j = 0; j < f.n(); ++j) {
          const auto p = f.grid.node(i, j);
          if (p.x < q.x0 || p.x > q.x1() || p.y < q.y0 || p.y > q.y1()) outside = std::max(outside, std::abs(f(i, j)));
        }
      EXPECT_LE(outside, 1e-12) << fam << " type " << idx.type << " level " << idx.level;
    }
  }
}

TEST(Table, IndexRoundTrip) {
  const auto b = build_basis("spline-2.2", 2);
  const CoefficientTable t(b, 2, 6);
  EXPECT_EQ(t.total_size(), 65u * 65u);
  for (std::size_t pos = 0; pos < t.values.size(); ++pos) EXPECT_EQ(t.flat(t.index_of(pos)), pos);
  EXPECT_FALSE(t.valid({0, 2, 0, 0}));
  EXPECT_FALSE(t.valid({1, 6, 0, 0}));
  EXPECT_FALSE(t.valid({3, 3, 8, 0}));
  EXPECT_TRUE(t.valid({1, 3, 8, 7}));
}

TEST(Table, LpNormalizationIsDiagonalScaling) {
  const auto b = build_basis("spline-4.8", 4);
  std::mt19937_64 gen(3);
  const auto t = dwt2(random_field(6, gen), b, 1);
  for (double p : {1.0, 1.5, 3.0, 0.5}) {
    const auto lp = to_lp(t, p);
    EXPECT_EQ(lp.norm, Normalization::Lp);
    const auto lv = t.level_map();
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      const int dil = t.dilation(lv[k]);
      EXPECT_EQ(lp.values[k], t.values[k] * std::exp2(2.0 * dil * (0.5 - 1.0 / p)));
    }
    const auto back = to_l2(lp);
    for (std::size_t k = 0; k < t.values.size(); ++k)
      EXPECT_NEAR(back.values[k], t.values[k], 4e-16 * std::abs(t.values[k]));
  }
  EXPECT_THROW(idwt2(to_lp(t, 3.0), b, {0, 0, 1}), std::invalid_argument);
  EXPECT_THROW(to_lp(to_lp(t, 3.0), 3.0), std::invalid_argument);
}

TEST(Table, Serialization) {
  const auto b = build_basis("spline-4.8", 4);
  std::mt19937_64 gen(5);
  const auto t = to_lp(dwt2(random_field(5, gen), b, 1), 1.25);
  const auto j = table_from_json(nlohmann::json::parse(to_json(t).dump()));
  const auto bin = table_from_binary(to_binary(t));
  for (const auto* u : {&j, &bin}) {
    EXPECT_EQ(u->family, t.family);
    EXPECT_EQ(u->r, t.r);
    EXPECT_EQ(u->j0, t.j0);
    EXPECT_EQ(u->J, t.J);
    EXPECT_EQ(u->norm, t.norm);
    EXPECT_EQ(u->p, t.p);
    EXPECT_EQ(u->values, t.values);
  }
  auto broken = to_binary(t);
  broken.resize(broken.size() - 3);
  EXPECT_THROW(table_from_binary(broken), std::runtime_error);
}

TEST(Transform, LevelErrors) {
  const auto b = build_basis("spline-2.2", 2);
  const Field f(Grid(4, {0, 0, 1}));
  EXPECT_THROW(dwt2(f, b, 4), std::invalid_argument);
  EXPECT_THROW(dwt2(f, b, -1), std::invalid_argument);
}
