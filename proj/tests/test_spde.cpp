#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "besovlab/spde.hpp"

using namespace besovlab;

TEST(Operator, LaplacianStencil) {
  const auto sq = unit_square();
  const auto op = assemble_operator(sq, 4, {});
  const double h2 = std::pow(1.0 / 16, 2);
  const std::size_t n = op.grid().n();
  const long r = op.dof(8 * n + 8);
  ASSERT_GE(r, 0);
  const auto& A = op.matrix();
  EXPECT_DOUBLE_EQ(A.coeff(r, r) * h2, -4.0);
  for (const auto [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}})
    EXPECT_DOUBLE_EQ(A.coeff(r, op.dof((8 + di) * n + 8 + dj)) * h2, 1.0);
  EXPECT_EQ(A.row(r).nonZeros(), 5);
  EXPECT_EQ(op.unknowns(), 15u * 15u);
}

TEST(Operator, SymmetricWithCrossTerm) {
  for (const auto& dom : {unit_square(), lshape(), hexagon()}) {
    const auto op = assemble_operator(dom, 5, {1.0, 0.3, 0.7});
    const Eigen::SparseMatrix<double> A = op.matrix();
    const Eigen::SparseMatrix<double> At = A.transpose();
    EXPECT_EQ((A - At).norm(), 0.0) << dom.name();
    // the four-point cross stencil sums to zero along each interior row
    const long r = op.dof(16 * op.grid().n() + 8);
    if (r >= 0) EXPECT_NEAR(A.row(r).sum(), 0.0, 1e-9);
  }
  EXPECT_THROW(assemble_operator(unit_square(), 4, {1.0, 1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(assemble_operator(unit_square(), 4, {-1.0, 0.0, 1.0}), std::invalid_argument);
}

TEST(Operator, SmallestEigenvalueNearTwoPiSquared) {
  const auto op = assemble_operator(unit_square(), 7, {});
  const Eigen::SparseMatrix<double> negA = -Eigen::SparseMatrix<double>(op.matrix());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(negA);
  ASSERT_EQ(ldlt.info(), Eigen::Success);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(static_cast<long>(op.unknowns()));
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd w = ldlt.solve(v);
    lambda = v.dot(v) / v.dot(w);
    v = w / w.norm();
  }
  const double exact = 2 * std::numbers::pi * std::numbers::pi;
  EXPECT_NEAR(lambda, exact, 0.02 * exact);
  // negative definite: the Rayleigh quotient of A is negative
  EXPECT_LT(v.dot(op.matrix() * v), 0.0);
}

TEST(Step, ZeroStaysZero) {
  const auto op = assemble_operator(lshape(), 5, {});
  Stepper st(op, 1e-3);
  const auto u = st.step(op.blank(), op.blank());
  for (double v : u.values) EXPECT_EQ(v, 0.0);
}

TEST(Step, EigenfunctionDecay) {
  const auto sq = unit_square();
  const auto op = assemble_operator(sq, 7, {});
  const double dt = 1e-3;
  Stepper st(op, dt);
  Field u = op.blank();
  u.sample(testfn::square_eigenfunction).restrict_to_mask();
  const auto next = st.step(u, op.blank());
  const double factor = 1.0 / (1.0 + 2 * std::numbers::pi * std::numbers::pi * dt);
  const double h = op.grid().h();
  double err = 0.0;
  for (std::size_t k = 0; k < u.values.size(); ++k) err = std::max(err, std::abs(next.values[k] - factor * u.values[k]));
  EXPECT_LT(err, 5 * h * h);
  EXPECT_LE(st.last_iterations(), 200);
}

TEST(Step, ZeroTimeStepAddsIncrement) {
  const auto op = assemble_operator(lshape(), 5, {});
  Stepper st(op, 0.0);
  Field u = op.blank(), dM = op.blank();
  u.sample([](double x, double y) { return x * y; }).restrict_to_mask();
  dM.sample([](double x, double y) { return std::cos(x + y); }).restrict_to_mask();
  const auto next = st.step(u, dM);
  for (std::size_t k = 0; k < u.values.size(); ++k) EXPECT_EQ(next.values[k], u.values[k] + dM.values[k]);
}

TEST(Run, NoiseOffZeroInitialStaysZero) {
  SpdeConfig cfg;
  cfg.J = 5;
  cfg.steps = 8;
  cfg.noise.reset();
  cfg.snapshots = {0, 4, 8};
  const auto tr = run(cfg, 1);
  ASSERT_EQ(tr.snapshots.size(), 3u);
  for (const auto& s : tr.snapshots)
    for (double v : s.u.values) EXPECT_EQ(v, 0.0);
}

TEST(Run, HeatSemigroupDecay) {
  SpdeConfig cfg;
  cfg.domain = "square";
  cfg.J = 7;
  cfg.T = 0.05;
  cfg.steps = 512;
  cfg.noise.reset();
  cfg.initial = "eigenfunction";
  cfg.snapshots = {0, 128, 256, 512};
  cfg.diagnostics = false;
  const auto tr = run(cfg, 0);
  const double l0 = tr.snapshots.front().l2;
  double prev = l0;
  for (const auto& s : tr.snapshots) {
    const double expect = l0 * std::exp(-2 * std::numbers::pi * std::numbers::pi * s.time);
    EXPECT_NEAR(s.l2, expect, 0.03 * expect) << "t = " << s.time;
    EXPECT_LE(s.l2, prev);
    prev = s.l2;
  }
}

TEST(Run, EnergyDissipationAndDirichlet) {
  SpdeConfig cfg;
  cfg.J = 6;
  cfg.steps = 20;
  cfg.T = 0.05;
  cfg.noise.reset();
  cfg.initial = "bump";
  cfg.diffusion = {1.0, 0.4, 0.8};
  cfg.snapshots.clear();
  for (int k = 0; k <= 20; ++k) cfg.snapshots.push_back(k);
  const auto tr = run(cfg, 0);
  for (std::size_t i = 1; i < tr.snapshots.size(); ++i) EXPECT_LE(tr.snapshots[i].l2, tr.snapshots[i - 1].l2 * (1 + 1e-12));
  for (const auto& s : tr.snapshots)
    for (std::size_t k = 0; k < s.u.values.size(); ++k)
      if (!s.u.mask[k]) EXPECT_EQ(s.u.values[k], 0.0);
}

TEST(Run, NoisyPathsAreDeterministicAndMasked) {
  SpdeConfig cfg;
  cfg.J = 6;
  cfg.steps = 16;
  cfg.noise = NoiseModel{1.5, 0.4, 0.0, 2, NoiseMode::sparse, 0, 7};
  cfg.snapshots = {8, 16};
  const auto a = run(cfg, 99), b = run(cfg, 99), c = run(cfg, 100);
  ASSERT_EQ(a.snapshots.size(), 2u);
  EXPECT_EQ(a.snapshots[1].u.values, b.snapshots[1].u.values);
  EXPECT_NE(a.snapshots[1].u.values, c.snapshots[1].u.values);
  EXPECT_GT(a.snapshots[1].l2, 0.0);
  EXPECT_GT(a.snapshots[1].diagnostic, 0.0);
  for (std::size_t k = 0; k < a.snapshots[1].u.values.size(); ++k)
    if (!a.snapshots[1].u.mask[k]) EXPECT_EQ(a.snapshots[1].u.values[k], 0.0);
}

TEST(Run, NoiseLinearity) {
  SpdeConfig cfg;
  cfg.J = 6;
  cfg.steps = 16;
  cfg.noise = NoiseModel{2.5, 0.0, 0.0, 2, NoiseMode::dense, 0, 3};
  cfg.diagnostics = false;
  const auto unit = run(cfg, 5);
  for (double kappa : {3.0, 0.5, -1.7}) {
    cfg.noise_scale = kappa;
    const auto scaled = run(cfg, 5);
    const auto& u = unit.snapshots.back().u.values;
    const auto& v = scaled.snapshots.back().u.values;
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
      num = std::max(num, std::abs(v[k] - kappa * u[k]));
      den = std::max(den, std::abs(kappa * u[k]));
    }
    EXPECT_LE(num, 1e-12 * den) << kappa;
  }
}

TEST(Config, JsonRoundTripAndErrors) {
  const nlohmann::json j = {{"domain", "lshape"},
                            {"grid", {{"J", 6}, {"wavelet", "spline-4.8"}}},
                            {"time", {{"T", 0.2}, {"steps", 40}}},
                            {"diffusion", {{1.0, 0.2}, {0.2, 2.0}}},
                            {"noise", {{"a", 2.0}, {"b", 0.5}, {"mode", "sparse"}, {"j0", 2}, {"scale", 0.5}}},
                            {"snapshots", {{"every", 10}}},
                            {"seed", 12}};
  const auto c = spde_config_from_json(j);
  EXPECT_EQ(c.schedule(), (std::vector<int>{10, 20, 30, 40}));
  EXPECT_EQ(c.diffusion.a12, 0.2);
  EXPECT_EQ(c.noise_scale, 0.5);
  EXPECT_EQ(spde_config_from_json(c.to_json()).to_json(), c.to_json());
  auto bad = j;
  bad["diffusion"] = {{1.0, 0.2}, {0.3, 2.0}};
  EXPECT_THROW(spde_config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["time"]["T"] = 0.0;
  EXPECT_THROW(spde_config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["noise"]["J_noise"] = 9;
  EXPECT_THROW(spde_config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["noise"] = {{"enabled", false}};
  EXPECT_FALSE(spde_config_from_json(bad).noise.has_value());
}
