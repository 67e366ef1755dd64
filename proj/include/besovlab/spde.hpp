#pragma once

// Linear parabolic SPDE du = sum a^{mu nu} u_{x_mu x_nu} dt + dM_t with zero
// Dirichlet data: finite differences on the domain mask, semi-implicit Euler
// in time, conjugate gradients for the implicit solve.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "besovlab/domain.hpp"
#include "besovlab/field.hpp"
#include "besovlab/noise.hpp"
#include "besovlab/rng.hpp"
#include "besovlab/testfunctions.hpp"
#include "besovlab/wavelet.hpp"
#include "besovlab/wsobolev.hpp"

namespace besovlab {

/// Constant symmetric diffusion matrix.
struct Diffusion {
  double a11 = 1.0, a12 = 0.0, a22 = 1.0;

  void validate() const {
    if (!(a11 > 0) || !(a11 * a22 - a12 * a12 > 0)) throw std::invalid_argument("diffusion matrix must be positive definite");
  }
  /// Eigenvalues in increasing order.
  std::array<double, 2> eigenvalues() const {
    const double m = 0.5 * (a11 + a22), r = std::hypot(0.5 * (a11 - a22), a12);
    return {m - r, m + r};
  }
};

/// The discrete operator A_h on the interior mask nodes. Unknowns are
/// numbered in grid order.
class DiscreteOperator {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  DiscreteOperator(const PolygonDomain& dom, int J, const Diffusion& a) : grid_(J, dom.box()), a_(a) {
    a.validate();
    const Field f = dom.make_field(J);
    mask_ = f.mask;
    dof_.assign(grid_.size(), -1);
    for (std::size_t k = 0; k < grid_.size(); ++k)
      if (mask_[k]) {
        dof_[k] = static_cast<long>(node_.size());
        node_.push_back(k);
      }
    if (node_.empty()) throw std::invalid_argument("operator: empty domain mask");
    const double h2 = grid_.h() * grid_.h();
    const long n = static_cast<long>(grid_.n());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(node_.size() * 9);
    for (std::size_t r = 0; r < node_.size(); ++r) {
      const long i = static_cast<long>(node_[r]) / n, j = static_cast<long>(node_[r]) % n;
      auto add = [&](long di, long dj, double v) {
        if (v == 0.0) return;
        const long ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= n || jj >= n) return;
        const long c = dof_[static_cast<std::size_t>(ii * n + jj)];
        if (c >= 0) trip.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
      };
      trip.emplace_back(static_cast<int>(r), static_cast<int>(r), -2.0 * (a.a11 + a.a22) / h2);
      add(1, 0, a.a11 / h2);
      add(-1, 0, a.a11 / h2);
      add(0, 1, a.a22 / h2);
      add(0, -1, a.a22 / h2);
      // 2 a12 u_xy with the symmetric four-point stencil
      add(1, 1, a.a12 / (2 * h2));
      add(-1, -1, a.a12 / (2 * h2));
      add(1, -1, -a.a12 / (2 * h2));
      add(-1, 1, -a.a12 / (2 * h2));
    }
    A_.resize(static_cast<long>(node_.size()), static_cast<long>(node_.size()));
    A_.setFromTriplets(trip.begin(), trip.end());
  }

  const Matrix& matrix() const noexcept { return A_; }
  const Grid& grid() const noexcept { return grid_; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
  std::size_t unknowns() const noexcept { return node_.size(); }
  long dof(std::size_t node) const { return dof_[node]; }
  std::size_t node(std::size_t dof) const { return node_[dof]; }

  Eigen::VectorXd gather(const Field& f) const {
    Eigen::VectorXd v(static_cast<long>(node_.size()));
    for (std::size_t r = 0; r < node_.size(); ++r) v[static_cast<long>(r)] = f.values[node_[r]];
    return v;
  }

  Field scatter(const Eigen::VectorXd& v) const {
    Field f(grid_, mask_);
    for (std::size_t r = 0; r < node_.size(); ++r) f.values[node_[r]] = v[static_cast<long>(r)];
    return f;
  }

  Field blank() const { return Field(grid_, mask_); }

 private:
  Grid grid_;
  Diffusion a_;
  std::vector<std::uint8_t> mask_;
  std::vector<long> dof_;
  std::vector<std::size_t> node_;
  Matrix A_;
};

inline DiscreteOperator assemble_operator(const PolygonDomain& dom, int J, const Diffusion& a) { return {dom, J, a}; }

/// Implicit Euler solver for (I - dt A_h) u+ = u + dM.
class Stepper {
 public:
  Stepper(const DiscreteOperator& op, double dt, double tolerance = 1e-10, int max_iterations = 5000)
      : op_(op), dt_(dt) {
    if (!(dt >= 0)) throw std::invalid_argument("time step must be nonnegative");
    const long n = static_cast<long>(op.unknowns());
    B_.resize(n, n);
    B_.setIdentity();
    B_ = B_ - dt * op.matrix();
    B_.makeCompressed();
    cg_.setTolerance(tolerance);
    cg_.setMaxIterations(max_iterations);
    cg_.compute(B_);
  }

  double dt() const noexcept { return dt_; }
  int last_iterations() const noexcept { return iterations_; }

  Field step(const Field& u, const Field& dM) {
    if (!(u.grid == op_.grid()) || !(dM.grid == op_.grid())) throw std::invalid_argument("step: field grid mismatch");
    const Eigen::VectorXd x0 = op_.gather(u);
    const Eigen::VectorXd rhs = x0 + op_.gather(dM);
    if (dt_ == 0.0) {
      iterations_ = 0;
      return op_.scatter(rhs);
    }
    const Eigen::VectorXd x = cg_.solveWithGuess(rhs, x0);
    if (cg_.info() != Eigen::Success)
      throw std::runtime_error("conjugate gradients did not converge within " + std::to_string(cg_.maxIterations()) +
                               " iterations");
    iterations_ = static_cast<int>(cg_.iterations());
    return op_.scatter(x);
  }

 private:
  const DiscreteOperator& op_;
  double dt_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> B_;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double, Eigen::RowMajor>, Eigen::Lower | Eigen::Upper> cg_;
  int iterations_ = 0;
};

struct SpdeConfig {
  std::string domain = "lshape";
  int J = 7;
  std::string wavelet = "spline-2.2";  ///< basis used to synthesize the noise
  double T = 0.1;
  int steps = 64;
  Diffusion diffusion;
  std::optional<NoiseModel> noise = NoiseModel{};
  double noise_scale = 1.0;
  std::string initial = "zero";  ///< "zero" or a test function name
  std::vector<int> snapshots;    ///< step indices; empty means the final step only
  std::uint64_t seed = 0;
  bool diagnostics = true;       ///< compute the weighted second-derivative functional per snapshot

  double dt() const { return T / steps; }

  void validate() const {
    if (!(T > 0)) throw std::invalid_argument("T must be positive");
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    diffusion.validate();
    if (noise) {
      noise->validate();
      if (noise->truncation(J) > J) throw std::invalid_argument("noise truncation level exceeds grid level");
      if (noise->j0 >= noise->truncation(J)) throw std::invalid_argument("noise j0 must be below the truncation level");
    }
    for (int s : snapshots)
      if (s < 0 || s > steps) throw std::invalid_argument("snapshot step out of range");
  }

  std::vector<int> schedule() const {
    if (snapshots.empty()) return {steps};
    std::vector<int> s = snapshots;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"domain", domain},
                        {"grid", {{"J", J}, {"wavelet", wavelet}}},
                        {"time", {{"T", T}, {"steps", steps}}},
                        {"diffusion", {{diffusion.a11, diffusion.a12}, {diffusion.a12, diffusion.a22}}},
                        {"initial", initial},
                        {"snapshots", schedule()},
                        {"seed", seed},
                        {"diagnostics", diagnostics}};
    if (noise) {
      j["noise"] = noise->to_json();
      j["noise"]["enabled"] = true;
      j["noise"]["scale"] = noise_scale;
    } else {
      j["noise"] = {{"enabled", false}};
    }
    return j;
  }
};

inline SpdeConfig spde_config_from_json(const nlohmann::json& j) {
  SpdeConfig c;
  c.domain = j.value("domain", c.domain);
  if (j.contains("grid")) {
    c.J = j["grid"].value("J", c.J);
    c.wavelet = j["grid"].value("wavelet", c.wavelet);
  }
  if (j.contains("time")) {
    c.T = j["time"].value("T", c.T);
    c.steps = j["time"].value("steps", c.steps);
  }
  if (j.contains("diffusion")) {
    const auto& d = j["diffusion"];
    if (!d.is_array() || d.size() != 2 || d[0].size() != 2 || d[1].size() != 2)
      throw std::invalid_argument("diffusion must be a 2x2 array");
    if (d[0][1].get<double>() != d[1][0].get<double>()) throw std::invalid_argument("diffusion matrix must be symmetric");
    c.diffusion = {d[0][0].get<double>(), d[0][1].get<double>(), d[1][1].get<double>()};
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    if (n.value("enabled", true)) {
      c.noise = noise_model_from_json(n);
      c.noise_scale = n.value("scale", 1.0);
    } else {
      c.noise.reset();
    }
  }
  c.initial = j.value("initial", c.initial);
  if (j.contains("snapshots")) {
    const auto& s = j["snapshots"];
    if (s.is_object()) {
      const int every = s.at("every").get<int>();
      if (every < 1) throw std::invalid_argument("snapshots.every must be >= 1");
      c.snapshots.clear();
      for (int k = every; k <= c.steps; k += every) c.snapshots.push_back(k);
    } else {
      c.snapshots = s.get<std::vector<int>>();
    }
  }
  c.seed = j.value("seed", c.seed);
  c.diagnostics = j.value("diagnostics", c.diagnostics);
  c.validate();
  return c;
}

struct Snapshot {
  int step = 0;
  double time = 0.0;
  Field u;
  double l2 = 0.0;
  double diagnostic = 0.0;  ///< || rho^{2 - delta} |D^2 u| ||_{L_2}^2 with theta = d, p = 2
};

struct Trajectory {
  std::uint64_t path_seed = 0;
  std::vector<Snapshot> snapshots;
  std::vector<int> cg_iterations;  ///< per step
};

/// Initial datum sampled on the grid and zeroed off the mask.
inline Field initial_field(const SpdeConfig& cfg, const DiscreteOperator& op, const PolygonDomain& dom) {
  Field u = op.blank();
  if (cfg.initial == "zero") return u;
  const auto f = testfn::by_name(cfg.initial);
  u.sample(f);
  (void)dom;
  return u.restrict_to_mask();
}

/// Runs one path. Noise increments are synthesized with idwt2 at the grid
/// level, scaled, and masked before each step.
inline Trajectory run_path(const SpdeConfig& cfg, const PolygonDomain& dom, const DiscreteOperator& op,
                           const WeightedQuadrature* quad, std::uint64_t path_seed) {
  cfg.validate();
  const WaveletBasis basis = build_basis(cfg.wavelet, 1);
  Stepper stepper(op, cfg.dt());
  std::optional<NoiseRealization> noise;
  if (cfg.noise) noise.emplace(*cfg.noise, basis, cfg.noise->truncation(cfg.J), rng::hash(path_seed, cfg.noise->seed));

  Trajectory tr;
  tr.path_seed = path_seed;
  const auto schedule = cfg.schedule();
  std::size_t next = 0;
  auto record = [&](int step, const Field& u) {
    Snapshot s;
    s.step = step;
    s.time = step * cfg.dt();
    s.u = u;
    s.l2 = l2_norm(u);
    if (quad && cfg.diagnostics) s.diagnostic = std::pow(quad->diagnostic(u, 2, 2.0, 2.0), 2);
    tr.snapshots.push_back(std::move(s));
  };

  Field u = initial_field(cfg, op, dom);
  if (next < schedule.size() && schedule[next] == 0) {
    record(0, u);
    ++next;
  }
  Field dM = op.blank();
  for (int n = 1; n <= cfg.steps; ++n) {
    if (noise) {
      const auto inc = pad_to_level(noise->increment(static_cast<std::uint64_t>(n - 1), cfg.dt()), basis, cfg.J);
      dM = idwt2(inc, basis, op.grid().box);
      dM.mask = op.mask();
      for (std::size_t k = 0; k < dM.values.size(); ++k) dM.values[k] = dM.mask[k] ? cfg.noise_scale * dM.values[k] : 0.0;
    }
    u = stepper.step(u, dM);
    tr.cg_iterations.push_back(stepper.last_iterations());
    if (next < schedule.size() && schedule[next] == n) {
      record(n, u);
      ++next;
    }
  }
  return tr;
}

inline Trajectory run(const SpdeConfig& cfg, std::uint64_t path_seed) {
  const PolygonDomain dom = load_domain(cfg.domain);
  const DiscreteOperator op(dom, cfg.J, cfg.diffusion);
  std::optional<WeightedQuadrature> quad;
  if (cfg.diagnostics) quad.emplace(dom, cfg.J);
  return run_path(cfg, dom, op, quad ? &*quad : nullptr, path_seed);
}

}  // namespace besovlab
