#include <gtest/gtest.h>

#include "oracles.hpp"
#include "qswitch/error.hpp"
#include "qswitch/pipeline.hpp"
#include "qswitch/relaxation.hpp"

using namespace qswitch;

namespace {

ControlGrid random_grid(int T, int N, double t_f, Rng& rng) {
  ControlGrid g = ControlGrid::filled(T, N, t_f, 0.0);
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < N; ++j) g.values(k, j) = rng.uniform(0.05, 0.95);
  }
  return g;
}

double max_gradient_error(const ControlSystem& sys, const ObjectiveSpec& spec, const ControlGrid& grid,
                          double rho) {
  const RMatrix g = grape_gradient(sys, spec, grid, rho);
  double worst = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    for (int j = 0; j < grid.n_ctrl(); ++j) {
      const double fd = oracle::central_difference(
          [&](double e) {
            ControlGrid p = grid;
            p.values(k, j) += e;
            return evaluate_relaxation(sys, spec, p, rho, false).total();
          },
          1e-6);
      worst = std::max(worst, oracle::relative_error(g(k, j), fd, 1e-4));
    }
  }
  return worst;
}

std::vector<Problem> small_families() {
  return {build_energy(2, CouplingMatrix::all_ones(2), 2.0),
          build_energy(3, CouplingMatrix::random(3, 4), 2.0), build_cnot(5.0), build_not(2.0),
          build_circuit(1, 2, grid_edges(1, 2), random_unitary(4, 2), 10.0)};
}

}  // namespace

TEST(ControlGrid, FilledShapeAndValidation) {
  ControlGrid g = ControlGrid::filled(40, 2, 2.0, 0.5);
  EXPECT_EQ(g.n_steps(), 40);
  EXPECT_EQ(g.n_ctrl(), 2);
  EXPECT_NEAR(g.t_f(), 2.0, 1e-12 * 2.0);
  EXPECT_NO_THROW(g.validate());
  g.values(3, 1) = 1.5;
  EXPECT_THROW(g.validate(), Error);
  g.values(3, 1) = 0.5;
  g.binary = true;
  EXPECT_THROW(g.validate(), Error);
}

TEST(Simulate, ZeroControlsNoDriftStayAtInitial) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  const auto xs = simulate(p.system, ControlGrid::filled(5, 2, 2.0, 0.0));
  ASSERT_EQ(xs.size(), 5u);
  for (const CMatrix& x : xs) EXPECT_LE(max_abs(x - p.system.x_init), 1e-15);
}

TEST(Simulate, SingleStepIsOneExponential) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  ControlGrid g = ControlGrid::filled(1, 2, 0.05, 0.0);
  g.values(0, 0) = 1.0;
  EXPECT_LE(max_abs(final_state(p.system, g) - expm_skew(p.system.controllers[0], 0.05)), 1e-15);
}

TEST(Simulate, MatchesExplicitProductOnCnot) {
  Rng rng(3);
  const Problem p = build_cnot(5.0);
  const ControlGrid g = random_grid(3, 2, 5.0, rng);
  EXPECT_LE(max_abs(final_state(p.system, g) - oracle::explicit_product(p.system, g)), 1e-10);
}

TEST(Simulate, UnitarityOverLongHorizons) {
  Rng rng(4);
  const Problem p = build_cnot(20.0);
  const auto xs = simulate(p.system, random_grid(400, 2, 20.0, rng));
  for (const CMatrix& x : xs) ASSERT_LE(unitarity_error(x), 1e-9);
}

TEST(Penalty, ValueAndGradient) {
  ControlGrid g = ControlGrid::filled(3, 2, 1.0, 0.0);
  g.values << 0.2, 0.3, 1.0, 1.0, 0.5, 0.5;
  EXPECT_NEAR(sos1_penalty(g, 2.0), 2.0 * (0.25 + 1.0 + 0.0), 1e-15);

  // Controllers that are all zero leave only the penalty gradient.
  Problem p = build_cnot(1.0);
  p.system.controllers = {CMatrix::Zero(4, 4), CMatrix::Zero(4, 4)};
  p.system.drift = CMatrix::Zero(4, 4);
  const RMatrix grad = grape_gradient(p.system, p.objective, g, 2.0);
  for (int k = 0; k < 3; ++k) {
    const double excess = g.values.row(k).sum() - 1.0;
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(grad(k, j), 2.0 * 2.0 * excess, 1e-15);
  }
}

TEST(Penalty, VanishesOnSos1FeasibleGrid) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  Rng rng(5);
  ControlGrid g = random_grid(4, 2, 2.0, rng);
  g.values.col(1) = (1.0 - g.values.col(0).array()).matrix();
  EXPECT_EQ(sos1_penalty(g, 3.0), 0.0);
  const RMatrix with = grape_gradient(p.system, p.objective, g, 3.0);
  const RMatrix without = grape_gradient(p.system, p.objective, g, 0.0);
  EXPECT_LE((with - without).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(GrapeGradient, Energy2TwoStepsMatchesFiniteDifferences) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  Rng rng(6);
  EXPECT_LE(max_gradient_error(p.system, p.objective, random_grid(2, 2, 2.0, rng), 0.0), 1e-5);
}

TEST(GrapeGradient, AllFamiliesMatchFiniteDifferences) {
  Rng rng(7);
  for (const Problem& p : small_families()) {
    for (int trial = 0; trial < 5; ++trial) {
      const int T = 2 + static_cast<int>(rng.next() % 9);
      const double rho = trial % 2 == 0 ? 0.0 : 0.7;
      const ControlGrid g = random_grid(T, p.system.n_ctrl(), p.system.t_f, rng);
      EXPECT_LE(max_gradient_error(p.system, p.objective, g, rho), 1e-5) << p.name << " trial " << trial;
    }
  }
}

TEST(SolveRelaxation, UniformInitHasZeroPenaltyOnSos1) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  RelaxConfig cfg;
  cfg.n_steps = 40;
  cfg.rho = 5.0;
  cfg.max_iters = 1;
  const RelaxResult r = solve_relaxation(p.system, p.objective, cfg);
  EXPECT_EQ(r.trace.front().penalty, 0.0);
}

TEST(SolveRelaxation, Energy2ReachesNearZero) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  RelaxConfig cfg;
  cfg.n_steps = 40;
  const RelaxResult r = solve_relaxation(p.system, p.objective, cfg);
  EXPECT_LE(r.objective, 0.01);
  EXPECT_NO_THROW(r.grid.validate());
  EXPECT_TRUE(r.status == RelaxStatus::Converged || r.stationarity <= cfg.grad_tol);
}

TEST(SolveRelaxation, Not2BelowBinaryReference) {
  const Problem p = build_not(2.0);
  RelaxConfig cfg;
  cfg.n_steps = 20;
  const RelaxResult r = solve_relaxation(p.system, p.objective, cfg);
  EXPECT_LE(r.objective, 0.1632 + 1e-3);
}

TEST(SolveRelaxation, MonotoneDescentAndBoxFeasible) {
  const Problem p = build_cnot(5.0);
  RelaxConfig cfg;
  cfg.n_steps = 50;
  cfg.max_iters = 60;
  const RelaxResult r = solve_relaxation(p.system, p.objective, cfg);
  for (std::size_t i = 1; i < r.trace.size(); ++i) {
    EXPECT_LE(r.trace[i].objective + r.trace[i].penalty,
              r.trace[i - 1].objective + r.trace[i - 1].penalty);
  }
  EXPECT_GE(r.grid.values.minCoeff(), 0.0);
  EXPECT_LE(r.grid.values.maxCoeff(), 1.0);
}

TEST(SolveRelaxation, ProjectedGradientOnlyAlsoDescends) {
  const Problem p = build_not(2.0);
  RelaxConfig cfg;
  cfg.n_steps = 20;
  cfg.lbfgs_memory = 0;
  cfg.max_iters = 50;
  const RelaxResult r = solve_relaxation(p.system, p.objective, cfg);
  EXPECT_LT(r.objective, r.trace.front().objective);
}

TEST(SolveRelaxation, BitIdenticalForFixedSeed) {
  const Problem p = build_cnot(5.0);
  RelaxConfig cfg;
  cfg.n_steps = 30;
  cfg.init = RelaxInit::Random;
  cfg.seed = 11;
  cfg.max_iters = 40;
  const RelaxResult a = solve_relaxation(p.system, p.objective, cfg);
  const RelaxResult b = solve_relaxation(p.system, p.objective, cfg);
  EXPECT_EQ(a.grid.values, b.grid.values);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(SolveRelaxation, RejectsBadConfig) {
  const Problem p = build_cnot(5.0);
  RelaxConfig cfg;
  cfg.n_steps = 0;
  EXPECT_THROW(solve_relaxation(p.system, p.objective, cfg), Error);
  cfg.n_steps = 10;
  cfg.grad_tol = 0.0;
  EXPECT_THROW(solve_relaxation(p.system, p.objective, cfg), Error);
}

TEST(BoxStationarity, ZeroAtBoundOptimum) {
  RMatrix u(1, 2), g(1, 2);
  u << 0.0, 1.0;
  g << 3.0, -2.0;
  EXPECT_EQ(box_stationarity(u, g), 0.0);
  g << -0.25, 0.0;
  EXPECT_DOUBLE_EQ(box_stationarity(u, g), 0.25);
}
