#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "qswitch/error.hpp"
#include "qswitch/pipeline.hpp"
#include "qswitch/rounding.hpp"
#include "qswitch/sto.hpp"

using namespace qswitch;

namespace {

ControlGrid random_grid(int T, int N, double t_f, Rng& rng) {
  ControlGrid g = ControlGrid::filled(T, N, t_f, 0.0);
  for (int k = 0; k < T; ++k) {
    for (int j = 0; j < N; ++j) g.values(k, j) = rng.uniform();
  }
  return g;
}

ControlGrid binary_from_rows(const std::vector<std::vector<double>>& rows, double dt) {
  ControlGrid g;
  g.dt = dt;
  g.binary = true;
  g.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t j = 0; j < rows[k].size(); ++j) {
      g.values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = rows[k][j];
    }
  }
  return g;
}

std::vector<Problem> small_families() {
  return {build_energy(2, CouplingMatrix::all_ones(2), 2.0),
          build_energy(3, CouplingMatrix::random(3, 9), 2.0), build_cnot(5.0), build_not(2.0),
          build_circuit(1, 2, grid_edges(1, 2), random_unitary(4, 5), 10.0)};
}

double max_abs_deviation(const RMatrix& p) { return p.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(FeasibleSet, Sos1OneHotInLexicographicOrder) {
  const FeasibleSet fs(FeasibleKind::Sos1, 3);
  ASSERT_EQ(fs.size(), 3u);
  // (0,0,1) < (0,1,0) < (1,0,0)
  EXPECT_EQ(fs.candidates()[0], RVector::Unit(3, 2));
  EXPECT_EQ(fs.candidates()[1], RVector::Unit(3, 1));
  EXPECT_EQ(fs.candidates()[2], RVector::Unit(3, 0));
  EXPECT_EQ(fs.index_of(RVector::Unit(3, 1)), 1u);
  EXPECT_EQ(fs.index_of(RVector::Zero(3)), fs.size());
}

TEST(FeasibleSet, FreeBinaryEnumeratesAllVectors) {
  const FeasibleSet fs(FeasibleKind::FreeBinary, 3);
  ASSERT_EQ(fs.size(), 8u);
  EXPECT_EQ(fs.candidates().front(), RVector::Zero(3));
  EXPECT_EQ(fs.candidates().back(), RVector::Ones(3));
  for (std::size_t i = 1; i < fs.size(); ++i) {
    const auto& a = fs.candidates()[i - 1];
    const auto& b = fs.candidates()[i];
    EXPECT_TRUE(std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3));
  }
}

TEST(FeasibleSet, CapRaisesUnsupported) {
  try {
    FeasibleSet fs(FeasibleKind::FreeBinary, 17);
    FAIL() << "expected UnsupportedFeasibleSet";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedFeasibleSet);
  }
  EXPECT_THROW(FeasibleSet(FeasibleKind::FreeBinary, 5, 16), Error);
  EXPECT_NO_THROW(FeasibleSet(FeasibleKind::FreeBinary, 4, 16));
}

TEST(TvNorm, SimpleCases) {
  EXPECT_EQ(tv_norm(ControlGrid::filled(10, 3, 1.0, 0.4)), 0.0);
  const ControlGrid one_change = binary_from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}}, 0.5);
  EXPECT_EQ(tv_norm(one_change), 2.0);
  const ControlGrid single = binary_from_rows({{1, 0}}, 0.5);
  EXPECT_EQ(tv_norm(single), 0.0);
}

TEST(MuPropagators, EndpointsAndUnitarity) {
  Rng rng(21);
  const Problem p = build_cnot(5.0);
  const ControlGrid g = random_grid(12, 2, 5.0, rng);
  const auto mu = mu_propagators(p.system, g);
  ASSERT_EQ(mu.size(), 13u);
  EXPECT_LE(max_abs(mu.back() - CMatrix::Identity(4, 4)), 0.0);
  EXPECT_LE(max_abs(mu.front() * p.system.x_init - final_state(p.system, g)), 1e-12);
  for (const CMatrix& m : mu) EXPECT_LE(unitarity_error(m), 1e-12);
}

TEST(MuPropagators, SplicedObjectiveMatchesFullSimulation) {
  Rng rng(22);
  for (const Problem& p : small_families()) {
    const FeasibleSet fs = FeasibleSet::for_system(p.system);
    const int T = 8;
    const ControlGrid u_con = random_grid(T, p.system.n_ctrl(), p.system.t_f, rng);
    const auto mu = mu_propagators(p.system, u_con);
    for (int probe = 0; probe < 10; ++probe) {
      const int k = static_cast<int>(rng.next() % T);
      ControlGrid spliced = u_con;
      for (int l = 0; l < k; ++l) {
        spliced.values.row(l) = fs.candidates()[rng.next() % fs.size()].transpose();
      }
      const RVector& cand = fs.candidates()[rng.next() % fs.size()];
      spliced.values.row(k) = cand.transpose();
      ControlGrid prefix = spliced;
      prefix.values = spliced.values.topRows(k);
      const CMatrix x_prev = k == 0 ? p.system.x_init : final_state(p.system, prefix);
      const double fast = spliced_objective(p.objective, mu[static_cast<std::size_t>(k) + 1],
                                            expm_skew(p.system.hamiltonian(cand), u_con.dt), x_prev);
      const double full = objective(p.objective, oracle::explicit_product(p.system, spliced));
      EXPECT_NEAR(fast, full, 1e-10) << p.name << " k=" << k;
    }
  }
}

TEST(RoundObj, AlphaZeroMatchesResimulationGreedy) {
  Rng rng(23);
  for (const Problem& p : small_families()) {
    const FeasibleSet fs = FeasibleSet::for_system(p.system);
    for (int trial = 0; trial < 3; ++trial) {
      const int T = 4 + static_cast<int>(rng.next() % 17);
      const ControlGrid u_con = random_grid(T, p.system.n_ctrl(), p.system.t_f, rng);
      const ControlGrid fast = round_obj(p.system, p.objective, u_con, 0.0, fs);
      const ControlGrid slow = oracle::greedy_resimulation(p.system, p.objective, u_con, 0.0, fs.candidates());
      EXPECT_EQ(fast.values, slow.values) << p.name << " T=" << T;
      EXPECT_TRUE(fast.binary);
    }
  }
}

TEST(RoundObj, DeltaRuleMatchesResimulationGreedy) {
  Rng rng(24);
  const Problem p = build_not(2.0);
  const FeasibleSet fs = FeasibleSet::for_system(p.system);
  const ControlGrid u_con = random_grid(15, 2, 2.0, rng);
  const ControlGrid fast = round_obj(p.system, p.objective, u_con, 0.01, fs, ObjRule::Delta);
  const ControlGrid slow =
      oracle::greedy_resimulation(p.system, p.objective, u_con, 0.01, fs.candidates(), false);
  EXPECT_EQ(fast.values, slow.values);
}

TEST(RoundObj, SingleStepIsExhaustiveBest) {
  Rng rng(25);
  for (const Problem& p : small_families()) {
    const FeasibleSet fs = FeasibleSet::for_system(p.system);
    const ControlGrid u_con = random_grid(1, p.system.n_ctrl(), p.system.t_f, rng);
    const ControlGrid out = round_obj(p.system, p.objective, u_con, 0.0, fs);
    double best = 1e300;
    for (const RVector& c : fs.candidates()) {
      ControlGrid g = u_con;
      g.values.row(0) = c.transpose();
      best = std::min(best, objective(p.objective, final_state(p.system, g)));
    }
    EXPECT_NEAR(objective(p.objective, final_state(p.system, out)), best, 1e-12) << p.name;
  }
}

TEST(RoundObj, HugeAlphaNeverSwitches) {
  Rng rng(26);
  for (const Problem& p : small_families()) {
    const FeasibleSet fs = FeasibleSet::for_system(p.system);
    const ControlGrid u_con = random_grid(20, p.system.n_ctrl(), p.system.t_f, rng);
    EXPECT_EQ(tv_norm(round_obj(p.system, p.objective, u_con, 1e6, fs)), 0.0) << p.name;
  }
}

TEST(RoundObj, OperationCountsStayLinear) {
  Rng rng(27);
  const Problem p = build_energy(3, CouplingMatrix::random(3, 2), 2.0);
  const FeasibleSet fs = FeasibleSet::for_system(p.system);
  const int T = 100;
  const auto n_cand = static_cast<std::uint64_t>(fs.size());
  const ControlGrid u_con = random_grid(T, p.system.n_ctrl(), p.system.t_f, rng);
  OpCounts fast;
  {
    OpCountScope scope;
    (void)round_obj(p.system, p.objective, u_con, 0.0, fs);
    fast = scope.delta();
  }
  EXPECT_LE(fast.exponentials, 2 * (n_cand + T));
  EXPECT_LE(fast.multiplications, 4 * n_cand * T);
}

TEST(RoundCdiff, ConstantExampleMatchesSumUpOracle) {
  ControlGrid u = ControlGrid::filled(5, 2, 5.0, 0.0);
  u.values.col(0).setConstant(0.6);
  u.values.col(1).setConstant(0.4);
  const ControlGrid out = round_cdiff(u, 0.0, FeasibleSet(FeasibleKind::Sos1, 2));
  const ControlGrid expected = binary_from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}, {1, 0}}, 1.0);
  EXPECT_EQ(out.values, expected.values);
  EXPECT_EQ(out.values, oracle::sum_up_rounding(u, FeasibleKind::Sos1).values);
}

TEST(RoundCdiff, BetaZeroIsSumUpRounding) {
  Rng rng(28);
  for (int trial = 0; trial < 100; ++trial) {
    const FeasibleKind kind = trial % 2 == 0 ? FeasibleKind::Sos1 : FeasibleKind::FreeBinary;
    const int N = 2 + static_cast<int>(rng.next() % 3);
    const int T = 5 + static_cast<int>(rng.next() % 96);
    const double t_f = rng.uniform(0.5, 10.0);
    ControlGrid u = random_grid(T, N, t_f, rng);
    if (kind == FeasibleKind::Sos1) {
      for (int k = 0; k < T; ++k) u.values.row(k) /= u.values.row(k).sum();
    }
    const ControlGrid out = round_cdiff(u, 0.0, FeasibleSet(kind, N));
    ASSERT_EQ(out.values, oracle::sum_up_rounding(u, kind).values) << "trial " << trial;
    EXPECT_LE(max_abs_deviation(cumulative_deviation(u, out)), N * u.dt * (1.0 + 1e-12));
  }
}

TEST(RoundCdiff, LargeBetaAllowsAtMostOneSwitch) {
  Rng rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    ControlGrid u = random_grid(40, 2, 2.0, rng);
    const ControlGrid out = round_cdiff(u, 2.0, FeasibleSet(FeasibleKind::Sos1, 2));
    EXPECT_LE(tv_norm(out), 2.0);
  }
}

TEST(RoundCdiff, HalvingDtHalvesDeviation) {
  // A smooth control sampled on nested grids.
  auto sampled = [](int T) {
    ControlGrid u = ControlGrid::filled(T, 2, 4.0, 0.0);
    for (int k = 0; k < T; ++k) {
      const double t = (k + 0.5) * u.dt;
      u.values(k, 0) = 0.5 + 0.45 * std::sin(1.3 * t);
      u.values(k, 1) = 1.0 - u.values(k, 0);
    }
    return u;
  };
  const FeasibleSet fs(FeasibleKind::Sos1, 2);
  const ControlGrid coarse = sampled(200);
  const ControlGrid fine = sampled(400);
  const double d_coarse = max_abs_deviation(cumulative_deviation(coarse, round_cdiff(coarse, 0.0, fs)));
  const double d_fine = max_abs_deviation(cumulative_deviation(fine, round_cdiff(fine, 0.0, fs)));
  EXPECT_NEAR(d_fine / d_coarse, 0.5, 0.05);
}

TEST(RoundCdiff, RejectsNegativeBetaAndShapeMismatch) {
  const ControlGrid u = ControlGrid::filled(3, 2, 1.0, 0.5);
  EXPECT_THROW(round_cdiff(u, -1.0, FeasibleSet(FeasibleKind::Sos1, 2)), Error);
  EXPECT_THROW(round_cdiff(u, 0.0, FeasibleSet(FeasibleKind::Sos1, 3)), Error);
}

TEST(CumulativeDeviation, ExactOnDyadicGrid) {
  ControlGrid u = ControlGrid::filled(4, 2, 1.0, 0.0);
  u.values << 0.5, 0.5, 0.25, 0.75, 1.0, 0.0, 0.0, 1.0;
  const ControlGrid b = binary_from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}}, 0.25);
  RMatrix expected(4, 2);
  expected << 0.125, 0.125, -0.0625, 0.3125, 0.1875, 0.0625, -0.0625, 0.3125;
  EXPECT_EQ(cumulative_deviation(u, b), expected);
}

TEST(ExtractSequence, RunsAndDurations) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  const ControlGrid constant = binary_from_rows({{1, 0}, {1, 0}, {1, 0}, {1, 0}}, 0.5);
  const ControllerSequence s1 = extract_sequence(p.system, constant);
  ASSERT_EQ(s1.size(), 1);
  EXPECT_NEAR(s1.durations[0], 2.0, 1e-15);

  const ControlGrid alternating = binary_from_rows({{1, 0}, {0, 1}, {1, 0}, {0, 1}}, 0.5);
  const ControllerSequence s4 = extract_sequence(p.system, alternating);
  ASSERT_EQ(s4.size(), 4);
  for (double tau : s4.durations) EXPECT_EQ(tau, 0.5);
  EXPECT_LE(max_abs(s4.hams[1] - p.system.controllers[1]), 0.0);
  EXPECT_EQ(sequence_tv(s4.control_vectors), tv_norm(alternating));
  EXPECT_NO_THROW(s4.validate());
}

TEST(ExtractSequence, SwitchCountAndFinalOperatorIdentity) {
  Rng rng(30);
  for (const Problem& p : small_families()) {
    const FeasibleSet fs = FeasibleSet::for_system(p.system);
    ControlGrid g = ControlGrid::filled(30, p.system.n_ctrl(), p.system.t_f, 0.0);
    g.binary = true;
    for (int k = 0; k < 30; ++k) {
      // Sticky random walk so runs have varied lengths.
      const std::size_t c = (k > 0 && rng.uniform() < 0.6) ? fs.index_of(g.step(k - 1))
                                                            : rng.next() % fs.size();
      g.values.row(k) = fs.candidates()[c].transpose();
    }
    int changes = 0;
    for (int k = 1; k < 30; ++k) changes += g.step(k) != g.step(k - 1) ? 1 : 0;
    const ControllerSequence seq = extract_sequence(p.system, g);
    EXPECT_EQ(seq.size() - 1, changes);
    EigCache cache;
    EXPECT_LE(max_abs(final_operator(seq, initial_schedule(seq), cache) - final_state(p.system, g)), 1e-9)
        << p.name;
  }
}
