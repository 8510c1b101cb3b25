#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "qswitch/error.hpp"
#include "qswitch/pipeline.hpp"
#include "qswitch/problems.hpp"

using namespace qswitch;

namespace {

CMatrix perturbation(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  CMatrix d(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) d(i, j) = Complex(rng.normal(), rng.normal());
  }
  return d;
}

// dF along d by central differences vs 2 Re tr(G^dagger d).
void expect_adjoint_matches(const ObjectiveSpec& spec, const CMatrix& x, Rng& rng) {
  const CMatrix g = objective_adjoint(spec, x);
  for (int trial = 0; trial < 5; ++trial) {
    const CMatrix d = perturbation(x.rows(), x.cols(), rng);
    const double eps = 1e-6;
    const double fd = (objective(spec, x + eps * d) - objective(spec, x - eps * d)) / (2 * eps);
    const double exact = 2.0 * (g.adjoint() * d).trace().real();
    EXPECT_LE(oracle::relative_error(fd, exact, 1e-6), 1e-6) << fd << " vs " << exact;
  }
}

}  // namespace

TEST(Pauli, AnticommuteAndSquareToIdentity) {
  const CMatrix p[3] = {pauli_x(), pauli_y(), pauli_z()};
  for (int a = 0; a < 3; ++a) {
    EXPECT_LE(max_abs(p[a] * p[a] - CMatrix::Identity(2, 2)), 0.0);
    for (int b = 0; b < 3; ++b) {
      if (a != b) EXPECT_LE(max_abs(p[a] * p[b] + p[b] * p[a]), 0.0);
    }
  }
}

TEST(Pauli, QubitPlacementMatchesExplicitKronecker) {
  const CMatrix id = CMatrix::Identity(2, 2);
  for (int q = 1; q <= 3; ++q) {
    for (int i = 1; i <= q; ++i) {
      CMatrix expected = CMatrix::Identity(1, 1);
      for (int k = 1; k <= q; ++k) expected = kron(expected, k == i ? pauli_x() : id);
      EXPECT_EQ(on_qubit(pauli_x(), i, q), expected);
    }
  }
  EXPECT_THROW(on_qubit(pauli_x(), 0, 2), Error);
}

TEST(Energy, TwoQubitSetup) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  const CMatrix h1 = -(kron(pauli_x(), CMatrix::Identity(2, 2)) + kron(CMatrix::Identity(2, 2), pauli_x()));
  EXPECT_LE(max_abs(p.system.controllers[0] - h1), 0.0);
  EXPECT_LE(max_abs(p.system.drift), 0.0);
  EXPECT_EQ(p.system.feasible, FeasibleKind::Sos1);
  const auto& e = std::get<EnergyRatio>(p.objective);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(std::abs(e.psi0(i)), 0.5, 1e-12);
  EXPECT_NEAR(e.psi0.norm(), 1.0, 1e-12);
  // Ordered pairs i != j both contribute: H2 = 2 sigma_z sigma_z.
  EXPECT_NEAR(e.e_min, -2.0, 1e-12);
  EXPECT_NEAR(e.e_first_excited, 2.0, 1e-12);
  EXPECT_TRUE(p.warnings.empty());
}

TEST(Energy, ZeroCouplingRejected) {
  CouplingMatrix j;
  j.j = RMatrix::Zero(1, 1);
  try {
    build_energy(1, j, 1.0);
    FAIL() << "expected InvalidProblem";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidProblem);
  }
}

TEST(Energy, MinimumMatchesDiagonalScan) {
  const CouplingMatrix j = CouplingMatrix::random(4, 17);
  const Problem p = build_energy(4, j, 2.0);
  const auto& e = std::get<EnergyRatio>(p.objective);
  double lo = INFINITY;
  for (int i = 0; i < 16; ++i) {
    EXPECT_NEAR(e.h_tilde(i, i).imag(), 0.0, 0.0);
    lo = std::min(lo, e.h_tilde(i, i).real());
  }
  EXPECT_LE(max_abs(e.h_tilde - CMatrix(e.h_tilde.diagonal().asDiagonal())), 0.0);
  EXPECT_NEAR(e.e_min, lo, 1e-9);
}

TEST(Energy, ObjectiveAtGroundStateIsZero) {
  const Problem p = build_energy(2, CouplingMatrix::all_ones(2), 2.0);
  EnergyRatio e = std::get<EnergyRatio>(p.objective);
  const HermitianEig eig = hermitian_eig(e.h_tilde);
  e.psi0 = eig.basis.col(0);
  EXPECT_NEAR(objective(e, CMatrix::Identity(4, 4)), 0.0, 1e-12);
}

TEST(Energy, AdjointMatchesFiniteDifferences) {
  Rng rng(5);
  const Problem p = build_energy(3, CouplingMatrix::random(3, 2), 2.0);
  expect_adjoint_matches(p.objective, CMatrix::Identity(8, 8), rng);
  expect_adjoint_matches(p.objective, oracle::gram_schmidt_unitary(8, rng), rng);
}

TEST(Coupling, RandomIsSymmetricZeroDiagonalBounded) {
  const CouplingMatrix j = CouplingMatrix::random(6, 99);
  EXPECT_NO_THROW(j.validate());
  for (int a = 0; a < 6; ++a) {
    EXPECT_EQ(j.j(a, a), 0.0);
    for (int b = 0; b < 6; ++b) {
      EXPECT_EQ(j.j(a, b), j.j(b, a));
      EXPECT_LE(std::abs(j.j(a, b)), 1.0);
    }
  }
  EXPECT_EQ(CouplingMatrix::random(6, 99).j, j.j);
  EXPECT_NE(CouplingMatrix::random(6, 100).j, j.j);
}

TEST(Cnot, Setup) {
  const Problem p = build_cnot(5.0);
  const auto& f = std::get<Infidelity>(p.objective);
  CMatrix cnot = CMatrix::Zero(4, 4);
  cnot(0, 0) = cnot(1, 1) = cnot(2, 3) = cnot(3, 2) = 1.0;
  EXPECT_EQ(f.x_targ, cnot);
  EXPECT_EQ(p.system.feasible, FeasibleKind::FreeBinary);
  EXPECT_NEAR(p.system.drift.trace().real(), 0.0, 1e-15);
  EXPECT_LE(hermiticity_error(p.system.drift), 0.0);
  const HermitianEig e = hermitian_eig(p.system.drift);
  EXPECT_NEAR(e.eigenvalues(0), -3.0, 1e-12);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(e.eigenvalues(i), 1.0, 1e-12);
  EXPECT_NEAR(objective(p.objective, CMatrix::Identity(4, 4)), 0.5, 1e-15);
  EXPECT_NEAR(objective(p.objective, cnot), 0.0, 1e-15);
}

TEST(Not, ResonantModelSetup) {
  const Problem p = build_not(2.0);
  const auto& f = std::get<Infidelity>(p.objective);
  EXPECT_EQ(p.system.dim, 3);
  EXPECT_EQ(p.system.feasible, FeasibleKind::FreeBinary);
  EXPECT_EQ(f.normalization, 2.0);
  EXPECT_EQ(f.x_targ(0, 1), Complex(1.0));
  EXPECT_EQ(f.x_targ(1, 0), Complex(1.0));
  EXPECT_EQ(f.x_targ(2, 2), Complex(0.0));
  EXPECT_NEAR(objective(p.objective, CMatrix::Identity(3, 3)), 1.0, 0.0);
  // Level 0 couples to level 1, so the drive can reach the target.
  EXPECT_NE(p.system.controllers[0](0, 1), Complex(0.0));
}

TEST(Not, AsPrintedModelLeavesLevelZeroDecoupled) {
  const Problem p = build_not(2.0, NotModel::AsPrinted);
  const CMatrix& h1 = p.system.controllers[0];
  EXPECT_EQ(h1(0, 1), Complex(0.0));
  EXPECT_EQ(h1(0, 2), Complex(0.0));
  EXPECT_NEAR(std::abs(h1(1, 2)), 2.0 * std::numbers::pi, 1e-15);
}

TEST(Circuit, ControllerCountsFollowGrid) {
  Rng rng(1);
  EXPECT_EQ(build_circuit(1, 2, grid_edges(1, 2), oracle::gram_schmidt_unitary(4, rng), 10.0).system.n_ctrl(), 5);
  EXPECT_EQ(build_circuit(2, 2, grid_edges(2, 2), oracle::gram_schmidt_unitary(16, rng), 20.0).system.n_ctrl(), 12);
  EXPECT_EQ(grid_edges(2, 3).size(), 7u);
}

TEST(Circuit, ControllersHermitianTargetUnitary) {
  const CMatrix u = random_unitary(16, 3);
  EXPECT_LE(unitarity_error(u), 1e-8);
  const Problem p = build_circuit(2, 2, grid_edges(2, 2), u, 20.0);
  EXPECT_EQ(p.system.feasible, FeasibleKind::Sos1);
  for (const CMatrix& h : p.system.controllers) EXPECT_LE(hermiticity_error(h), 1e-10);
  EXPECT_NEAR(max_abs(p.system.controllers[0]), kChargeCoupling, 1e-15);
  EXPECT_NEAR(max_abs(p.system.controllers[1]), kFluxCoupling, 1e-15);
  EXPECT_NEAR(max_abs(p.system.controllers.back()), kEdgeCoupling, 1e-15);
}

TEST(Circuit, RejectsBadInputs) {
  const CMatrix u = random_unitary(4, 3);
  CMatrix bad = u;
  bad(0, 0) += 0.1;
  try {
    build_circuit(1, 2, grid_edges(1, 2), bad, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TargetNotUnitary);
  }
  for (const std::vector<Edge>& edges : {std::vector<Edge>{{0, 0}}, std::vector<Edge>{{0, 1}, {1, 0}},
                                         std::vector<Edge>{{0, 5}}}) {
    try {
      build_circuit(1, 2, edges, u, 1.0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadEdge);
    }
  }
}

TEST(Infidelity, AdjointMatchesFiniteDifferences) {
  Rng rng(8);
  const Problem p = build_cnot(5.0);
  expect_adjoint_matches(p.objective, oracle::gram_schmidt_unitary(4, rng), rng);
  const Problem n = build_not(2.0);
  expect_adjoint_matches(n.objective, oracle::gram_schmidt_unitary(3, rng), rng);
}

TEST(Infidelity, ZeroOverlapAdjointThrows) {
  const Problem p = build_not(2.0);
  try {
    objective_adjoint(p.objective, CMatrix::Identity(3, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroTraceOverlap);
  }
}

TEST(Objectives, BoundsOnUnitaryInputs) {
  Rng rng(13);
  const Problem e = build_energy(3, CouplingMatrix::random(3, 4), 1.0);
  const Problem c = build_cnot(1.0);
  const auto& er = std::get<EnergyRatio>(e.objective);
  const double lmax = hermitian_eig(er.h_tilde).eigenvalues.maxCoeff();
  for (int trial = 0; trial < 50; ++trial) {
    const CMatrix x = oracle::gram_schmidt_unitary(8, rng);
    const CVector psi = x * er.psi0;
    const double energy = (psi.adjoint() * er.h_tilde * psi)(0, 0).real();
    EXPECT_GE(energy, er.e_min - 1e-9);
    EXPECT_LE(energy, lmax + 1e-9);
    EXPECT_GE(objective(e.objective, x), -1e-9);
    const double fc = objective(c.objective, oracle::gram_schmidt_unitary(4, rng));
    EXPECT_GE(fc, -1e-9);
    EXPECT_LE(fc, 1.0 + 1e-9);
  }
}

TEST(Objectives, DimensionMismatch) {
  const Problem p = build_cnot(1.0);
  EXPECT_THROW(objective(p.objective, CMatrix::Identity(3, 3)), Error);
}

TEST(Registry, TableParametersLoadAsListed) {
  struct Row {
    const char* name;
    int q, n;
    double t_f;
    int t;
    double rho, alpha, beta;
  };
  const Row rows[] = {
      {"Energy2", 2, 2, 2, 40, 0, 0.1, 0.075},      {"Energy4", 4, 2, 2, 40, 0, 0.15, 0.015},
      {"Energy6", 6, 2, 5, 100, 0, 0.015, 0.01},    {"CNOT5", 2, 2, 5, 100, 0, 0.02, 0.02},
      {"CNOT10", 2, 2, 10, 200, 0, 0.003, 0.008},   {"CNOT20", 2, 2, 20, 400, 0, 0.01, 0.015},
      {"NOT2", 1, 2, 2, 20, 0, 0.01, 0.03},         {"NOT6", 1, 2, 6, 60, 0, 0.0015, 0.015},
      {"NOT10", 1, 2, 10, 100, 0, 0.009, 0.035},    {"CircuitH2", 2, 5, 10, 100, 1.0, 0.045, 0.01},
      {"CircuitLiH", 4, 12, 20, 200, 0.1, 0.03, 0.06}, {"CircuitBeH2", 6, 19, 20, 200, 0.01, 0.03, 0.2},
  };
  ASSERT_EQ(instance_registry().size(), 12u);
  for (const Row& r : rows) {
    const InstanceSpec& s = find_instance(r.name);
    EXPECT_EQ(s.qubits, r.q) << r.name;
    EXPECT_EQ(s.n_ctrl, r.n) << r.name;
    EXPECT_EQ(s.t_f, r.t_f) << r.name;
    EXPECT_EQ(s.n_steps, r.t) << r.name;
    EXPECT_EQ(s.rho, r.rho) << r.name;
    EXPECT_EQ(s.alpha, r.alpha) << r.name;
    EXPECT_EQ(s.beta, r.beta) << r.name;
  }
  EXPECT_THROW(find_instance("Energy3"), Error);
}

TEST(Registry, BuiltControllerCountsMatchTable) {
  for (const InstanceSpec& s : instance_registry()) {
    InstanceOptions opts;
    if (s.family == "circuit") opts.target = random_unitary(Eigen::Index{1} << s.qubits, 1);
    const Problem p = build_instance(s, opts);
    EXPECT_EQ(p.system.n_ctrl(), s.n_ctrl) << s.name;
    EXPECT_EQ(p.system.t_f, s.t_f) << s.name;
  }
}
