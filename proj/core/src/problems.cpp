#include "qswitch/problems.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "qswitch/error.hpp"
#include "qswitch/rng.hpp"

namespace qswitch {

namespace {

constexpr Complex kI{0.0, 1.0};

CMatrix basis_op(Eigen::Index dim, Eigen::Index row, Eigen::Index col) {
  CMatrix m = CMatrix::Zero(dim, dim);
  m(row, col) = 1.0;
  return m;
}

// Lowest eigenvalue strictly above the minimum, with a relative gap guard.
double first_excited(const RVector& sorted) {
  const double lo = sorted(0);
  const double gap = 1e-9 * (1.0 + std::abs(lo));
  for (Eigen::Index k = 1; k < sorted.size(); ++k) {
    if (sorted(k) > lo + gap) return sorted(k);
  }
  return lo;
}

}  // namespace

std::string to_string(FeasibleKind kind) {
  return kind == FeasibleKind::Sos1 ? "sos1" : "free_binary";
}

FeasibleKind feasible_kind_from_string(const std::string& name) {
  if (name == "sos1") return FeasibleKind::Sos1;
  if (name == "free_binary") return FeasibleKind::FreeBinary;
  throw Error(ErrorCode::InvalidArgument, "unknown feasible set '" + name + "'");
}

CMatrix ControlSystem::hamiltonian(const RVector& u) const {
  if (u.size() != n_ctrl()) {
    std::ostringstream msg;
    msg << "control vector has " << u.size() << " entries, system has " << n_ctrl()
        << " controllers";
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  CMatrix h = drift;
  for (int j = 0; j < n_ctrl(); ++j) {
    if (u(j) != 0.0) h += u(j) * controllers[static_cast<std::size_t>(j)];
  }
  return h;
}

void ControlSystem::validate() const {
  if (dim <= 0) throw Error(ErrorCode::InvalidProblem, "system dimension must be positive");
  if (controllers.empty()) throw Error(ErrorCode::InvalidProblem, "system needs at least one controller");
  if (!(t_f > 0.0) || !std::isfinite(t_f)) {
    throw Error(ErrorCode::InvalidProblem, "evolution time t_f must be positive and finite");
  }
  if (drift.rows() != dim || drift.cols() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "drift dimension differs from system dimension");
  }
  require_hermitian(drift, "drift Hamiltonian");
  for (std::size_t j = 0; j < controllers.size(); ++j) {
    if (controllers[j].rows() != dim || controllers[j].cols() != dim) {
      throw Error(ErrorCode::DimensionMismatch,
                  "controller " + std::to_string(j + 1) + " dimension differs from system");
    }
    require_hermitian(controllers[j], "control Hamiltonian");
  }
  if (x_init.rows() != dim || x_init.cols() != dim) {
    throw Error(ErrorCode::DimensionMismatch, "initial operator dimension differs from system");
  }
  const double err = unitarity_error(x_init);
  if (!(err <= 1e-10)) {
    std::ostringstream msg;
    msg << "initial operator is not unitary (" << err << ")";
    throw Error(ErrorCode::NotUnitary, msg.str());
  }
  if (!labels.empty() && labels.size() != controllers.size()) {
    throw Error(ErrorCode::InvalidProblem, "label count differs from controller count");
  }
}

void CouplingMatrix::validate() const {
  if (j.rows() != j.cols() || j.rows() < 1) {
    throw Error(ErrorCode::InvalidArgument, "coupling matrix must be square and non-empty");
  }
  for (Eigen::Index a = 0; a < j.rows(); ++a) {
    if (j(a, a) != 0.0) throw Error(ErrorCode::InvalidArgument, "coupling diagonal must be zero");
    for (Eigen::Index b = 0; b < j.cols(); ++b) {
      if (!std::isfinite(j(a, b)) || j(a, b) != j(b, a)) {
        throw Error(ErrorCode::InvalidArgument, "coupling matrix must be finite and symmetric");
      }
    }
  }
}

CouplingMatrix CouplingMatrix::all_ones(int q) {
  if (q < 1) throw Error(ErrorCode::InvalidArgument, "qubit count must be >= 1");
  CouplingMatrix c;
  c.j = RMatrix::Ones(q, q);
  c.j.diagonal().setZero();
  return c;
}

CouplingMatrix CouplingMatrix::random(int q, std::uint64_t seed) {
  if (q < 1) throw Error(ErrorCode::InvalidArgument, "qubit count must be >= 1");
  Rng rng(seed);
  CouplingMatrix c;
  c.j = RMatrix::Zero(q, q);
  for (int a = 0; a < q; ++a) {
    for (int b = a + 1; b < q; ++b) {
      c.j(a, b) = rng.uniform(-1.0, 1.0);
      c.j(b, a) = c.j(a, b);
    }
  }
  return c;
}

CMatrix pauli_x() {
  CMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

CMatrix pauli_y() {
  CMatrix m(2, 2);
  m << 0.0, -kI, kI, 0.0;
  return m;
}

CMatrix pauli_z() {
  CMatrix m(2, 2);
  m << 1.0, 0.0, 0.0, -1.0;
  return m;
}

CMatrix on_qubit(const CMatrix& op, int i, int q) {
  if (q < 1 || i < 1 || i > q) {
    throw Error(ErrorCode::InvalidArgument, "qubit index out of range");
  }
  if (op.rows() != 2 || op.cols() != 2) {
    throw Error(ErrorCode::DimensionMismatch, "single-qubit operator must be 2x2");
  }
  const Eigen::Index left = Eigen::Index{1} << (i - 1);
  const Eigen::Index right = Eigen::Index{1} << (q - i);
  return kron(kron(CMatrix::Identity(left, left), op), CMatrix::Identity(right, right));
}

Problem build_energy(int q, const CouplingMatrix& coupling, double t_f) {
  if (q < 1) throw Error(ErrorCode::InvalidArgument, "qubit count must be >= 1");
  coupling.validate();
  if (coupling.qubits() != q) {
    throw Error(ErrorCode::DimensionMismatch, "coupling matrix size differs from qubit count");
  }
  const Eigen::Index dim = Eigen::Index{1} << q;

  CMatrix mixer = CMatrix::Zero(dim, dim);
  for (int i = 1; i <= q; ++i) mixer -= on_qubit(pauli_x(), i, q);

  CMatrix problem = CMatrix::Zero(dim, dim);
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < q; ++b) {
      if (a == b || coupling.j(a, b) == 0.0) continue;
      problem += coupling.j(a, b) * (on_qubit(pauli_z(), a + 1, q) * on_qubit(pauli_z(), b + 1, q));
    }
  }

  Problem p;
  p.name = "Energy" + std::to_string(q);
  ControlSystem& sys = p.system;
  sys.dim = dim;
  sys.drift = CMatrix::Zero(dim, dim);
  sys.controllers = {mixer, problem};
  sys.x_init = CMatrix::Identity(dim, dim);
  sys.feasible = FeasibleKind::Sos1;
  sys.t_f = t_f;
  sys.labels = {"H1", "H2"};
  sys.validate();

  const HermitianEig mixer_eig = hermitian_eig(mixer);
  if (dim > 1 && mixer_eig.eigenvalues(1) - mixer_eig.eigenvalues(0) <=
                     1e-9 * (1.0 + std::abs(mixer_eig.eigenvalues(0)))) {
    p.warnings.push_back("GroundStateDegenerate: initial state taken as lowest-index eigenvector");
  }
  const HermitianEig problem_eig = hermitian_eig(problem);

  EnergyRatio obj;
  obj.h_tilde = problem;
  obj.psi0 = mixer_eig.basis.col(0);
  obj.e_min = problem_eig.eigenvalues(0);
  obj.e_first_excited = first_excited(problem_eig.eigenvalues);
  if (!(obj.e_min < 0.0)) {
    std::ostringstream msg;
    msg << "minimum energy must be negative, got " << obj.e_min;
    throw Error(ErrorCode::InvalidProblem, msg.str());
  }
  p.objective = obj;
  return p;
}

Problem build_cnot(double t_f) {
  const CMatrix x = pauli_x(), y = pauli_y(), z = pauli_z();
  const CMatrix id2 = CMatrix::Identity(2, 2);

  Problem p;
  p.name = "CNOT";
  ControlSystem& sys = p.system;
  sys.dim = 4;
  sys.drift = kron(x, x) + kron(y, y) + kron(z, z);
  sys.controllers = {kron(x, id2), kron(y, id2)};
  sys.x_init = CMatrix::Identity(4, 4);
  sys.feasible = FeasibleKind::FreeBinary;
  sys.t_f = t_f;
  sys.labels = {"sigma_x1", "sigma_y1"};
  sys.validate();

  Infidelity obj;
  obj.x_targ = CMatrix::Zero(4, 4);
  obj.x_targ(0, 0) = 1.0;
  obj.x_targ(1, 1) = 1.0;
  obj.x_targ(2, 3) = 1.0;
  obj.x_targ(3, 2) = 1.0;
  obj.normalization = 4.0;
  p.objective = obj;
  return p;
}

Problem build_not(double t_f, NotModel model) {
  const double strength_01 = 1.0;
  const double strength_12 = std::sqrt(2.0);
  const double energy_1 = 0.0;
  const double energy_2 = 2.0 * std::numbers::pi;

  // Resonant: level energies on the diagonal, transition strengths on the
  // couplings. AsPrinted swaps the two roles.
  const bool printed = model == NotModel::AsPrinted;
  const double d1 = printed ? strength_01 : energy_1;
  const double d2 = printed ? strength_12 : energy_2;
  const double c01 = printed ? energy_1 : strength_01;
  const double c12 = printed ? energy_2 : strength_12;

  Problem p;
  p.name = "NOT";
  ControlSystem& sys = p.system;
  sys.dim = 3;
  sys.drift = d1 * basis_op(3, 1, 1) + d2 * basis_op(3, 2, 2);
  sys.controllers = {
      c01 * (basis_op(3, 0, 1) + basis_op(3, 1, 0)) + c12 * (basis_op(3, 1, 2) + basis_op(3, 2, 1)),
      c01 * (kI * basis_op(3, 0, 1) - kI * basis_op(3, 1, 0)) +
          c12 * (kI * basis_op(3, 1, 2) - kI * basis_op(3, 2, 1)),
  };
  sys.x_init = CMatrix::Identity(3, 3);
  sys.feasible = FeasibleKind::FreeBinary;
  sys.t_f = t_f;
  sys.labels = {"drive_x", "drive_y"};
  sys.validate();

  Infidelity obj;
  obj.x_targ = CMatrix::Zero(3, 3);
  obj.x_targ(0, 1) = 1.0;
  obj.x_targ(1, 0) = 1.0;
  // Only the two logical levels count.
  obj.normalization = 2.0;
  p.objective = obj;
  return p;
}

std::vector<Edge> grid_edges(int rows, int cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorCode::InvalidArgument, "grid must be at least 1x1");
  std::vector<Edge> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(i, i + 1);
      if (r + 1 < rows) edges.emplace_back(i, i + cols);
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

Problem build_circuit(int rows, int cols, const std::vector<Edge>& edges, const CMatrix& x_targ,
                      double t_f) {
  const std::vector<Edge> allowed = grid_edges(rows, cols);
  const int q = rows * cols;
  if (q > 10) throw Error(ErrorCode::InvalidArgument, "circuit instances are limited to 10 qubits");
  const Eigen::Index dim = Eigen::Index{1} << q;

  if (x_targ.rows() != dim || x_targ.cols() != dim) {
    std::ostringstream msg;
    msg << "target must be " << dim << "x" << dim << ", got " << x_targ.rows() << "x"
        << x_targ.cols();
    throw Error(ErrorCode::TargetNotUnitary, msg.str());
  }
  if (!all_finite(x_targ) || !(unitarity_error(x_targ) <= 1e-8)) {
    std::ostringstream msg;
    msg << "target is not unitary (||U^dagger U - I||_max = " << unitarity_error(x_targ) << ")";
    throw Error(ErrorCode::TargetNotUnitary, msg.str());
  }

  std::set<Edge> seen;
  for (const Edge& e : edges) {
    const Edge key{std::min(e.first, e.second), std::max(e.first, e.second)};
    if (!std::binary_search(allowed.begin(), allowed.end(), key)) {
      std::ostringstream msg;
      msg << "edge (" << e.first << ", " << e.second << ") is not a neighbor pair of the "
          << rows << "x" << cols << " grid";
      throw Error(ErrorCode::BadEdge, msg.str());
    }
    if (!seen.insert(key).second) {
      std::ostringstream msg;
      msg << "edge (" << e.first << ", " << e.second << ") listed twice";
      throw Error(ErrorCode::BadEdge, msg.str());
    }
  }

  CMatrix flux_op = CMatrix::Zero(2, 2);
  flux_op(1, 1) = 1.0;

  Problem p;
  p.name = "Circuit";
  ControlSystem& sys = p.system;
  sys.dim = dim;
  sys.drift = CMatrix::Zero(dim, dim);
  for (int i = 1; i <= q; ++i) {
    sys.controllers.push_back(kChargeCoupling * on_qubit(pauli_x(), i, q));
    sys.labels.push_back("charge" + std::to_string(i));
    sys.controllers.push_back(kFluxCoupling * on_qubit(flux_op, i, q));
    sys.labels.push_back("flux" + std::to_string(i));
  }
  for (const Edge& e : edges) {
    sys.controllers.push_back(kEdgeCoupling * (on_qubit(pauli_x(), e.first + 1, q) *
                                               on_qubit(pauli_x(), e.second + 1, q)));
    sys.labels.push_back("edge" + std::to_string(e.first + 1) + "-" + std::to_string(e.second + 1));
  }
  sys.x_init = CMatrix::Identity(dim, dim);
  sys.feasible = FeasibleKind::Sos1;
  sys.t_f = t_f;
  sys.validate();

  Infidelity obj;
  obj.x_targ = x_targ;
  obj.normalization = static_cast<double>(dim);
  p.objective = obj;
  return p;
}

Eigen::Index objective_dim(const ObjectiveSpec& spec) {
  return std::visit(
      [](const auto& s) -> Eigen::Index {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EnergyRatio>) {
          return s.h_tilde.rows();
        } else {
          return s.x_targ.rows();
        }
      },
      spec);
}

namespace {

void check_final(const ObjectiveSpec& spec, const CMatrix& x) {
  const Eigen::Index dim = objective_dim(spec);
  if (x.rows() != dim || x.cols() != dim) {
    std::ostringstream msg;
    msg << "final operator is " << x.rows() << "x" << x.cols() << ", objective expects " << dim
        << "x" << dim;
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
}

Complex trace_overlap(const CMatrix& target, const CMatrix& x) {
  return target.conjugate().cwiseProduct(x).sum();
}

}  // namespace

double objective(const ObjectiveSpec& spec, const CMatrix& x_final) {
  check_final(spec, x_final);
  if (const auto* e = std::get_if<EnergyRatio>(&spec)) {
    const CVector v = x_final * e->psi0;
    const double energy = v.dot(e->h_tilde * v).real();
    return 1.0 - energy / e->e_min;
  }
  const auto& f = std::get<Infidelity>(spec);
  return 1.0 - std::abs(trace_overlap(f.x_targ, x_final)) / f.normalization;
}

CMatrix objective_adjoint(const ObjectiveSpec& spec, const CMatrix& x_final) {
  check_final(spec, x_final);
  if (const auto* e = std::get_if<EnergyRatio>(&spec)) {
    const CVector kappa = e->h_tilde * (x_final * e->psi0);
    return (-1.0 / e->e_min) * (kappa * e->psi0.adjoint());
  }
  const auto& f = std::get<Infidelity>(spec);
  const Complex z = trace_overlap(f.x_targ, x_final);
  const double mag = std::abs(z);
  if (!(mag > kZeroOverlap)) {
    std::ostringstream msg;
    msg << "trace overlap |tr(X_targ^dagger X)| = " << mag << " is too small to define a phase";
    throw Error(ErrorCode::ZeroTraceOverlap, msg.str());
  }
  return (-0.5 / f.normalization) * (z / mag) * f.x_targ;
}

}  // namespace qswitch
