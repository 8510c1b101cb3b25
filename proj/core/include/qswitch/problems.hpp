#pragma once

// Control systems, objectives and the four benchmark problem families.
//
// Qubit 1 is the most significant tensor factor: an operator on qubit i of q
// is I^(i-1) (x) op (x) I^(q-i).

#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qswitch/linalg.hpp"

namespace qswitch {

enum class FeasibleKind { Sos1, FreeBinary };

std::string to_string(FeasibleKind kind);
FeasibleKind feasible_kind_from_string(const std::string& name);

/// H(u) = drift + sum_j u_j controllers[j], evolved from x_init over [0, t_f].
struct ControlSystem {
  Eigen::Index dim = 0;
  CMatrix drift;
  std::vector<CMatrix> controllers;
  CMatrix x_init;
  FeasibleKind feasible = FeasibleKind::Sos1;
  double t_f = 0.0;
  std::vector<std::string> labels;

  int n_ctrl() const { return static_cast<int>(controllers.size()); }
  CMatrix hamiltonian(const RVector& u) const;
  /// Throws InvalidProblem / NotHermitian / NotUnitary on a malformed system.
  void validate() const;
};

/// 1 - <psi0| X^dagger H X |psi0> / e_min.
struct EnergyRatio {
  CMatrix h_tilde;
  CVector psi0;
  double e_min = 0.0;
  /// Smallest eigenvalue of h_tilde strictly above e_min (e_min if none).
  double e_first_excited = 0.0;
};

/// 1 - |tr(x_targ^dagger X)| / normalization.
struct Infidelity {
  CMatrix x_targ;
  double normalization = 1.0;
};

using ObjectiveSpec = std::variant<EnergyRatio, Infidelity>;

struct Problem {
  std::string name;
  ControlSystem system;
  ObjectiveSpec objective;
  std::vector<std::string> warnings;
};

/// Symmetric, zero-diagonal spin-glass couplings.
struct CouplingMatrix {
  RMatrix j;

  int qubits() const { return static_cast<int>(j.rows()); }
  void validate() const;

  /// Zero diagonal, every off-diagonal entry 1.
  static CouplingMatrix all_ones(int q);
  /// Upper triangle i.i.d. uniform on [-1, 1], drawn row by row.
  static CouplingMatrix random(int q, std::uint64_t seed);
};

CMatrix pauli_x();
CMatrix pauli_y();
CMatrix pauli_z();
/// `op` (2x2) acting on qubit `i` (1-based) of a q-qubit register.
CMatrix on_qubit(const CMatrix& op, int i, int q);

/// Spin glass: controllers -sum sigma_x and sum_{i != j} J_ij sigma_z sigma_z,
/// SOS1, no drift.
Problem build_energy(int q, const CouplingMatrix& coupling, double t_f);

/// Two-spin Heisenberg chain, controllers sigma_x and sigma_y on qubit 1,
/// free binary, CNOT target.
Problem build_cnot(double t_f);

/// Three-level NOT gate. `Resonant` uses level energies (0, 2 pi) and
/// transition strengths (1, sqrt 2); `AsPrinted` places the energies
/// (1, sqrt 2) on the diagonal and the strengths (0, 2 pi) on the couplings,
/// which leaves level 0 decoupled.
enum class NotModel { Resonant, AsPrinted };
Problem build_not(double t_f, NotModel model = NotModel::Resonant);

using Edge = std::pair<int, int>;

/// Nearest-neighbor pairs (0-based) of a rows x cols grid, row-major.
std::vector<Edge> grid_edges(int rows, int cols);

/// Gmon circuit compilation on a rows x cols grid (q = rows * cols).
/// Controllers per qubit: charge J_c sigma_x, flux J_f |1><1|; one
/// J_e sigma_x sigma_x coupler per edge. SOS1.
Problem build_circuit(int rows, int cols, const std::vector<Edge>& edges,
                      const CMatrix& x_targ, double t_f);

inline constexpr double kChargeCoupling = 0.2 * std::numbers::pi;
inline constexpr double kFluxCoupling = 3.0 * std::numbers::pi;
inline constexpr double kEdgeCoupling = 0.1 * std::numbers::pi;

double objective(const ObjectiveSpec& spec, const CMatrix& x_final);

/// G with dF = 2 Re tr(G^dagger dX) at x_final. Throws ZeroTraceOverlap for
/// an infidelity whose trace overlap is below 1e-14 in magnitude.
CMatrix objective_adjoint(const ObjectiveSpec& spec, const CMatrix& x_final);

Eigen::Index objective_dim(const ObjectiveSpec& spec);

inline constexpr double kZeroOverlap = 1e-14;

}  // namespace qswitch
