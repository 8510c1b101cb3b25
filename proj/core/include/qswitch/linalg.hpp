#pragma once

// Dense complex linear algebra for small Hermitian generators: eigen-
// decomposition by cyclic Jacobi rotations, propagators exp(-iHt) and their
// Frechet derivatives.

#include <complex>
#include <cstdint>

#include <Eigen/Dense>

namespace qswitch {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

/// Spectral decomposition H = Q diag(eigenvalues) Q^dagger.
///
/// Eigenvalues are sorted ascending; ties keep the order in which the Jacobi
/// sweep left them on the diagonal.
struct HermitianEig {
  RVector eigenvalues;
  CMatrix basis;

  Eigen::Index dim() const { return eigenvalues.size(); }
  CMatrix reconstruct() const;
};

inline constexpr double kHermitianTol = 1e-10;
inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Throws Error(NotHermitian) if ||H - H^dagger||_max exceeds 1e-10 and
/// Error(NoConvergence) if 100 sweeps do not bring the off-diagonal Frobenius
/// norm below 1e-12 ||H||_F.
HermitianEig hermitian_eig(const CMatrix& h);

/// exp(-i H t), routed through hermitian_eig.
CMatrix expm_skew(const CMatrix& h, double t);

/// exp(-i H t) from a precomputed decomposition: Q diag(e^{-i lambda t}) Q^dagger.
CMatrix expm_from_eig(const HermitianEig& eig, double t);

/// Directional derivative of exp(-i H t) along `direction`, via the
/// Daleckii-Krein divided-difference matrix of f(lambda) = e^{-i lambda t}.
CMatrix expm_frechet(const HermitianEig& eig, const CMatrix& direction, double t);

// Norms and validity checks.
double max_abs(const CMatrix& m);
double hermiticity_error(const CMatrix& m);
double unitarity_error(const CMatrix& m);
bool all_finite(const CMatrix& m);

void require_square(const CMatrix& m, const char* what);
void require_hermitian(const CMatrix& m, const char* what, double tol = kHermitianTol);
void require_same_shape(const CMatrix& a, const CMatrix& b, const char* what);

CMatrix kron(const CMatrix& a, const CMatrix& b);

/// Counters for matrix exponentials, matrix-matrix products and
/// eigendecompositions performed on the calling thread. The propagator
/// routines count themselves; algorithm code counts its explicit products
/// through `counted_product`.
struct OpCounts {
  std::uint64_t exponentials = 0;
  std::uint64_t multiplications = 0;
  std::uint64_t eigendecompositions = 0;
};

OpCounts& thread_op_counts();

/// Snapshot of the thread counters; `delta()` reports work done since
/// construction.
class OpCountScope {
 public:
  OpCountScope() : start_(thread_op_counts()) {}
  OpCounts delta() const;

 private:
  OpCounts start_;
};

CMatrix counted_product(const CMatrix& a, const CMatrix& b);

}  // namespace qswitch
