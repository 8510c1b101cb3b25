#include "qswitch/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "qswitch/error.hpp"

namespace qswitch {

namespace {

double off_diagonal_frobenius(const CMatrix& a) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      if (i != j) sum += std::norm(a(i, j));
    }
  }
  return std::sqrt(sum);
}

// One complex Jacobi rotation zeroing a(p,q). The phase of a(p,q) is first
// absorbed into column q so the remaining 2x2 problem is real symmetric.
void rotate(CMatrix& a, CMatrix& v, Eigen::Index p, Eigen::Index q) {
  const Complex apq = a(p, q);
  const double g = std::abs(apq);
  if (g == 0.0) return;

  const Complex phase = apq / g;  // e^{i phi}
  const double app = a(p, p).real();
  const double aqq = a(q, q).real();

  const double theta = (aqq - app) / (2.0 * g);
  double t;
  if (std::abs(theta) > 1e150) {
    t = 0.5 / theta;
  } else {
    t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
  }
  const double c = 1.0 / std::sqrt(t * t + 1.0);
  const double s = t * c;

  // G = diag(1, e^{-i phi}) * [[c, s], [-s, c]] acting on columns (p, q):
  // col_p <- c col_p - s w col_q, col_q <- s col_p + c w col_q, w = e^{-i phi}.
  const Complex w = std::conj(phase);
  const Eigen::Index n = a.rows();
  auto rotate_columns = [&](Complex* cp, Complex* cq) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex x = cp[i];
      const Complex wy(w.real() * cq[i].real() - w.imag() * cq[i].imag(),
                       w.real() * cq[i].imag() + w.imag() * cq[i].real());
      cp[i] = Complex(c * x.real() - s * wy.real(), c * x.imag() - s * wy.imag());
      cq[i] = Complex(s * x.real() + c * wy.real(), s * x.imag() + c * wy.imag());
    }
  };

  // A <- G^dagger A G. Only columns p and q change under A G; the result is
  // Hermitian, so rows p and q are the adjoints of the new columns.
  rotate_columns(&a(0, p), &a(0, q));
  a.row(p) = a.col(p).adjoint();
  a.row(q) = a.col(q).adjoint();
  a(p, p) = app - t * g;
  a(q, q) = aqq + t * g;
  a(p, q) = 0.0;
  a(q, p) = 0.0;

  rotate_columns(&v(0, p), &v(0, q));
}

}  // namespace

CMatrix HermitianEig::reconstruct() const {
  return basis * eigenvalues.cast<Complex>().asDiagonal() * basis.adjoint();
}

HermitianEig hermitian_eig(const CMatrix& h) {
  require_square(h, "hermitian_eig input");
  if (!all_finite(h)) {
    throw Error(ErrorCode::InvalidArgument, "hermitian_eig input has non-finite entries");
  }
  require_hermitian(h, "hermitian_eig input");
  ++thread_op_counts().eigendecompositions;

  const Eigen::Index n = h.rows();
  // Symmetrize so rounding noise in the input cannot leave a non-Hermitian residue.
  CMatrix a = 0.5 * (h + h.adjoint());
  CMatrix v = CMatrix::Identity(n, n);

  const double target = 1e-12 * a.norm();
  double off = off_diagonal_frobenius(a);
  int sweep = 0;
  while (off > target) {
    if (sweep == kJacobiMaxSweeps) {
      std::ostringstream msg;
      msg << "Jacobi did not converge in " << kJacobiMaxSweeps
          << " sweeps; off-diagonal residual " << off << " (target " << target << ")";
      throw Error(ErrorCode::NoConvergence, msg.str());
    }
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) rotate(a, v, p, q);
    }
    ++sweep;
    off = off_diagonal_frobenius(a);
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return a(x, x).real() < a(y, y).real();
  });

  HermitianEig out;
  out.eigenvalues.resize(n);
  out.basis.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.eigenvalues(k) = a(order[k], order[k]).real();
    out.basis.col(k) = v.col(order[k]);
    // Fix the free phase: largest-magnitude component real and positive.
    Eigen::Index imax = 0;
    out.basis.col(k).cwiseAbs().maxCoeff(&imax);
    const Complex lead = out.basis(imax, k);
    if (std::abs(lead) > 0.0) out.basis.col(k) *= std::conj(lead) / std::abs(lead);
  }
  return out;
}

CMatrix expm_from_eig(const HermitianEig& eig, double t) {
  ++thread_op_counts().exponentials;
  const CVector phases = (eig.eigenvalues * (-t)).unaryExpr([](double x) {
    return std::polar(1.0, x);
  });
  return eig.basis * phases.asDiagonal() * eig.basis.adjoint();
}

CMatrix expm_skew(const CMatrix& h, double t) {
  if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "expm_skew: non-finite t");
  return expm_from_eig(hermitian_eig(h), t);
}

CMatrix expm_frechet(const HermitianEig& eig, const CMatrix& direction, double t) {
  const Eigen::Index n = eig.dim();
  if (direction.rows() != n || direction.cols() != n) {
    throw Error(ErrorCode::DimensionMismatch, "expm_frechet: direction shape differs from H");
  }
  const RVector& lam = eig.eigenvalues;
  CMatrix phi(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < n; ++a) {
      double delta = lam(a) - lam(b);
      if (std::abs(delta) <= 1e-8 * (1.0 + std::abs(lam(a)) + std::abs(lam(b)))) delta = 0.0;
      const double mid = 0.5 * (lam(a) + lam(b));
      // (f(a) - f(b)) / (a - b) for f = e^{-i x t}, written without cancellation:
      // -i t e^{-i mid t} sinc(delta t / 2).
      const double x = 0.5 * delta * t;
      const double sinc = (x == 0.0) ? 1.0 : std::sin(x) / x;
      phi(a, b) = Complex(0.0, -t) * std::polar(1.0, -mid * t) * sinc;
    }
  }
  const CMatrix rotated = eig.basis.adjoint() * direction * eig.basis;
  return eig.basis * phi.cwiseProduct(rotated) * eig.basis.adjoint();
}

double max_abs(const CMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double hermiticity_error(const CMatrix& m) { return max_abs(m - m.adjoint()); }

double unitarity_error(const CMatrix& m) {
  return max_abs(m.adjoint() * m - CMatrix::Identity(m.cols(), m.cols()));
}

bool all_finite(const CMatrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
    }
  }
  return true;
}

void require_square(const CMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream msg;
    msg << what << " must be square and non-empty, got " << m.rows() << "x" << m.cols();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
}

void require_hermitian(const CMatrix& m, const char* what, double tol) {
  require_square(m, what);
  const double err = hermiticity_error(m);
  if (!(err <= tol)) {
    std::ostringstream msg;
    msg << what << " is not Hermitian: ||H - H^dagger||_max = " << err;
    throw Error(ErrorCode::NotHermitian, msg.str());
  }
}

void require_same_shape(const CMatrix& a, const CMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

OpCounts& thread_op_counts() {
  thread_local OpCounts counts;
  return counts;
}

OpCounts OpCountScope::delta() const {
  const OpCounts& now = thread_op_counts();
  return {now.exponentials - start_.exponentials,
          now.multiplications - start_.multiplications,
          now.eigendecompositions - start_.eigendecompositions};
}

CMatrix counted_product(const CMatrix& a, const CMatrix& b) {
  ++thread_op_counts().multiplications;
  return a * b;
}

}  // namespace qswitch
