#include "qswitch/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "qswitch/error.hpp"
#include "qswitch/rng.hpp"

namespace qswitch {

ControlGrid ControlGrid::filled(int n_steps, int n_ctrl, double t_f, double value) {
  if (n_steps < 1 || n_ctrl < 1) {
    throw Error(ErrorCode::InvalidArgument, "grid needs at least one step and one controller");
  }
  if (!(t_f > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid horizon must be positive");
  ControlGrid g;
  g.values = RMatrix::Constant(n_steps, n_ctrl, value);
  g.dt = t_f / n_steps;
  return g;
}

void ControlGrid::validate() const {
  if (values.rows() < 1 || values.cols() < 1) {
    throw Error(ErrorCode::InvalidArgument, "control grid is empty");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw Error(ErrorCode::InvalidArgument, "control grid step width must be positive");
  }
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    for (Eigen::Index k = 0; k < values.rows(); ++k) {
      const double v = values(k, j);
      const bool ok = binary ? (v == 0.0 || v == 1.0) : (v >= 0.0 && v <= 1.0);
      if (!ok) {
        std::ostringstream msg;
        msg << "control value " << v << " at step " << k + 1 << ", controller " << j + 1
            << (binary ? " is not binary" : " lies outside [0, 1]");
        throw Error(ErrorCode::InvalidArgument, msg.str());
      }
    }
  }
}

namespace {

void check_grid(const ControlSystem& sys, const ControlGrid& grid) {
  if (grid.n_ctrl() != sys.n_ctrl()) {
    std::ostringstream msg;
    msg << "grid has " << grid.n_ctrl() << " controllers, system has " << sys.n_ctrl();
    throw Error(ErrorCode::DimensionMismatch, msg.str());
  }
  if (grid.n_steps() < 1) throw Error(ErrorCode::DimensionMismatch, "grid has no steps");
}

}  // namespace

std::vector<CMatrix> simulate(const ControlSystem& sys, const ControlGrid& grid) {
  check_grid(sys, grid);
  std::vector<CMatrix> states;
  states.reserve(static_cast<std::size_t>(grid.n_steps()));
  CMatrix x = sys.x_init;
  for (int k = 0; k < grid.n_steps(); ++k) {
    x = counted_product(expm_skew(sys.hamiltonian(grid.step(k)), grid.dt), x);
    states.push_back(x);
  }
  return states;
}

CMatrix final_state(const ControlSystem& sys, const ControlGrid& grid) {
  return simulate(sys, grid).back();
}

double sos1_penalty(const ControlGrid& grid, double rho) {
  if (rho == 0.0) return 0.0;
  const RVector excess = grid.values.rowwise().sum().array() - 1.0;
  return rho * excess.squaredNorm();
}

RelaxEvaluation evaluate_relaxation(const ControlSystem& sys, const ObjectiveSpec& spec,
                                    const ControlGrid& grid, double rho, bool with_gradient) {
  check_grid(sys, grid);
  const int T = grid.n_steps();
  const int N = grid.n_ctrl();

  RelaxEvaluation out;
  out.penalty = sos1_penalty(grid, rho);

  if (!with_gradient) {
    out.objective = objective(spec, final_state(sys, grid));
    return out;
  }

  std::vector<HermitianEig> eigs;
  std::vector<CMatrix> props;
  std::vector<CMatrix> states;  // states[k] = X_k, states[0] = x_init
  eigs.reserve(static_cast<std::size_t>(T));
  props.reserve(static_cast<std::size_t>(T));
  states.reserve(static_cast<std::size_t>(T) + 1);
  states.push_back(sys.x_init);
  for (int k = 0; k < T; ++k) {
    eigs.push_back(hermitian_eig(sys.hamiltonian(grid.step(k))));
    props.push_back(expm_from_eig(eigs.back(), grid.dt));
    states.push_back(counted_product(props.back(), states.back()));
  }
  out.objective = objective(spec, states.back());

  // Lambda_T = G, Lambda_{k-1} = U_k^dagger Lambda_k;
  // dF/du_jk = 2 Re tr(Lambda_k^dagger dU_k X_{k-1}).
  // With dU_k = Q (Phi o (Q^dagger H_j Q)) Q^dagger the trace collapses to
  // sum_ab Y_ab (Q^dagger H_j Q)_ab, Y = W^T o Phi, W = Q^dagger X_{k-1} Lambda_k^dagger Q,
  // which equals tr(M H_j) with M = Q Y^T Q^dagger: one rotation per step for all j.
  out.gradient.resize(T, N);
  CMatrix lambda = objective_adjoint(spec, states.back());
  const double dt = grid.dt;
  for (int k = T - 1; k >= 0; --k) {
    const HermitianEig& eig = eigs[static_cast<std::size_t>(k)];
    const CMatrix& q = eig.basis;
    const Eigen::Index n = eig.dim();
    CMatrix phi(n, n);
    const RVector& lam = eig.eigenvalues;
    for (Eigen::Index b = 0; b < n; ++b) {
      for (Eigen::Index a = 0; a < n; ++a) {
        double delta = lam(a) - lam(b);
        if (std::abs(delta) <= 1e-8 * (1.0 + std::abs(lam(a)) + std::abs(lam(b)))) delta = 0.0;
        const double x = 0.5 * delta * dt;
        const double sinc = (x == 0.0) ? 1.0 : std::sin(x) / x;
        phi(a, b) = Complex(0.0, -dt) * std::polar(1.0, -0.5 * (lam(a) + lam(b)) * dt) * sinc;
      }
    }
    const CMatrix left = q.adjoint() * states[static_cast<std::size_t>(k)];
    const CMatrix right = lambda.adjoint() * q;
    const CMatrix w = left * right;
    const CMatrix m = q * w.cwiseProduct(phi.transpose()) * q.adjoint();
    for (int j = 0; j < N; ++j) {
      const CMatrix& h = sys.controllers[static_cast<std::size_t>(j)];
      out.gradient(k, j) = 2.0 * m.cwiseProduct(h.transpose()).sum().real();
    }
    lambda = props[static_cast<std::size_t>(k)].adjoint() * lambda;
  }

  if (rho != 0.0) {
    const RVector excess = grid.values.rowwise().sum().array() - 1.0;
    for (int j = 0; j < N; ++j) out.gradient.col(j) += 2.0 * rho * excess;
  }
  return out;
}

RMatrix grape_gradient(const ControlSystem& sys, const ObjectiveSpec& spec,
                       const ControlGrid& grid, double rho) {
  return evaluate_relaxation(sys, spec, grid, rho, true).gradient;
}

std::string to_string(RelaxInit init) {
  switch (init) {
    case RelaxInit::Uniform: return "uniform";
    case RelaxInit::Constant: return "constant";
    case RelaxInit::Random: return "random";
  }
  return "uniform";
}

RelaxInit relax_init_from_string(const std::string& name) {
  if (name == "uniform") return RelaxInit::Uniform;
  if (name == "constant") return RelaxInit::Constant;
  if (name == "random") return RelaxInit::Random;
  throw Error(ErrorCode::InvalidArgument,
              "unknown relaxation init '" + name + "' (expected uniform, constant or random)");
}

std::string to_string(RelaxStatus status) {
  switch (status) {
    case RelaxStatus::Converged: return "converged";
    case RelaxStatus::MaxIterations: return "max_iterations";
    case RelaxStatus::Stalled: return "stalled";
  }
  return "stalled";
}

void RelaxConfig::validate() const {
  if (n_steps < 1) throw Error(ErrorCode::InvalidArgument, "number of time steps must be >= 1");
  if (max_iters < 1) throw Error(ErrorCode::InvalidArgument, "max_iters must be >= 1");
  if (!(grad_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "grad_tol must be positive");
  if (!(rho >= 0.0)) throw Error(ErrorCode::InvalidArgument, "rho must be non-negative");
  if (lbfgs_memory < 0) throw Error(ErrorCode::InvalidArgument, "lbfgs_memory must be >= 0");
  if (init == RelaxInit::Constant && !(init_value >= 0.0 && init_value <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "constant init value must lie in [0, 1]");
  }
}

double box_stationarity(const RMatrix& u, const RMatrix& g) {
  return ((u - g).cwiseMax(0.0).cwiseMin(1.0) - u).cwiseAbs().maxCoeff();
}

namespace {

using Vec = Eigen::VectorXd;

struct Pair {
  Vec s;
  Vec y;
  double rho;
};

// Two-loop recursion on the free coordinates.
Vec lbfgs_direction(const std::deque<Pair>& memory, const Vec& g, const Vec& free_mask) {
  Vec q = g.cwiseProduct(free_mask);
  if (memory.empty()) return -q;
  std::vector<double> alpha(memory.size());
  for (std::size_t i = memory.size(); i-- > 0;) {
    const Pair& p = memory[i];
    alpha[i] = p.rho * p.s.cwiseProduct(free_mask).dot(q);
    q -= alpha[i] * p.y.cwiseProduct(free_mask);
  }
  const Pair& last = memory.back();
  const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
  Vec r = gamma * q;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const Pair& p = memory[i];
    const double beta = p.rho * p.y.cwiseProduct(free_mask).dot(r);
    r += (alpha[i] - beta) * p.s.cwiseProduct(free_mask);
  }
  return -r.cwiseProduct(free_mask);
}

class RelaxProblem {
 public:
  RelaxProblem(const ControlSystem& sys, const ObjectiveSpec& spec, int n_steps, double rho)
      : sys_(sys), spec_(spec), rho_(rho) {
    shape_ = ControlGrid::filled(n_steps, sys.n_ctrl(), sys.t_f, 0.0);
  }

  ControlGrid grid(const Vec& x) const {
    ControlGrid g = shape_;
    g.values = Eigen::Map<const RMatrix>(x.data(), shape_.values.rows(), shape_.values.cols());
    return g;
  }

  RelaxEvaluation eval(const Vec& x, bool with_gradient) const {
    return evaluate_relaxation(sys_, spec_, grid(x), rho_, with_gradient);
  }

 private:
  const ControlSystem& sys_;
  const ObjectiveSpec& spec_;
  double rho_;
  ControlGrid shape_;
};

Vec flatten(const RMatrix& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Vec clip01(const Vec& v) { return v.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

RelaxResult solve_relaxation_from(const ControlSystem& sys, const ObjectiveSpec& spec,
                                  const RelaxConfig& cfg, const ControlGrid& start) {
  cfg.validate();
  sys.validate();
  if (start.n_steps() != cfg.n_steps || start.n_ctrl() != sys.n_ctrl()) {
    throw Error(ErrorCode::DimensionMismatch, "starting grid shape differs from configuration");
  }
  const RelaxProblem problem(sys, spec, cfg.n_steps, cfg.rho);
  Rng restart_rng(cfg.seed ^ 0x5DEECE66DULL);

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;
  constexpr int kMaxRestarts = 10;

  RelaxResult result;
  Vec x = clip01(flatten(start.values));

  // A zero trace overlap leaves the gradient undefined; move off it.
  RelaxEvaluation cur;
  for (;;) {
    try {
      cur = problem.eval(x, true);
      break;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroTraceOverlap || result.restarts >= kMaxRestarts) throw;
      ++result.restarts;
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += restart_rng.uniform(-0.05, 0.05);
      x = clip01(x);
    }
  }

  std::deque<Pair> memory;
  Vec g = flatten(cur.gradient);
  double stationarity = box_stationarity(problem.grid(x).values, cur.gradient);
  result.status = RelaxStatus::MaxIterations;
  result.trace.push_back({0, cur.objective, cur.penalty, 0.0, stationarity});

  int iter = 0;
  while (iter < cfg.max_iters) {
    if (stationarity <= cfg.grad_tol) {
      result.status = RelaxStatus::Converged;
      break;
    }
    Vec free_mask(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const bool pinned = (x(i) <= 0.0 && g(i) > 0.0) || (x(i) >= 1.0 && g(i) < 0.0);
      free_mask(i) = pinned ? 0.0 : 1.0;
    }

    bool accepted = false;
    double step = 1.0;
    Vec x_new;
    RelaxEvaluation next;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      const bool quasi_newton = attempt == 0 && cfg.lbfgs_memory > 0 && !memory.empty();
      if (attempt == 1 && !(cfg.lbfgs_memory > 0 && !memory.empty())) break;
      Vec d = quasi_newton ? lbfgs_direction(memory, g, free_mask) : Vec(-g.cwiseProduct(free_mask));
      if (quasi_newton && !(g.dot(d) < 0.0)) d = -g.cwiseProduct(free_mask);
      step = 1.0;
      for (int bt = 0; bt < kMaxBacktracks; ++bt, step *= 0.5) {
        x_new = clip01(x + step * d);
        const Vec move = x_new - x;
        if (move.lpNorm<Eigen::Infinity>() == 0.0) break;
        try {
          next = problem.eval(x_new, true);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ZeroTraceOverlap) throw;
          continue;
        }
        if (next.total() <= cur.total() + kArmijo * g.dot(move)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) memory.clear();
    }
    if (!accepted) {
      result.status = RelaxStatus::Stalled;
      break;
    }

    const Vec g_new = flatten(next.gradient);
    if (cfg.lbfgs_memory > 0) {
      Vec s = x_new - x;
      Vec y = g_new - g;
      const double sy = s.dot(y);
      if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
        memory.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (static_cast<int>(memory.size()) > cfg.lbfgs_memory) memory.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    cur = next;
    ++iter;
    stationarity = box_stationarity(problem.grid(x).values, cur.gradient);
    result.trace.push_back({iter, cur.objective, cur.penalty, step, stationarity});
  }
  if (result.status == RelaxStatus::MaxIterations && stationarity <= cfg.grad_tol) {
    result.status = RelaxStatus::Converged;
  }

  result.grid = problem.grid(x);
  result.iterations = iter;
  result.objective = cur.objective;
  result.penalty = cur.penalty;
  result.stationarity = stationarity;
  return result;
}

RelaxResult solve_relaxation(const ControlSystem& sys, const ObjectiveSpec& spec,
                             const RelaxConfig& cfg) {
  cfg.validate();
  const int N = sys.n_ctrl();
  ControlGrid start = ControlGrid::filled(cfg.n_steps, N, sys.t_f, 1.0 / N);
  if (cfg.init == RelaxInit::Constant) {
    start.values.setConstant(cfg.init_value);
  } else if (cfg.init == RelaxInit::Random) {
    Rng rng(cfg.seed);
    for (Eigen::Index j = 0; j < start.values.cols(); ++j) {
      for (Eigen::Index k = 0; k < start.values.rows(); ++k) start.values(k, j) = rng.uniform();
    }
  }
  return solve_relaxation_from(sys, spec, cfg, start);
}

}  // namespace qswitch
