#pragma once

// Continuous relaxation of the time-discretized control problem: piecewise
// constant controls in [0, 1] on a uniform grid, exact adjoint gradients and
// a box-projected quasi-Newton solver.

#include <cstdint>
#include <string>
#include <vector>

#include "qswitch/linalg.hpp"
#include "qswitch/problems.hpp"

namespace qswitch {

/// T x N control values on a uniform grid of width dt. Row k holds the
/// control vector of step k + 1.
struct ControlGrid {
  RMatrix values;
  double dt = 0.0;
  bool binary = false;

  int n_steps() const { return static_cast<int>(values.rows()); }
  int n_ctrl() const { return static_cast<int>(values.cols()); }
  double t_f() const { return dt * n_steps(); }
  RVector step(int k) const { return values.row(k).transpose(); }

  /// Every entry set to `value`; dt = t_f / T.
  static ControlGrid filled(int n_steps, int n_ctrl, double t_f, double value);
  /// Throws InvalidArgument unless entries lie in [0, 1] (in {0, 1} when
  /// binary) and dt > 0.
  void validate() const;
};

/// X_1..X_T with X_k = exp(-i H(u_k) dt) X_{k-1}, X_0 = x_init.
std::vector<CMatrix> simulate(const ControlSystem& sys, const ControlGrid& grid);
CMatrix final_state(const ControlSystem& sys, const ControlGrid& grid);

/// rho * sum_k (sum_j u_jk - 1)^2
double sos1_penalty(const ControlGrid& grid, double rho);

struct RelaxEvaluation {
  double objective = 0.0;
  double penalty = 0.0;
  RMatrix gradient;  // T x N, empty when not requested

  double total() const { return objective + penalty; }
};

/// Objective, penalty and (optionally) the exact gradient of their sum.
RelaxEvaluation evaluate_relaxation(const ControlSystem& sys, const ObjectiveSpec& spec,
                                    const ControlGrid& grid, double rho, bool with_gradient);

/// d[F(u) + rho sum_k (sum_j u_jk - 1)^2] / du_jk, using the exact
/// derivative of every step propagator.
RMatrix grape_gradient(const ControlSystem& sys, const ObjectiveSpec& spec,
                       const ControlGrid& grid, double rho);

enum class RelaxInit { Uniform, Constant, Random };

std::string to_string(RelaxInit init);
RelaxInit relax_init_from_string(const std::string& name);

struct RelaxConfig {
  int n_steps = 0;
  double rho = 0.0;
  int max_iters = 5000;
  double grad_tol = 1e-6;
  RelaxInit init = RelaxInit::Uniform;
  double init_value = 0.5;  // used by Constant
  std::uint64_t seed = 0;   // used by Random and by restarts
  int lbfgs_memory = 10;    // 0 gives plain projected gradient

  void validate() const;
};

enum class RelaxStatus { Converged, MaxIterations, Stalled };

std::string to_string(RelaxStatus status);

struct RelaxTraceRow {
  int iter = 0;
  double objective = 0.0;
  double penalty = 0.0;
  double step = 0.0;
  double stationarity = 0.0;
};

struct RelaxResult {
  ControlGrid grid;
  int iterations = 0;
  double objective = 0.0;
  double penalty = 0.0;
  double stationarity = 0.0;
  int restarts = 0;
  RelaxStatus status = RelaxStatus::MaxIterations;
  std::vector<RelaxTraceRow> trace;
};

/// max |clip(u - g, 0, 1) - u|
double box_stationarity(const RMatrix& u, const RMatrix& g);

RelaxResult solve_relaxation(const ControlSystem& sys, const ObjectiveSpec& spec,
                             const RelaxConfig& cfg);

/// Same, starting from a given grid instead of cfg.init.
RelaxResult solve_relaxation_from(const ControlSystem& sys, const ObjectiveSpec& spec,
                                  const RelaxConfig& cfg, const ControlGrid& start);

}  // namespace qswitch
