#pragma once

// Rounding of continuous control grids to binary grids with a total-variation
// penalty, and extraction of the controller sequence of a binary grid.

#include <cstddef>
#include <string>
#include <vector>

#include "qswitch/linalg.hpp"
#include "qswitch/problems.hpp"
#include "qswitch/relaxation.hpp"

namespace qswitch {

/// Admissible binary control vectors at one step, in ascending
/// lexicographic order of (u_1, ..., u_N). SOS1 gives the N one-hot vectors,
/// FreeBinary all 2^N vectors.
class FeasibleSet {
 public:
  static constexpr std::size_t kDefaultCap = std::size_t{1} << 16;

  FeasibleSet(FeasibleKind kind, int n_ctrl, std::size_t cap = kDefaultCap);
  static FeasibleSet for_system(const ControlSystem& sys);

  FeasibleKind kind() const { return kind_; }
  int n_ctrl() const { return n_ctrl_; }
  std::size_t size() const { return candidates_.size(); }
  const std::vector<RVector>& candidates() const { return candidates_; }
  /// Position of `u` in candidates(), or size() when absent.
  std::size_t index_of(const RVector& u) const;

 private:
  FeasibleKind kind_;
  int n_ctrl_;
  std::vector<RVector> candidates_;
};

/// sum_k sum_j |u_jk - u_j,k+1|
double tv_norm(const ControlGrid& grid);

/// mu[k] for k = 0..T: mu[T] = I, mu[k] = mu[k+1] exp(-i H(u_k) dt), so
/// mu[k] propagates from the start of step k to t_f.
std::vector<CMatrix> mu_propagators(const ControlSystem& sys, const ControlGrid& u_con);

/// Objective of the spliced grid [binary prefix, candidate, continuous tail]
/// as F(mu_next * step_propagator * x_prev).
double spliced_objective(const ObjectiveSpec& spec, const CMatrix& mu_next,
                         const CMatrix& step_propagator, const CMatrix& x_prev);

/// Keep-versus-switch test of the objective-based rounding.
///   Verbatim: keep if F(keep) <= alpha * TV(spliced grid with the best candidate).
///   Delta:    keep if F(keep) <= F(best) + alpha * (TV(best) - TV(keep)).
enum class ObjRule { Verbatim, Delta };

std::string to_string(ObjRule rule);
ObjRule obj_rule_from_string(const std::string& name);

/// Greedy objective-based rounding. Candidates at each step are ranked by
/// (objective, spliced TV, keeps previous control, enumeration order).
ControlGrid round_obj(const ControlSystem& sys, const ObjectiveSpec& spec,
                      const ControlGrid& u_con, double alpha, const FeasibleSet& fs,
                      ObjRule rule = ObjRule::Verbatim);

/// Cumulative-difference rounding. SOS1 picks the controller with the largest
/// deviation (lowest index on ties); FreeBinary activates every controller
/// whose deviation is at least dt / 2. beta = 0 is sum-up rounding.
ControlGrid round_cdiff(const ControlGrid& u_con, double beta, const FeasibleSet& fs);

/// p_jk = sum_{l<=k} u_con_jl dt - sum_{l<k} u_bin_jl dt (compensated sums).
RMatrix cumulative_deviation(const ControlGrid& u_con, const ControlGrid& u_bin);

/// Consecutive runs of identical control vectors of a binary grid.
struct ControllerSequence {
  std::vector<CMatrix> hams;
  std::vector<double> durations;
  std::vector<RVector> control_vectors;
  CMatrix x_init;
  double t_f = 0.0;

  int size() const { return static_cast<int>(hams.size()); }
  void validate() const;
};

ControllerSequence extract_sequence(const ControlSystem& sys, const ControlGrid& u_bin);

/// sum_s |c_s - c_{s+1}|_1 over consecutive control vectors.
double sequence_tv(const std::vector<RVector>& control_vectors);

}  // namespace qswitch
