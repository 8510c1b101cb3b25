#pragma once

// Switching-time optimization: with the controller sequence fixed, optimize
// the interval lengths tau on the simplex {tau >= 0, sum tau = t_f}.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "qswitch/linalg.hpp"
#include "qswitch/problems.hpp"
#include "qswitch/rounding.hpp"

namespace qswitch {

struct SwitchingSchedule {
  std::vector<double> durations;
  double t_f = 0.0;

  /// Clamps entries in [-1e-12, 0) to 0; throws InvalidArgument if an entry
  /// is more negative or the sum misses t_f by more than 1e-9.
  void validate();
};

SwitchingSchedule initial_schedule(const ControllerSequence& seq);

/// Eigendecompositions of distinct interval Hamiltonians, keyed by their
/// entries quantized to 1e-9. Entries are written once and then shared;
/// concurrent lookups are safe. A disabled cache decomposes on every call.
class EigCache {
 public:
  explicit EigCache(bool enabled = true) : enabled_(enabled) {}
  EigCache(const EigCache&) = delete;
  EigCache& operator=(const EigCache&) = delete;

  std::shared_ptr<const HermitianEig> lookup(const CMatrix& h);
  /// exp(-i h tau)
  CMatrix propagator(const CMatrix& h, double tau);

  bool enabled() const { return enabled_; }
  std::size_t size() const;
  std::uint64_t decompositions() const;

 private:
  bool enabled_;
  mutable std::mutex mutex_;
  std::map<std::vector<std::int64_t>, std::shared_ptr<const HermitianEig>> entries_;
  std::uint64_t decompositions_ = 0;
};

/// U_S ... U_1 x_init with U_s = exp(-i H_s tau_s).
CMatrix final_operator(const ControllerSequence& seq, const SwitchingSchedule& sched,
                       EigCache& cache);

struct StoEvaluation {
  double objective = 0.0;
  RVector gradient;  // empty when not requested
};

StoEvaluation evaluate_sto(const ControllerSequence& seq, const SwitchingSchedule& sched,
                           const ObjectiveSpec& spec, EigCache& cache, bool with_gradient);

/// dF/dtau_s by back-propagation. Throws ZeroTraceOverlap for an infidelity
/// whose trace overlap is below 1e-14 in magnitude.
RVector sto_gradient(const ControllerSequence& seq, const SwitchingSchedule& sched,
                     const ObjectiveSpec& spec, EigCache& cache);

/// Euclidean projection onto {x >= 0, sum x = total} (sort-and-threshold).
RVector project_simplex(const RVector& v, double total);

/// max |P_simplex(tau - grad) - tau|
double simplex_kkt(const RVector& tau, const RVector& grad, double total);

struct StoOptions {
  double tol = 1e-8;
  int max_iters = 500;
  bool use_cache = true;
  int lbfgs_memory = 10;

  void validate() const;
};

enum class StoStatus { Converged, MaxIterations, Stalled, Degenerate };

std::string to_string(StoStatus status);

struct StoTraceRow {
  int iter = 0;
  double objective = 0.0;
  double kkt = 0.0;
  double step = 0.0;
};

struct StoResult {
  SwitchingSchedule schedule;
  double initial_objective = 0.0;
  double objective = 0.0;
  double kkt = 0.0;
  int iterations = 0;
  StoStatus status = StoStatus::MaxIterations;
  bool perturbed = false;
  std::uint64_t eigendecompositions = 0;
  std::size_t cache_size = 0;
  std::vector<StoTraceRow> trace;
};

/// Projected L-BFGS with Armijo backtracking, warm-started from the
/// sequence's own durations.
StoResult solve_sto(const ControllerSequence& seq, const ObjectiveSpec& spec, double t_f,
                    const StoOptions& opts = {});
StoResult solve_sto(const ControllerSequence& seq, const ObjectiveSpec& spec, double t_f,
                    const StoOptions& opts, EigCache& cache);

/// Drops intervals with tau <= tol_zero (default 1e-7 t_f when negative),
/// moving their length onto the preceding surviving interval (the following
/// one for a leading run), then merges neighbors with equal control vectors.
std::pair<ControllerSequence, SwitchingSchedule> compress_schedule(
    const ControllerSequence& seq, const SwitchingSchedule& sched, double tol_zero = -1.0);

}  // namespace qswitch
