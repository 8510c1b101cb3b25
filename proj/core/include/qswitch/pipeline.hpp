#pragma once

// End-to-end runs: relaxation, rounding, sequence extraction and
// switching-time optimization over the named benchmark instances, plus
// penalty sweeps and time-step studies.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qswitch/io.hpp"
#include "qswitch/problems.hpp"
#include "qswitch/relaxation.hpp"
#include "qswitch/rounding.hpp"
#include "qswitch/sto.hpp"

namespace qswitch {

/// One named benchmark instance with its default parameters. rho is 0 where
/// the instance uses no SOS1 penalty.
struct InstanceSpec {
  std::string name;
  std::string family;  // energy, cnot, not, circuit
  int qubits = 0;
  int n_ctrl = 0;
  double t_f = 0.0;
  int n_steps = 0;
  double rho = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

const std::vector<InstanceSpec>& instance_registry();
/// Throws Config for an unknown name.
const InstanceSpec& find_instance(const std::string& name);

struct InstanceOptions {
  std::uint64_t seed = 1;
  int qubits = 0;  // energy family: override the qubit count
  std::string target_path;
  std::optional<CMatrix> target;
  NotModel not_model = NotModel::Resonant;
};

Problem build_instance(const InstanceSpec& spec, const InstanceOptions& opts);

/// Haar-distributed unitary from the QR factorization of a seeded complex
/// Gaussian matrix.
CMatrix random_unitary(Eigen::Index dim, std::uint64_t seed);

enum class RoundingMethod { Obj, Cdiff, Sur };

std::string to_string(RoundingMethod method);
RoundingMethod rounding_method_from_string(const std::string& name);

struct RunConfig {
  std::string instance;
  int n_steps = 0;  // 0: instance default
  std::optional<double> rho;
  std::optional<double> alpha;
  std::optional<double> beta;
  RoundingMethod method = RoundingMethod::Obj;
  ObjRule obj_rule = ObjRule::Verbatim;
  std::uint64_t seed = 1;
  int qubits = 0;
  std::string target_path;
  NotModel not_model = NotModel::Resonant;
  bool skip_round = false;
  bool skip_sto = false;

  int relax_max_iters = 5000;
  double relax_grad_tol = 1e-6;
  RelaxInit relax_init = RelaxInit::Uniform;
  double relax_init_value = 0.5;
  int lbfgs_memory = 10;

  StoOptions sto;

  std::string output_dir;  // empty: nothing written
};

/// Instance, problem and effective parameters of a configured run.
struct PreparedRun {
  RunConfig config;
  InstanceSpec instance;
  Problem problem;
  int n_steps = 0;
  double rho = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  RelaxConfig relax_config() const;
  double penalty_parameter() const;
};

PreparedRun prepare_run(const RunConfig& cfg);

struct StageTiming {
  double relax = 0.0;
  double round = 0.0;
  double extract = 0.0;
  double sto = 0.0;
  double total = 0.0;
};

struct RunReport {
  PreparedRun run;

  RelaxResult relax;
  double tv_continuous = 0.0;

  bool has_binary = false;
  ControlGrid binary;
  double objective_binary = 0.0;
  double tv_binary = 0.0;
  OpCounts round_counts;
  ControllerSequence sequence;

  bool has_optimized = false;
  StoResult sto;
  ControllerSequence optimized_sequence;
  SwitchingSchedule optimized_schedule;
  double objective_optimized = 0.0;
  double tv_optimized = 0.0;

  /// Energy instances: 1 - E_fe / E_min, the objective of the first excited
  /// level. NaN otherwise.
  double first_excited_reference = 0.0;

  StageTiming timing;

  int switches_binary() const { return sequence.size() - 1; }
  int switches_optimized() const { return optimized_sequence.size() - 1; }
};

RunReport run_pipeline(const RunConfig& cfg);
/// Runs rounding onward from an existing relaxation of the same problem.
RunReport run_from_relaxation(const PreparedRun& run, const RelaxResult& relax);

/// Report as JSON. Wall-clock numbers live under "timing" and are dropped
/// when `with_timing` is false.
std::string report_to_json(const RunReport& report, bool with_timing = true);
CsvTable report_to_csv(const RunReport& report);

/// report.json, report.csv, controls_{continuous,binary,optimized}.csv,
/// binary_controls.json, sequence.json, schedule.json, relax_trace.csv,
/// sto_trace.csv (files of skipped stages are omitted).
void write_run_outputs(const RunReport& report, const std::filesystem::path& dir);

enum class SweepParam { Alpha, Beta };

std::string to_string(SweepParam param);

struct SweepRow {
  std::uint64_t seed = 0;
  double value = 0.0;
  double objective_continuous = 0.0;
  double objective_binary = 0.0;
  double objective_optimized = 0.0;
  double tv_binary = 0.0;
  double tv_optimized = 0.0;
  double first_excited_reference = 0.0;
  double seconds = 0.0;
};

struct SweepSummaryRow {
  double value = 0.0;
  double mean_objective_binary = 0.0;
  double mean_objective_optimized = 0.0;
  double mean_tv_binary = 0.0;
  double mean_tv_optimized = 0.0;
};

struct SweepTable {
  SweepParam param = SweepParam::Alpha;
  std::vector<SweepRow> rows;  // seed-major, values in the given order

  std::vector<SweepSummaryRow> summary() const;
  CsvTable to_csv() const;
  CsvTable summary_csv() const;
};

/// Penalty values 10^-n + i 5 10^-(n+1) for n = 1..4 covering [1e-4, 1].
std::vector<double> default_penalty_grid();

/// One relaxation per seed, then rounding and STO for every value. alpha
/// sweeps use objective rounding, beta sweeps cumulative-difference rounding.
SweepTable sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values,
                 const std::vector<std::uint64_t>& seeds);

struct TimestepRow {
  int n_steps = 0;
  double objective_continuous = 0.0;
  double objective_binary = 0.0;
  double objective_optimized = 0.0;
  double tv_optimized = 0.0;
  double seconds = 0.0;
};

/// Needs at least two step counts.
std::vector<TimestepRow> timesteps_study(const RunConfig& base, const std::vector<int>& steps);
CsvTable timesteps_csv(const std::vector<TimestepRow>& rows);

/// Worker count: QSWITCH_THREADS if set and positive, else the hardware
/// concurrency, never more than `jobs`.
int worker_threads(std::size_t jobs);

/// Calls fn(i) for i in [0, n) on worker_threads(n) threads. The first
/// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace qswitch
