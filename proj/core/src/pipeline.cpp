#include "qswitch/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/QR>

#include "json.hpp"
#include "qswitch/error.hpp"
#include "qswitch/rng.hpp"

namespace qswitch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

const std::vector<InstanceSpec>& instance_registry() {
  static const std::vector<InstanceSpec> registry = {
      {"Energy2", "energy", 2, 2, 2.0, 40, 0.0, 0.1, 0.075},
      {"Energy4", "energy", 4, 2, 2.0, 40, 0.0, 0.15, 0.015},
      {"Energy6", "energy", 6, 2, 5.0, 100, 0.0, 0.015, 0.01},
      {"CNOT5", "cnot", 2, 2, 5.0, 100, 0.0, 0.02, 0.02},
      {"CNOT10", "cnot", 2, 2, 10.0, 200, 0.0, 0.003, 0.008},
      {"CNOT20", "cnot", 2, 2, 20.0, 400, 0.0, 0.01, 0.015},
      {"NOT2", "not", 1, 2, 2.0, 20, 0.0, 0.01, 0.03},
      {"NOT6", "not", 1, 2, 6.0, 60, 0.0, 0.0015, 0.015},
      {"NOT10", "not", 1, 2, 10.0, 100, 0.0, 0.009, 0.035},
      {"CircuitH2", "circuit", 2, 5, 10.0, 100, 1.0, 0.045, 0.01},
      {"CircuitLiH", "circuit", 4, 12, 20.0, 200, 0.1, 0.03, 0.06},
      {"CircuitBeH2", "circuit", 6, 19, 20.0, 200, 0.01, 0.03, 0.2},
  };
  return registry;
}

const InstanceSpec& find_instance(const std::string& name) {
  for (const InstanceSpec& spec : instance_registry()) {
    if (spec.name == name) return spec;
  }
  std::string known;
  for (const InstanceSpec& spec : instance_registry()) known += (known.empty() ? "" : ", ") + spec.name;
  throw Error(ErrorCode::Config, "unknown instance '" + name + "' (known: " + known + ")");
}

CMatrix random_unitary(Eigen::Index dim, std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::InvalidArgument, "unitary dimension must be >= 1");
  Rng rng(seed);
  CMatrix z(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) z(i, j) = Complex(rng.normal(), rng.normal());
  }
  const Eigen::HouseholderQR<CMatrix> qr(z);
  CMatrix q = qr.householderQ() * CMatrix::Identity(dim, dim);
  const CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double mag = std::abs(r(j, j));
    if (mag > 0.0) q.col(j) *= r(j, j) / mag;
  }
  return q;
}

Problem build_instance(const InstanceSpec& spec, const InstanceOptions& opts) {
  Problem p;
  if (spec.family == "energy") {
    const int q = opts.qubits > 0 ? opts.qubits : spec.qubits;
    const CouplingMatrix coupling = (spec.name == "Energy2" && q == 2)
                                        ? CouplingMatrix::all_ones(2)
                                        : CouplingMatrix::random(q, opts.seed);
    p = build_energy(q, coupling, spec.t_f);
  } else if (spec.family == "cnot") {
    p = build_cnot(spec.t_f);
  } else if (spec.family == "not") {
    p = build_not(spec.t_f, opts.not_model);
  } else if (spec.family == "circuit") {
    CMatrix target;
    if (opts.target) {
      target = *opts.target;
    } else if (!opts.target_path.empty()) {
      target = load_target(opts.target_path);
    } else {
      throw Error(ErrorCode::Config,
                  spec.name + " needs a target unitary file (--target path.json)");
    }
    int rows = 1, cols = spec.qubits;
    if (spec.qubits == 4) rows = 2, cols = 2;
    if (spec.qubits == 6) rows = 2, cols = 3;
    p = build_circuit(rows, cols, grid_edges(rows, cols), target, spec.t_f);
  } else {
    throw Error(ErrorCode::Config, "unknown instance family '" + spec.family + "'");
  }
  p.name = spec.name;
  return p;
}

std::string to_string(RoundingMethod method) {
  switch (method) {
    case RoundingMethod::Obj: return "obj";
    case RoundingMethod::Cdiff: return "cdiff";
    case RoundingMethod::Sur: return "sur";
  }
  return "obj";
}

RoundingMethod rounding_method_from_string(const std::string& name) {
  if (name == "obj") return RoundingMethod::Obj;
  if (name == "cdiff") return RoundingMethod::Cdiff;
  if (name == "sur") return RoundingMethod::Sur;
  throw Error(ErrorCode::Config, "unknown rounding method '" + name + "' (expected obj, cdiff or sur)");
}

RelaxConfig PreparedRun::relax_config() const {
  RelaxConfig rc;
  rc.n_steps = n_steps;
  rc.rho = rho;
  rc.max_iters = config.relax_max_iters;
  rc.grad_tol = config.relax_grad_tol;
  rc.init = config.relax_init;
  rc.init_value = config.relax_init_value;
  rc.seed = config.seed;
  rc.lbfgs_memory = config.lbfgs_memory;
  return rc;
}

double PreparedRun::penalty_parameter() const {
  switch (config.method) {
    case RoundingMethod::Obj: return alpha;
    case RoundingMethod::Cdiff: return beta;
    case RoundingMethod::Sur: return 0.0;
  }
  return 0.0;
}

PreparedRun prepare_run(const RunConfig& cfg) {
  PreparedRun run;
  run.config = cfg;
  run.instance = find_instance(cfg.instance);
  if (cfg.qubits > 0) {
    if (run.instance.family != "energy") {
      throw Error(ErrorCode::Config, "--qubits only applies to energy instances");
    }
    run.instance.qubits = cfg.qubits;
  }
  if (cfg.n_steps < 0) throw Error(ErrorCode::Config, "number of time steps must be >= 1");
  run.n_steps = cfg.n_steps > 0 ? cfg.n_steps : run.instance.n_steps;
  run.rho = cfg.rho.value_or(run.instance.rho);
  run.alpha = cfg.alpha.value_or(run.instance.alpha);
  run.beta = cfg.method == RoundingMethod::Sur ? 0.0 : cfg.beta.value_or(run.instance.beta);
  if (!(run.rho >= 0.0) || !(run.alpha >= 0.0) || !(run.beta >= 0.0)) {
    throw Error(ErrorCode::Config, "rho, alpha and beta must be non-negative");
  }
  try {
    run.relax_config().validate();
    cfg.sto.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }

  InstanceOptions opts;
  opts.seed = cfg.seed;
  opts.qubits = cfg.qubits;
  opts.target_path = cfg.target_path;
  opts.not_model = cfg.not_model;
  run.problem = build_instance(run.instance, opts);
  run.instance.n_ctrl = run.problem.system.n_ctrl();
  return run;
}

RunReport run_from_relaxation(const PreparedRun& run, const RelaxResult& relax) {
  const auto total_start = Clock::now();
  const ControlSystem& sys = run.problem.system;
  const ObjectiveSpec& spec = run.problem.objective;

  RunReport report;
  report.run = run;
  report.relax = relax;
  report.tv_continuous = tv_norm(relax.grid);
  report.first_excited_reference = kNaN;
  if (const auto* e = std::get_if<EnergyRatio>(&spec)) {
    report.first_excited_reference = 1.0 - e->e_first_excited / e->e_min;
  }
  if (run.config.skip_round) {
    report.timing.total = seconds_since(total_start);
    return report;
  }

  auto t0 = Clock::now();
  const FeasibleSet fs = FeasibleSet::for_system(sys);
  {
    const OpCountScope counts;
    switch (run.config.method) {
      case RoundingMethod::Obj:
        report.binary = round_obj(sys, spec, relax.grid, run.alpha, fs, run.config.obj_rule);
        break;
      case RoundingMethod::Cdiff:
        report.binary = round_cdiff(relax.grid, run.beta, fs);
        break;
      case RoundingMethod::Sur:
        report.binary = round_cdiff(relax.grid, 0.0, fs);
        break;
    }
    report.round_counts = counts.delta();
  }
  report.has_binary = true;
  report.objective_binary = objective(spec, final_state(sys, report.binary));
  report.tv_binary = tv_norm(report.binary);
  report.timing.round = seconds_since(t0);

  t0 = Clock::now();
  report.sequence = extract_sequence(sys, report.binary);
  report.timing.extract = seconds_since(t0);

  if (run.config.skip_sto) {
    report.timing.total = seconds_since(total_start);
    return report;
  }

  t0 = Clock::now();
  EigCache cache(run.config.sto.use_cache);
  report.sto = solve_sto(report.sequence, spec, sys.t_f, run.config.sto, cache);
  auto [compressed, compressed_sched] = compress_schedule(report.sequence, report.sto.schedule);
  const double f_compressed = evaluate_sto(compressed, compressed_sched, spec, cache, false).objective;
  if (f_compressed <= report.objective_binary) {
    report.optimized_sequence = std::move(compressed);
    report.optimized_schedule = std::move(compressed_sched);
    report.objective_optimized = f_compressed;
  } else {
    report.optimized_sequence = report.sequence;
    report.optimized_sequence.durations = report.sto.schedule.durations;
    report.optimized_schedule = report.sto.schedule;
    report.objective_optimized = report.sto.objective;
  }
  report.tv_optimized = sequence_tv(report.optimized_sequence.control_vectors);
  report.has_optimized = true;
  report.timing.sto = seconds_since(t0);
  report.timing.total = seconds_since(total_start);
  return report;
}

RunReport run_pipeline(const RunConfig& cfg) {
  const auto start = Clock::now();
  const PreparedRun run = prepare_run(cfg);
  const RelaxResult relax = solve_relaxation(run.problem.system, run.problem.objective, run.relax_config());
  const double relax_seconds = seconds_since(start);
  RunReport report = run_from_relaxation(run, relax);
  report.timing.relax = relax_seconds;
  report.timing.total += relax_seconds;
  if (!cfg.output_dir.empty()) write_run_outputs(report, cfg.output_dir);
  return report;
}

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json config_json(const PreparedRun& run) {
  const RunConfig& c = run.config;
  return json{
      {"instance", c.instance},
      {"n_steps", run.n_steps},
      {"rho", run.rho},
      {"alpha", run.alpha},
      {"beta", run.beta},
      {"rounding", to_string(c.method)},
      {"obj_rule", to_string(c.obj_rule)},
      {"seed", c.seed},
      {"qubits", run.instance.qubits},
      {"target", c.target_path},
      {"not_model", c.not_model == NotModel::Resonant ? "resonant" : "as_printed"},
      {"skip_round", c.skip_round},
      {"skip_sto", c.skip_sto},
      {"relax_max_iters", c.relax_max_iters},
      {"relax_grad_tol", c.relax_grad_tol},
      {"relax_init", to_string(c.relax_init)},
      {"relax_init_value", c.relax_init_value},
      {"lbfgs_memory", c.lbfgs_memory},
      {"sto_tol", c.sto.tol},
      {"sto_max_iters", c.sto.max_iters},
      {"sto_cache", c.sto.use_cache},
  };
}

}  // namespace

std::string report_to_json(const RunReport& r, bool with_timing) {
  const ControlSystem& sys = r.run.problem.system;
  json j;
  j["instance"] = r.run.instance.name;
  j["family"] = r.run.instance.family;
  j["config"] = config_json(r.run);
  j["problem"] = {{"qubits", r.run.instance.qubits},
                  {"dim", sys.dim},
                  {"n_ctrl", sys.n_ctrl()},
                  {"t_f", sys.t_f},
                  {"n_steps", r.run.n_steps},
                  {"dt", r.relax.grid.dt},
                  {"feasible_set", to_string(sys.feasible)},
                  {"labels", sys.labels}};
  j["seeds"] = {{"instance", r.run.config.seed}, {"relaxation", r.run.config.seed}};
  j["warnings"] = r.run.problem.warnings;
  j["relaxation"] = {{"objective", r.relax.objective},
                     {"penalty", r.relax.penalty},
                     {"tv", r.tv_continuous},
                     {"iterations", r.relax.iterations},
                     {"stationarity", r.relax.stationarity},
                     {"restarts", r.relax.restarts},
                     {"status", to_string(r.relax.status)}};
  if (r.has_binary) {
    j["rounding"] = {{"method", to_string(r.run.config.method)},
                     {"parameter", r.run.penalty_parameter()},
                     {"objective", r.objective_binary},
                     {"tv", r.tv_binary},
                     {"switches", r.switches_binary()},
                     {"exponentials", r.round_counts.exponentials},
                     {"multiplications", r.round_counts.multiplications}};
  } else {
    j["rounding"] = nullptr;
  }
  if (r.has_optimized) {
    j["sto"] = {{"initial_objective", r.sto.initial_objective},
                {"objective", r.objective_optimized},
                {"solver_objective", r.sto.objective},
                {"kkt", number_or_null(r.sto.kkt)},
                {"iterations", r.sto.iterations},
                {"status", to_string(r.sto.status)},
                {"perturbed", r.sto.perturbed},
                {"eigendecompositions", r.sto.eigendecompositions},
                {"tv", r.tv_optimized},
                {"switches", r.switches_optimized()},
                {"intervals", r.optimized_sequence.size()}};
  } else {
    j["sto"] = nullptr;
  }
  j["objective_continuous"] = r.relax.objective;
  j["objective_binary"] = r.has_binary ? json(r.objective_binary) : json(nullptr);
  j["objective_optimized"] = r.has_optimized ? json(r.objective_optimized) : json(nullptr);
  j["first_excited_reference"] = number_or_null(r.first_excited_reference);
  if (with_timing) {
    j["timing"] = {{"relax", r.timing.relax},
                   {"round", r.timing.round},
                   {"extract", r.timing.extract},
                   {"sto", r.timing.sto},
                   {"total", r.timing.total}};
  }
  return j.dump(2);
}

CsvTable report_to_csv(const RunReport& r) {
  CsvTable t;
  t.header = {"instance", "n_steps", "rounding", "parameter", "objective_continuous",
              "objective_binary", "objective_optimized", "tv_continuous", "tv_binary",
              "tv_optimized", "switches_binary", "switches_optimized", "time_relax",
              "time_round", "time_extract", "time_sto", "time_total"};
  auto num = [](double v) { return format_double(v); };
  t.rows.push_back({r.run.instance.name, std::to_string(r.run.n_steps), to_string(r.run.config.method),
                    num(r.run.penalty_parameter()), num(r.relax.objective),
                    r.has_binary ? num(r.objective_binary) : "",
                    r.has_optimized ? num(r.objective_optimized) : "", num(r.tv_continuous),
                    r.has_binary ? num(r.tv_binary) : "", r.has_optimized ? num(r.tv_optimized) : "",
                    r.has_binary ? std::to_string(r.switches_binary()) : "",
                    r.has_optimized ? std::to_string(r.switches_optimized()) : "",
                    num(r.timing.relax), num(r.timing.round), num(r.timing.extract),
                    num(r.timing.sto), num(r.timing.total)});
  return t;
}

void write_run_outputs(const RunReport& r, const fs::path& dir) {
  const auto& labels = r.run.problem.system.labels;
  write_file_atomic(dir / "report.json", report_to_json(r) + "\n");
  write_file_atomic(dir / "report.csv", report_to_csv(r).to_string());
  write_file_atomic(dir / "controls_continuous.csv",
                    step_points_to_csv(step_points(r.relax.grid, labels)));

  CsvTable relax_trace;
  relax_trace.header = {"iter", "objective", "penalty", "step", "stationarity"};
  for (const auto& row : r.relax.trace) {
    relax_trace.rows.push_back({std::to_string(row.iter), format_double(row.objective),
                                format_double(row.penalty), format_double(row.step),
                                format_double(row.stationarity)});
  }
  write_file_atomic(dir / "relax_trace.csv", relax_trace.to_string());

  if (r.has_binary) {
    write_file_atomic(dir / "controls_binary.csv", step_points_to_csv(step_points(r.binary, labels)));
    write_file_atomic(dir / "binary_controls.json", binary_controls_to_json(r.binary, labels) + "\n");
    write_file_atomic(dir / "sequence.json", sequence_to_json(r.sequence) + "\n");
  }
  if (r.has_optimized) {
    write_file_atomic(dir / "controls_optimized.csv",
                      step_points_to_csv(step_points(r.optimized_schedule.durations,
                                                     r.optimized_sequence.control_vectors, labels)));
    ScheduleFile sched;
    sched.t_f = r.optimized_schedule.t_f;
    sched.durations = r.optimized_schedule.durations;
    sched.control_vectors = r.optimized_sequence.control_vectors;
    sched.objective = r.objective_optimized;
    sched.kkt = r.sto.kkt;
    sched.iters = r.sto.iterations;
    write_file_atomic(dir / "schedule.json", schedule_to_json(sched) + "\n");

    CsvTable sto_trace;
    sto_trace.header = {"iter", "objective", "kkt", "step"};
    for (const auto& row : r.sto.trace) {
      sto_trace.rows.push_back({std::to_string(row.iter), format_double(row.objective),
                                format_double(row.kkt), format_double(row.step)});
    }
    write_file_atomic(dir / "sto_trace.csv", sto_trace.to_string());
  }
}

std::string to_string(SweepParam param) { return param == SweepParam::Alpha ? "alpha" : "beta"; }

std::vector<SweepSummaryRow> SweepTable::summary() const {
  std::vector<SweepSummaryRow> out;
  std::vector<int> counts;
  for (const SweepRow& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SweepSummaryRow& s) { return s.value == row.value; });
    if (it == out.end()) {
      out.push_back({row.value, 0.0, 0.0, 0.0, 0.0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    const auto idx = static_cast<std::size_t>(it - out.begin());
    it->mean_objective_binary += row.objective_binary;
    it->mean_objective_optimized += row.objective_optimized;
    it->mean_tv_binary += row.tv_binary;
    it->mean_tv_optimized += row.tv_optimized;
    ++counts[idx];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double n = counts[i];
    out[i].mean_objective_binary /= n;
    out[i].mean_objective_optimized /= n;
    out[i].mean_tv_binary /= n;
    out[i].mean_tv_optimized /= n;
  }
  return out;
}

CsvTable SweepTable::to_csv() const {
  CsvTable t;
  t.header = {"seed", to_string(param), "objective_continuous", "objective_binary",
              "objective_optimized", "tv_binary", "tv_optimized", "first_excited_reference",
              "seconds"};
  for (const SweepRow& r : rows) {
    t.rows.push_back({std::to_string(r.seed), format_double(r.value),
                      format_double(r.objective_continuous), format_double(r.objective_binary),
                      format_double(r.objective_optimized), format_double(r.tv_binary),
                      format_double(r.tv_optimized),
                      std::isfinite(r.first_excited_reference) ? format_double(r.first_excited_reference) : "",
                      format_double(r.seconds)});
  }
  return t;
}

CsvTable SweepTable::summary_csv() const {
  CsvTable t;
  t.header = {to_string(param), "mean_objective_binary", "mean_objective_optimized",
              "mean_tv_binary", "mean_tv_optimized"};
  for (const SweepSummaryRow& s : summary()) {
    t.rows.push_back({format_double(s.value), format_double(s.mean_objective_binary),
                      format_double(s.mean_objective_optimized), format_double(s.mean_tv_binary),
                      format_double(s.mean_tv_optimized)});
  }
  return t;
}

std::vector<double> default_penalty_grid() {
  std::vector<double> grid;
  for (int n = 4; n >= 1; --n) {
    const double lo = std::pow(10.0, -n);
    const double step = 5.0 * std::pow(10.0, -n - 1);
    for (int i = 0; i <= 18; ++i) {
      const double v = lo + i * step;
      if (grid.empty() || v > grid.back() * (1.0 + 1e-12)) grid.push_back(v);
    }
  }
  return grid;
}

SweepTable sweep(const RunConfig& base, SweepParam param, const std::vector<double>& values,
                 const std::vector<std::uint64_t>& seeds) {
  if (values.empty()) throw Error(ErrorCode::Config, "sweep needs at least one parameter value");
  if (seeds.empty()) throw Error(ErrorCode::Config, "sweep needs at least one seed");
  for (double v : values) {
    if (!(v >= 0.0)) throw Error(ErrorCode::Config, "sweep values must be non-negative");
  }

  std::vector<PreparedRun> runs;
  for (std::uint64_t seed : seeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    cfg.method = param == SweepParam::Alpha ? RoundingMethod::Obj : RoundingMethod::Cdiff;
    cfg.skip_round = false;
    runs.push_back(prepare_run(cfg));
  }
  std::vector<RelaxResult> relaxations(runs.size());
  std::vector<double> relax_seconds(runs.size());
  parallel_for(runs.size(), [&](std::size_t i) {
    const auto start = Clock::now();
    relaxations[i] = solve_relaxation(runs[i].problem.system, runs[i].problem.objective,
                                      runs[i].relax_config());
    relax_seconds[i] = seconds_since(start);
  });

  SweepTable table;
  table.param = param;
  table.rows.resize(runs.size() * values.size());
  parallel_for(table.rows.size(), [&](std::size_t idx) {
    const std::size_t i = idx / values.size();
    const double value = values[idx % values.size()];
    PreparedRun run = runs[i];
    if (param == SweepParam::Alpha) {
      run.alpha = value;
    } else {
      run.beta = value;
    }
    const RunReport rep = run_from_relaxation(run, relaxations[i]);
    SweepRow& row = table.rows[idx];
    row.seed = run.config.seed;
    row.value = value;
    row.objective_continuous = rep.relax.objective;
    row.objective_binary = rep.objective_binary;
    row.objective_optimized = rep.has_optimized ? rep.objective_optimized : rep.objective_binary;
    row.tv_binary = rep.tv_binary;
    row.tv_optimized = rep.has_optimized ? rep.tv_optimized : rep.tv_binary;
    row.first_excited_reference = rep.first_excited_reference;
    row.seconds = rep.timing.total + relax_seconds[i];
  });
  return table;
}

std::vector<TimestepRow> timesteps_study(const RunConfig& base, const std::vector<int>& steps) {
  if (steps.size() < 2) throw Error(ErrorCode::Config, "time-step study needs at least two values of T");
  for (int t : steps) {
    if (t < 1) throw Error(ErrorCode::Config, "time-step counts must be >= 1");
  }
  std::vector<TimestepRow> rows(steps.size());
  parallel_for(steps.size(), [&](std::size_t i) {
    RunConfig cfg = base;
    cfg.n_steps = steps[i];
    cfg.output_dir.clear();
    const RunReport rep = run_pipeline(cfg);
    TimestepRow& row = rows[i];
    row.n_steps = steps[i];
    row.objective_continuous = rep.relax.objective;
    row.objective_binary = rep.has_binary ? rep.objective_binary : kNaN;
    row.objective_optimized = rep.has_optimized ? rep.objective_optimized : kNaN;
    row.tv_optimized = rep.has_optimized ? rep.tv_optimized : kNaN;
    row.seconds = rep.timing.total;
  });
  return rows;
}

CsvTable timesteps_csv(const std::vector<TimestepRow>& rows) {
  CsvTable t;
  t.header = {"n_steps", "objective_continuous", "objective_binary", "objective_optimized",
              "tv_optimized", "seconds"};
  for (const TimestepRow& r : rows) {
    t.rows.push_back({std::to_string(r.n_steps), format_double(r.objective_continuous),
                      format_double(r.objective_binary), format_double(r.objective_optimized),
                      format_double(r.tv_optimized), format_double(r.seconds)});
  }
  return t;
}

int worker_threads(std::size_t jobs) {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QSWITCH_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) n = static_cast<int>(v);
  }
  n = std::max(n, 1);
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(jobs, 1)));
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int threads = worker_threads(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace qswitch
