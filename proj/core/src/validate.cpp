#include "qswitch/validate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "qswitch/error.hpp"
#include "qswitch/io.hpp"
#include "qswitch/pipeline.hpp"
#include "qswitch/rng.hpp"
#include "qswitch/sto.hpp"

namespace qswitch {

namespace fs = std::filesystem;

namespace {

struct Case {
  std::string name;
  Problem problem;
};

std::vector<Case> validation_cases(std::uint64_t seed) {
  std::vector<Case> cases;
  cases.push_back({"energy q=2", build_energy(2, CouplingMatrix::all_ones(2), 2.0)});
  cases.push_back({"energy q=4", build_energy(4, CouplingMatrix::random(4, seed), 2.0)});
  cases.push_back({"cnot", build_cnot(5.0)});
  cases.push_back({"not", build_not(2.0)});
  cases.push_back({"circuit 1x2",
                   build_circuit(1, 2, grid_edges(1, 2), random_unitary(4, seed), 10.0)});
  cases.push_back({"circuit 2x2",
                   build_circuit(2, 2, grid_edges(2, 2), random_unitary(16, seed + 1), 20.0)});
  return cases;
}

ControlGrid random_binary_grid(const FeasibleSet& fs, int n_steps, double t_f, Rng& rng) {
  ControlGrid g = ControlGrid::filled(n_steps, fs.n_ctrl(), t_f, 0.0);
  g.binary = true;
  const auto& cands = fs.candidates();
  int current = static_cast<int>(rng.next() % cands.size());
  for (int k = 0; k < n_steps; ++k) {
    // Runs of repeated controls so the extracted sequence is shorter than T.
    if (rng.uniform() < 0.3) current = static_cast<int>(rng.next() % cands.size());
    g.values.row(k) = cands[static_cast<std::size_t>(current)].transpose();
  }
  return g;
}

ControlGrid random_continuous_grid(int n_steps, int n_ctrl, double t_f, Rng& rng) {
  ControlGrid g = ControlGrid::filled(n_steps, n_ctrl, t_f, 0.0);
  for (int k = 0; k < n_steps; ++k) {
    for (int j = 0; j < n_ctrl; ++j) g.values(k, j) = rng.uniform();
  }
  return g;
}

CheckResult check_unitarity(const std::vector<Case>& cases, const ValidationOptions& opts) {
  CheckResult r{"propagators unitary", true, 0.0, kValidationTol, ""};
  Rng rng(opts.seed);
  int count = 0;
  for (const Case& c : cases) {
    const ControlSystem& sys = c.problem.system;
    const FeasibleSet fs = FeasibleSet::for_system(sys);
    for (int g = 0; g < opts.grids_per_family; ++g) {
      const ControlGrid grid = (g % 2 == 0) ? random_binary_grid(fs, 12, sys.t_f, rng)
                                            : random_continuous_grid(12, sys.n_ctrl(), sys.t_f, rng);
      for (int k = 0; k < grid.n_steps(); ++k) {
        const double err = unitarity_error(expm_skew(sys.hamiltonian(grid.step(k)), grid.dt));
        r.value = std::max(r.value, err);
        ++count;
      }
      const CMatrix x = final_state(sys, grid);
      // Final states of state-preparation problems are vectors; check the norm.
      const double err = x.cols() == 1 ? std::abs(x.norm() - 1.0) : unitarity_error(x);
      r.value = std::max(r.value, err);
      ++count;
    }
  }
  r.passed = r.value <= r.tolerance;
  r.detail = std::to_string(count) + " operators over " + std::to_string(cases.size()) + " systems";
  return r;
}

CheckResult check_sequence_propagator(const std::vector<Case>& cases, const ValidationOptions& opts) {
  CheckResult r{"sequence propagator matches simulation", true, 0.0, kValidationTol, ""};
  Rng rng(opts.seed + 7);
  int count = 0;
  for (const Case& c : cases) {
    const ControlSystem& sys = c.problem.system;
    const FeasibleSet fs = FeasibleSet::for_system(sys);
    for (int g = 0; g < opts.grids_per_family; ++g) {
      const ControlGrid grid = random_binary_grid(fs, 20, sys.t_f, rng);
      const ControllerSequence seq = extract_sequence(sys, grid);
      EigCache cache;
      const CMatrix via_sequence = final_operator(seq, initial_schedule(seq), cache);
      r.value = std::max(r.value, max_abs(via_sequence - final_state(sys, grid)));
      ++count;
    }
  }
  r.passed = r.value <= r.tolerance;
  r.detail = std::to_string(count) + " binary grids";
  return r;
}

double vector_list_error(const std::vector<RVector>& a, const std::vector<RVector>& b) {
  if (a.size() != b.size()) return INFINITY;
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return INFINITY;
    err = std::max(err, (a[i] - b[i]).cwiseAbs().maxCoeff());
  }
  return err;
}

double list_error(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double err = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
  return err;
}

// Exact equality is expected everywhere: doubles are written with 17
// significant digits.
CheckResult check_round_trips(const ValidationOptions& opts) {
  CheckResult r{"output files round-trip", true, 0.0, 0.0, ""};
  const bool own_dir = opts.scratch_dir.empty();
  fs::path dir = opts.scratch_dir;
  if (own_dir) {
    std::ostringstream name;
    name << "qswitch-validate-" << opts.seed << "-" << std::hex << Rng(opts.seed).next();
    dir = fs::temp_directory_path() / name.str();
  }
  std::vector<std::string> failures;
  auto record = [&](const std::string& what, double err) {
    r.value = std::max(r.value, err);
    if (!(err <= r.tolerance)) failures.push_back(what);
  };

  try {
    RunConfig cfg;
    cfg.instance = "Energy2";
    cfg.n_steps = 10;
    cfg.seed = opts.seed;
    cfg.relax_max_iters = 200;
    const fs::path out = dir / "run";
    cfg.output_dir = out.string();
    const RunReport rep = run_pipeline(cfg);
    const auto& labels = rep.run.problem.system.labels;

    const BinaryControls bc = binary_controls_from_json(read_file(out / "binary_controls.json"));
    record("binary_controls.json",
           (bc.labels == labels && bc.dt == rep.binary.dt && bc.values.rows() == rep.binary.values.rows() &&
            bc.values.cols() == rep.binary.values.cols())
               ? (bc.values - rep.binary.values).cwiseAbs().maxCoeff()
               : INFINITY);

    const SequenceFile sf = sequence_from_json(read_file(out / "sequence.json"));
    record("sequence.json", std::max(list_error(sf.durations, rep.sequence.durations),
                                     vector_list_error(sf.control_vectors, rep.sequence.control_vectors)));

    const ScheduleFile sched = schedule_from_json(read_file(out / "schedule.json"));
    record("schedule.json",
           std::max({list_error(sched.durations, rep.optimized_schedule.durations),
                     vector_list_error(sched.control_vectors, rep.optimized_sequence.control_vectors),
                     std::abs(sched.t_f - rep.optimized_schedule.t_f),
                     std::abs(sched.objective - rep.objective_optimized),
                     sched.iters == rep.sto.iterations ? 0.0 : INFINITY}));

    const auto points = step_points_from_csv(read_file(out / "controls_binary.csv"));
    record("controls_binary.csv", points == step_points(rep.binary, labels) ? 0.0 : INFINITY);

    const auto parsed = nlohmann::json::parse(read_file(out / "report.json"));
    record("report.json", (parsed.at("objective_binary").get<double>() == rep.objective_binary &&
                           parsed.at("objective_optimized").get<double>() == rep.objective_optimized)
                              ? 0.0
                              : INFINITY);

    const CsvTable table = CsvTable::parse(read_file(out / "report.csv"));
    record("report.csv", table.to_string() == report_to_csv(rep).to_string() ? 0.0 : INFINITY);

    const CMatrix u = random_unitary(8, opts.seed);
    save_target(dir / "target.json", u);
    record("target.json", max_abs(load_target(dir / "target.json") - u));
  } catch (const std::exception& e) {
    failures.push_back(std::string("exception: ") + e.what());
    r.value = INFINITY;
  }
  if (own_dir) {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  r.passed = failures.empty();
  if (failures.empty()) {
    r.detail = "7 files";
  } else {
    for (const auto& f : failures) r.detail += (r.detail.empty() ? "" : "; ") + f;
  }
  return r;
}

}  // namespace

std::vector<CheckResult> run_validation(const ValidationOptions& opts) {
  if (opts.grids_per_family < 1) throw Error(ErrorCode::Config, "grids_per_family must be >= 1");
  const std::vector<Case> cases = validation_cases(opts.seed);
  return {check_unitarity(cases, opts), check_sequence_propagator(cases, opts), check_round_trips(opts)};
}

}  // namespace qswitch
