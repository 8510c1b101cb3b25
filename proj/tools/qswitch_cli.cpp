// qswitch: relaxation, rounding and switching-time optimization for
// piecewise-constant quantum control.
//
// Exit status: 0 success, 2 configuration or input error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qswitch/error.hpp"
#include "qswitch/io.hpp"
#include "qswitch/pipeline.hpp"
#include "qswitch/validate.hpp"

namespace {

using namespace qswitch;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct RunFlags {
  RunConfig cfg;
  std::string method = "obj";
  std::string obj_rule = "verbatim";
  std::string relax_init = "uniform";
  std::string not_model = "resonant";
  double rho = NAN, alpha = NAN, beta = NAN;
  bool no_cache = false;

  RunConfig resolve() const {
    RunConfig c = cfg;
    c.method = rounding_method_from_string(method);
    try {
      c.obj_rule = obj_rule_from_string(obj_rule);
      c.relax_init = relax_init_from_string(relax_init);
    } catch (const Error& e) {
      throw Error(ErrorCode::Config, e.what());
    }
    if (not_model == "resonant") {
      c.not_model = NotModel::Resonant;
    } else if (not_model == "as_printed") {
      c.not_model = NotModel::AsPrinted;
    } else {
      throw Error(ErrorCode::Config, "unknown NOT model '" + not_model + "'");
    }
    if (!std::isnan(rho)) c.rho = rho;
    if (!std::isnan(alpha)) c.alpha = alpha;
    if (!std::isnan(beta)) c.beta = beta;
    c.sto.use_cache = !no_cache;
    return c;
  }
};

void add_instance_flags(CLI::App* app, RunFlags& f, bool required_instance = true) {
  auto* inst = app->add_option("-i,--instance", f.cfg.instance, "Registered instance name");
  if (required_instance) inst->required();
  app->add_option("--seed", f.cfg.seed, "Seed for random couplings and random starts");
  app->add_option("--qubits", f.cfg.qubits, "Qubit count override (energy instances)");
  app->add_option("--target", f.cfg.target_path, "Target unitary JSON (circuit instances)");
  app->add_option("--not-model", f.not_model, "NOT system variant: resonant or as_printed");
}

void add_run_flags(CLI::App* app, RunFlags& f) {
  add_instance_flags(app, f);
  app->add_option("-T,--steps", f.cfg.n_steps, "Number of time steps (0: instance default)");
  app->add_option("--rho", f.rho, "SOS1 penalty weight");
  app->add_option("--alpha", f.alpha, "Obj rounding switching penalty");
  app->add_option("--beta", f.beta, "Cdiff rounding switching penalty");
  app->add_option("--rounding", f.method, "Rounding method: obj, cdiff or sur");
  app->add_option("--obj-rule", f.obj_rule, "Obj keep rule: verbatim or delta");
  app->add_flag("--skip-round", f.cfg.skip_round, "Stop after the relaxation");
  app->add_flag("--skip-sto", f.cfg.skip_sto, "Stop after rounding");
  app->add_option("--relax-max-iters", f.cfg.relax_max_iters);
  app->add_option("--relax-grad-tol", f.cfg.relax_grad_tol);
  app->add_option("--relax-init", f.relax_init, "uniform, constant or random");
  app->add_option("--relax-init-value", f.cfg.relax_init_value);
  app->add_option("--lbfgs-memory", f.cfg.lbfgs_memory);
  app->add_option("--sto-tol", f.cfg.sto.tol);
  app->add_option("--sto-max-iters", f.cfg.sto.max_iters);
  app->add_flag("--no-cache", f.no_cache, "Decompose every interval Hamiltonian afresh");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(item, &used));
      } else {
        out.push_back(static_cast<T>(std::stoll(item, &used)));
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  return out;
}

void print_summary(const RunReport& r) {
  std::printf("%s  T=%d  relaxation %.6e (%s, %d iters)\n", r.run.instance.name.c_str(),
              r.run.n_steps, r.relax.objective, to_string(r.relax.status).c_str(),
              r.relax.iterations);
  if (r.has_binary) {
    std::printf("  %s rounding  objective %.6e  TV %g  switches %d\n",
                to_string(r.run.config.method).c_str(), r.objective_binary, r.tv_binary,
                r.switches_binary());
  }
  if (r.has_optimized) {
    std::printf("  STO  objective %.6e  TV %g  kkt %.2e  (%s, %d iters)\n", r.objective_optimized,
                r.tv_optimized, r.sto.kkt, to_string(r.sto.status).c_str(), r.sto.iterations);
  }
  std::printf("  time %.3fs (relax %.3f, round %.3f, extract %.3f, sto %.3f)\n", r.timing.total,
              r.timing.relax, r.timing.round, r.timing.extract, r.timing.sto);
}

nlohmann::json matrix_json(const CMatrix& m) {
  nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r, c;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      r.push_back(m(i, j).real());
      c.push_back(m(i, j).imag());
    }
    re.push_back(r);
    im.push_back(c);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"re", re}, {"im", im}};
}

int gen_instance(const RunFlags& flags, const std::string& out_dir, bool random_target) {
  const RunConfig cfg = flags.resolve();
  const InstanceSpec& spec = find_instance(cfg.instance);
  InstanceOptions opts;
  opts.seed = cfg.seed;
  opts.qubits = cfg.qubits;
  opts.not_model = cfg.not_model;
  opts.target_path = cfg.target_path;
  const fs::path dir = out_dir;

  if (spec.family == "circuit" && cfg.target_path.empty()) {
    if (!random_target) {
      throw Error(ErrorCode::Config, spec.name + " needs --target or --random-target");
    }
    const CMatrix u = random_unitary(Eigen::Index{1} << spec.qubits, cfg.seed);
    save_target(dir / "target.json", u);
    opts.target = u;
    std::printf("wrote %s\n", (dir / "target.json").c_str());
  }

  const Problem p = build_instance(spec, opts);
  nlohmann::json sys;
  sys["name"] = p.name;
  sys["dim"] = p.system.dim;
  sys["t_f"] = p.system.t_f;
  sys["feasible_set"] = to_string(p.system.feasible);
  sys["labels"] = p.system.labels;
  sys["drift"] = matrix_json(p.system.drift);
  sys["controllers"] = nlohmann::json::array();
  for (const CMatrix& h : p.system.controllers) sys["controllers"].push_back(matrix_json(h));
  sys["x_init"] = matrix_json(p.system.x_init);
  sys["seed"] = cfg.seed;
  sys["warnings"] = p.warnings;
  write_file_atomic(dir / "system.json", sys.dump(2) + "\n");
  std::printf("wrote %s\n", (dir / "system.json").c_str());

  if (spec.family == "energy") {
    const int q = cfg.qubits > 0 ? cfg.qubits : spec.qubits;
    const CouplingMatrix j = (spec.name == "Energy2" && q == 2) ? CouplingMatrix::all_ones(2)
                                                                 : CouplingMatrix::random(q, cfg.seed);
    nlohmann::json jj;
    jj["qubits"] = q;
    jj["seed"] = cfg.seed;
    jj["J"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < j.j.rows(); ++r) {
      std::vector<double> row;
      for (Eigen::Index c = 0; c < j.j.cols(); ++c) row.push_back(j.j(r, c));
      jj["J"].push_back(row);
    }
    write_file_atomic(dir / "coupling.json", jj.dump(2) + "\n");
    std::printf("wrote %s\n", (dir / "coupling.json").c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum control with few switches: relax, round, optimize switching times"};
  app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");
  app.require_subcommand(1);

  RunFlags run_flags;
  std::string run_out;
  bool json_stdout = false;
  auto* run = app.add_subcommand("run", "Relaxation, rounding and switching-time optimization");
  add_run_flags(run, run_flags);
  run->add_option("-o,--out", run_out, "Output directory for report and plot data");
  run->add_flag("--json", json_stdout, "Print the report JSON instead of the summary");

  RunFlags sweep_flags;
  std::string sweep_param = "alpha", sweep_values, sweep_seeds = "1", sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "Switching-penalty sensitivity sweep");
  add_run_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--param", sweep_param, "alpha (Obj rounding) or beta (Cdiff rounding)")
      ->check(CLI::IsMember({"alpha", "beta"}));
  sweep_cmd->add_option("--values", sweep_values, "Comma-separated values (default: decade grid)");
  sweep_cmd->add_option("--seeds", sweep_seeds, "Comma-separated seeds");
  sweep_cmd->add_option("-o,--out", sweep_out, "Output directory")->required();

  RunFlags ts_flags;
  std::string ts_steps, ts_out;
  auto* ts_cmd = app.add_subcommand("timesteps", "Compare time-step counts");
  add_run_flags(ts_cmd, ts_flags);
  ts_cmd->add_option("--steps-list", ts_steps, "Comma-separated T values")->required();
  ts_cmd->add_option("-o,--out", ts_out, "Output directory")->required();

  ValidationOptions vopts;
  std::string vscratch;
  auto* val_cmd = app.add_subcommand("validate", "Run the invariant suite");
  val_cmd->add_option("--seed", vopts.seed);
  val_cmd->add_option("--grids", vopts.grids_per_family, "Random grids per system");
  val_cmd->add_option("--scratch", vscratch, "Scratch directory for file round-trips");

  RunFlags gen_flags;
  std::string gen_out;
  bool gen_random_target = false;
  auto* gen_cmd = app.add_subcommand("gen-instance", "Write seeded couplings, targets and system matrices");
  add_instance_flags(gen_cmd, gen_flags);
  gen_cmd->add_option("-o,--out", gen_out, "Output directory")->required();
  gen_cmd->add_flag("--random-target", gen_random_target, "Draw a seeded random target for circuit instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) {
      RunConfig cfg = run_flags.resolve();
      cfg.output_dir = run_out;
      const RunReport rep = run_pipeline(cfg);
      if (json_stdout) {
        std::cout << report_to_json(rep) << "\n";
      } else {
        print_summary(rep);
        if (!run_out.empty()) std::printf("  outputs in %s\n", run_out.c_str());
      }
    } else if (sweep_cmd->parsed()) {
      const RunConfig cfg = sweep_flags.resolve();
      const SweepParam param = sweep_param == "alpha" ? SweepParam::Alpha : SweepParam::Beta;
      const std::vector<double> values =
          sweep_values.empty() ? default_penalty_grid() : parse_list<double>(sweep_values, "value");
      const auto seeds = parse_list<std::uint64_t>(sweep_seeds, "seed");
      const SweepTable table = sweep(cfg, param, values, seeds);
      const fs::path dir = sweep_out;
      write_file_atomic(dir / "sweep.csv", table.to_csv().to_string());
      write_file_atomic(dir / "sweep_summary.csv", table.summary_csv().to_string());
      std::printf("%-12s %-16s %-16s %-10s %-10s\n", to_string(param).c_str(), "obj_binary",
                  "obj_optimized", "tv_binary", "tv_opt");
      for (const SweepSummaryRow& s : table.summary()) {
        std::printf("%-12g %-16.6e %-16.6e %-10g %-10g\n", s.value, s.mean_objective_binary,
                    s.mean_objective_optimized, s.mean_tv_binary, s.mean_tv_optimized);
      }
      std::printf("wrote %s and %s\n", (dir / "sweep.csv").c_str(), (dir / "sweep_summary.csv").c_str());
    } else if (ts_cmd->parsed()) {
      const RunConfig cfg = ts_flags.resolve();
      const auto rows = timesteps_study(cfg, parse_list<int>(ts_steps, "time-step"));
      const fs::path dir = ts_out;
      write_file_atomic(dir / "timesteps.csv", timesteps_csv(rows).to_string());
      for (const TimestepRow& r : rows) {
        std::printf("T=%-5d relax %.6e  binary %.6e  optimized %.6e  TV %g  %.2fs\n", r.n_steps,
                    r.objective_continuous, r.objective_binary, r.objective_optimized,
                    r.tv_optimized, r.seconds);
      }
      std::printf("wrote %s\n", (dir / "timesteps.csv").c_str());
    } else if (val_cmd->parsed()) {
      vopts.scratch_dir = vscratch;
      bool all = true;
      for (const CheckResult& c : run_validation(vopts)) {
        std::printf("%s  %-40s worst %.3e (tol %.1e)  %s\n", c.passed ? "PASS" : "FAIL",
                    c.name.c_str(), c.value, c.tolerance, c.detail.c_str());
        all = all && c.passed;
      }
      return all ? 0 : kExitNumerical;
    } else if (gen_cmd->parsed()) {
      return gen_instance(gen_flags, gen_out, gen_random_target);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_config_error() ? kExitConfig : kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
