// fairpart command-line tool.
//
// Exit codes:
//   0  success
//   1  usage error (bad flags or arguments)
//   2  configuration error
//   3  data error (unreadable, malformed or inconsistent input files)
//   4  the solver diverged (non-finite weights)
//   5  an oracle check failed
//   6  unexpected internal error

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "fairpart/config.hpp"
#include "fairpart/errors.hpp"
#include "fairpart/oracle.hpp"
#include "fairpart/partition.hpp"
#include "fairpart/report.hpp"
#include "fairpart/solver.hpp"

namespace fs = std::filesystem;
using namespace fairpart;

namespace {

enum Exit : int { ok = 0, usage = 1, config = 2, data = 3, diverged = 4, oracle_failed = 5, internal = 6 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "Run config (JSON)")->required();
  cmd->add_option("--set", c.overrides, "Override a config leaf: dotted.path=value")->take_all();
}

RunConfig load(const Common& c) { return load_run_config(c.config_path, c.overrides); }

Problem prepare(const RunConfig& cfg) {
  auto problem = build_problem(cfg);
  for (const auto& w : problem.warnings) std::cerr << "warning: " << w << '\n';
  fs::create_directories(cfg.output_dir);
  return problem;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << content;
}

void write_trace(const std::vector<TraceRow>& trace, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "n,dual_estimate,stderr,max_fairness_dev\n" << std::setprecision(17);
  for (const auto& r : trace)
    out << r.n << ',' << r.dual_estimate << ',' << r.std_error << ',' << r.max_fairness_dev << '\n';
}

/// Report, CDFs and (for site populations) the assignment table.
FairnessReport write_report_artifacts(const WeightMatrix& weights, const Problem& problem,
                                      const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  const auto report = evaluate(weights, *problem.population, *problem.cost,
                               cfg.solver.eval_samples, evaluation_seed(cfg.seed));
  save_report(report, dir / "report.json");
  save_cdfs(report, dir);
  if (problem.discrete) {
    const PartitionHandle handle(weights, problem.population, problem.cost);
    save_assignment_table(assign_all_sites(handle, *problem.discrete),
                          problem.population->group_count(), dir / "assignment.csv");
  }
  return report;
}

void print_report(const FairnessReport& r) {
  std::cout << std::setprecision(6) << "region masses:";
  for (double m : r.p_hat) std::cout << ' ' << m;
  std::cout << "\nmax fairness deviation: " << r.max_deviation
            << "\nexpected cost: " << r.expected_cost << "\nclosed facilities:";
  for (auto k : closed_facilities(r.p_hat)) std::cout << ' ' << k + 1;
  std::cout << '\n';
}

int cmd_solve(const Common& c) {
  const auto cfg = load(c);
  const auto problem = prepare(cfg);
  const auto result = run(cfg.solver, *problem.population, *problem.cost);
  WeightsFile wf{result.weights, to_string(cfg.solver.mode),
                 cfg.solver.mode == SolveMode::fixed_p ? cfg.solver.p : std::vector<double>{},
                 cfg.seed, result.iterations, result.step_scale, to_string(problem.cost->kind())};
  save_weights(wf, cfg.output_dir / "weights.json");
  write_trace(result.trace, cfg.output_dir / "trace.csv");
  write_text(cfg.output_dir / "config.resolved.json", cfg.resolved);
  const auto report = write_report_artifacts(result.weights, problem, cfg, cfg.output_dir);
  std::cout << "dual estimate: " << std::setprecision(8) << result.dual_value.value << " +- "
            << result.dual_value.std_error << '\n';
  print_report(report);
  std::cout << "wrote " << cfg.output_dir.string() << '\n';
  return ok;
}

int cmd_baseline(const Common& c) {
  const auto cfg = load(c);
  const auto problem = prepare(cfg);
  const auto dir = cfg.output_dir / "baseline";
  fs::create_directories(dir);
  const auto w = WeightMatrix::zeros(problem.cost->facility_count(), problem.population->priors());
  save_weights({w, "baseline", {}, cfg.seed, 0, 0.0, to_string(problem.cost->kind())},
               dir / "weights.json");
  print_report(write_report_artifacts(w, problem, cfg, dir));
  std::cout << "wrote " << dir.string() << '\n';
  return ok;
}

WeightMatrix checked_weights(const fs::path& path, const Problem& problem) {
  auto wf = load_weights(path);
  if (wf.weights.facility_count() != problem.cost->facility_count() ||
      wf.weights.group_count() != problem.population->group_count())
    throw DimensionMismatch("weights are " + std::to_string(wf.weights.facility_count()) + "x" +
                            std::to_string(wf.weights.group_count()) + ", problem is " +
                            std::to_string(problem.cost->facility_count()) + "x" +
                            std::to_string(problem.population->group_count()));
  return WeightMatrix(std::move(wf.weights.w), problem.population->priors());
}

int cmd_evaluate(const Common& c, const std::string& weights_path, const std::string& out_dir) {
  const auto cfg = load(c);
  const auto problem = prepare(cfg);
  const auto w = checked_weights(weights_path, problem);
  const fs::path dir = out_dir.empty() ? cfg.output_dir / "evaluation" : fs::path(out_dir);
  print_report(write_report_artifacts(w, problem, cfg, dir));
  std::cout << "wrote " << dir.string() << '\n';
  return ok;
}

int cmd_grid(const Common& c, const std::string& weights_path, std::size_t resolution,
             std::size_t nx, std::size_t ny, const std::string& out_path) {
  const auto cfg = load(c);
  const auto problem = prepare(cfg);
  const auto w = checked_weights(weights_path, problem);
  if (nx == 0) nx = resolution;
  if (ny == 0) ny = resolution;
  const PartitionHandle handle(w, problem.population, problem.cost);
  const auto raster = rasterize(handle, nx, ny);
  const fs::path path = out_path.empty() ? cfg.output_dir / "grid.csv" : fs::path(out_path);
  save_raster(raster, path);
  std::cout << "wrote " << path.string() << '\n';
  return ok;
}

int cmd_oracle(const std::string& dir, const std::string& weights_path, std::uint64_t iterations,
               std::uint64_t samples, std::uint64_t seed, const std::vector<double>& p) {
  const auto inst = load_instance(dir);
  OracleOptions opt;
  opt.ascent_iterations = iterations;
  opt.gradient_samples = samples;
  opt.seed = seed;
  if (!p.empty()) {
    opt.mode = SolveMode::fixed_p;
    opt.p = p;
  }
  if (!weights_path.empty()) {
    auto wf = load_weights(weights_path);
    if (wf.weights.facility_count() != inst.facility_count() ||
        wf.weights.group_count() != inst.group_count())
      throw DimensionMismatch("weights do not match the instance");
    opt.weights = WeightMatrix(std::move(wf.weights.w), inst.priors());
  }
  const auto summary = verify_instance(inst, opt);
  std::cout << std::setprecision(10) << "lp objective: " << summary.lp_objective << "\nlp sizes:";
  for (double v : summary.lp_sizes) std::cout << ' ' << v;
  std::cout << "\nascent dual: " << summary.ascent_value << "\nduality gap: " << summary.ascent_gap
            << '\n';
  if (summary.supplied_gap) std::cout << "supplied weights gap: " << *summary.supplied_gap << '\n';
  for (const auto& check : summary.checks)
    std::cout << (check.passed ? "PASS " : "FAIL ") << check.name << ": " << check.detail << '\n';
  return summary.passed() ? ok : oracle_failed;
}

int cmd_compare(const std::vector<std::string>& entries, const std::string& out_path) {
  std::vector<std::pair<std::string, FairnessReport>> reports;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("compare entries must be name=report.json, got '" + e + "'");
    reports.emplace_back(e.substr(0, eq), load_report(e.substr(eq + 1)));
  }
  const auto table = compare(reports);
  if (out_path.empty()) {
    std::cout << comparison_csv(table);
  } else {
    save_comparison(table, out_path);
    std::cout << "wrote " << out_path << '\n';
  }
  const auto pof = table.price_of_fairness();
  for (std::size_t i = 0; i < pof.size(); ++i)
    std::cerr << "price of fairness (" << table.models[i + 1] << " vs " << table.models[0]
              << "): " << std::showpos << pof[i] << std::noshowpos << '\n';
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair geographic partitioning via semidiscrete optimal transport"};
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("--workers", workers, "Evaluation threads (0 = all cores)");

  Common common;
  auto* solve = app.add_subcommand("solve", "Run stochastic dual ascent and write weights, trace and report");
  add_common(solve, common);
  auto* baseline = app.add_subcommand("baseline", "Report for the unweighted Voronoi assignment");
  add_common(baseline, common);

  std::string weights_path, out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Report for given weights");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("-w,--weights", weights_path, "Weights JSON")->required();
  evaluate_cmd->add_option("-o,--out", out, "Output directory");

  std::size_t resolution = 200, nx = 0, ny = 0;
  auto* grid = app.add_subcommand("grid", "Rasterize the partition");
  add_common(grid, common);
  grid->add_option("-w,--weights", weights_path, "Weights JSON")->required();
  grid->add_option("-r,--resolution", resolution, "Cells per axis");
  grid->add_option("--nx", nx, "Cells along x (overrides resolution)");
  grid->add_option("--ny", ny, "Cells along y (overrides resolution)");
  grid->add_option("-o,--out", out, "Output CSV");

  std::string instance_dir;
  std::uint64_t iterations = 200'000, samples = 100'000, seed = 1;
  std::vector<double> fixed_p;
  auto* oracle = app.add_subcommand("oracle", "Verify a small discrete instance against the exact LP");
  oracle->add_option("instance", instance_dir, "Instance directory")->required();
  oracle->add_option("-w,--weights", weights_path, "Weights JSON to check");
  oracle->add_option("--iterations", iterations, "Exact ascent iterations");
  oracle->add_option("--samples", samples, "Samples for the gradient check");
  oracle->add_option("--seed", seed, "Seed for the gradient check");
  oracle->add_option("--p", fixed_p, "Fixed region sizes (default: free)");

  std::vector<std::string> entries;
  auto* cmp = app.add_subcommand("compare", "Compare reports: name=report.json ...");
  cmp->add_option("reports", entries, "name=path pairs, baseline first")->required()->expected(2, -1);
  cmp->add_option("-o,--out", out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    set_evaluation_workers(workers);
    if (*solve) return cmd_solve(common);
    if (*baseline) return cmd_baseline(common);
    if (*evaluate_cmd) return cmd_evaluate(common, weights_path, out);
    if (*grid) return cmd_grid(common, weights_path, resolution, nx, ny, out);
    if (*oracle) return cmd_oracle(instance_dir, weights_path, iterations, samples, seed, fixed_p);
    if (*cmp) return cmd_compare(entries, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config;
  } catch (const NonFinite& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return diverged;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return data;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return internal;
  }
  return usage;
}
