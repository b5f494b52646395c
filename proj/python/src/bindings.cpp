#include <algorithm>

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fairpart/config.hpp"
#include "fairpart/errors.hpp"
#include "fairpart/oracle.hpp"
#include "fairpart/partition.hpp"
#include "fairpart/report.hpp"
#include "fairpart/solver.hpp"

namespace py = pybind11;
using namespace fairpart;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Matrix& m) {
  Rows out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.row(r).begin(), m.row(r).end());
  return out;
}

Matrix from_rows(const Rows& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw DimensionMismatch("ragged weight rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  }
  return m;
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

struct PyProblem {
  RunConfig config;
  Problem problem;

  static PyProblem make(RunConfig cfg) {
    auto problem = build_problem(cfg);
    return {std::move(cfg), std::move(problem)};
  }

  WeightMatrix checked(const WeightMatrix& w) const {
    if (w.facility_count() != problem.cost->facility_count() ||
        w.group_count() != problem.population->group_count())
      throw DimensionMismatch("weights do not match the problem's facilities and groups");
    return WeightMatrix(w.w, problem.population->priors());
  }
};

struct PyPartition {
  PartitionHandle handle;
  std::shared_ptr<const DiscretePopulation> discrete;
};

std::vector<double> optional_sizes(const std::optional<std::vector<double>>& p) {
  return p.value_or(std::vector<double>{});
}

}  // namespace

PYBIND11_MODULE(_fairpart, m) {
  m.doc() = "Fair facility partitions";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base.ptr());

  py::class_<WeightMatrix>(m, "Weights")
      .def(py::init([](const Rows& w, std::vector<double> q) { return WeightMatrix(from_rows(w), std::move(q)); }),
           py::arg("w"), py::arg("q"))
      .def_static("zeros", &WeightMatrix::zeros, py::arg("facilities"), py::arg("q"))
      .def_static("load", [](const std::filesystem::path& path) { return load_weights(path).weights; })
      .def("save",
           [](const WeightMatrix& w, const std::filesystem::path& path, const std::string& mode) {
             save_weights({w, mode, {}, 0, 0, 0.0, ""}, path);
           },
           py::arg("path"), py::arg("mode") = "optimal_p")
      .def_property_readonly("w", [](const WeightMatrix& w) { return to_rows(w.w); })
      .def_readonly("q", &WeightMatrix::q)
      .def_property_readonly("facility_count", &WeightMatrix::facility_count)
      .def_property_readonly("group_count", &WeightMatrix::group_count)
      .def("constraint_residual", &WeightMatrix::constraint_residual)
      .def(py::self == py::self)
      .def("__repr__", [](const WeightMatrix& w) {
        return "<Weights " + std::to_string(w.facility_count()) + "x" + std::to_string(w.group_count()) + ">";
      });

  py::class_<SolverResult>(m, "SolveResult")
      .def_readonly("weights", &SolverResult::weights)
      .def_property_readonly("dual_value", [](const SolverResult& r) { return r.dual_value.value; })
      .def_property_readonly("std_error", [](const SolverResult& r) { return r.dual_value.std_error; })
      .def_readonly("region_masses", &SolverResult::region_masses)
      .def_readonly("iterations", &SolverResult::iterations)
      .def_readonly("discarded", &SolverResult::discarded)
      .def_readonly("step_scale", &SolverResult::step_scale)
      .def_property_readonly("trace", [](const SolverResult& r) {
        py::list rows;
        for (const auto& t : r.trace)
          rows.append(py::dict(py::arg("n") = t.n, py::arg("dual_estimate") = t.dual_estimate,
                               py::arg("stderr") = t.std_error, py::arg("max_fairness_dev") = t.max_fairness_dev));
        return rows;
      });

  py::class_<PyPartition>(m, "Partition")
      .def("assign",
           [](const PyPartition& p, double x, double y, std::ptrdiff_t site) {
             return p.handle.assign(Location{Point{x, y}, site});
           },
           py::arg("x"), py::arg("y"), py::arg("site") = -1)
      .def("rasterize",
           [](const PyPartition& p, std::size_t nx, std::optional<std::size_t> ny) {
             const auto r = rasterize(p.handle, nx, ny.value_or(nx));
             return py::dict(py::arg("nx") = r.nx, py::arg("ny") = r.ny,
                             py::arg("bounds") = py::make_tuple(r.bounds.xmin, r.bounds.ymin, r.bounds.xmax,
                                                                r.bounds.ymax),
                             py::arg("cells") = r.cells);
           },
           py::arg("nx"), py::arg("ny") = py::none())
      .def("assignment", [](const PyPartition& p) {
        if (!p.discrete) throw ConfigError("assignment tables need a site population");
        py::list rows;
        for (const auto& r : assign_all_sites(p.handle, *p.discrete).rows)
          rows.append(py::dict(py::arg("site_id") = r.site_id, py::arg("facility") = r.facility,
                               py::arg("cost") = r.cost, py::arg("counts") = r.counts));
        return rows;
      });

  py::class_<PyProblem>(m, "Problem")
      .def_static("from_config",
                  [](const std::filesystem::path& path, const std::vector<std::string>& overrides,
                     bool use_environment) { return PyProblem::make(load_run_config(path, overrides, use_environment)); },
                  py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
                  py::arg("use_environment") = false)
      .def_static("from_json",
                  [](const std::string& text, const std::filesystem::path& base_dir,
                     const std::vector<std::string>& overrides) {
                    return PyProblem::make(parse_run_config(text, base_dir, overrides));
                  },
                  py::arg("text"), py::arg("base_dir") = ".", py::arg("overrides") = std::vector<std::string>{})
      .def_property_readonly("facility_count", [](const PyProblem& p) { return p.problem.cost->facility_count(); })
      .def_property_readonly("group_count", [](const PyProblem& p) { return p.problem.population->group_count(); })
      .def_property_readonly("priors", [](const PyProblem& p) { return p.problem.population->priors(); })
      .def_property_readonly("warnings", [](const PyProblem& p) { return p.problem.warnings; })
      .def_property_readonly("seed", [](const PyProblem& p) { return p.config.seed; })
      .def_property_readonly("resolved_config", [](const PyProblem& p) { return parse_json(p.config.resolved); })
      .def("solve",
           [](const PyProblem& p) {
             py::gil_scoped_release release;
             return run(p.config.solver, *p.problem.population, *p.problem.cost);
           })
      .def("baseline_weights",
           [](const PyProblem& p) {
             return WeightMatrix::zeros(p.problem.cost->facility_count(), p.problem.population->priors());
           })
      .def("evaluate",
           [](const PyProblem& p, const WeightMatrix& w, std::optional<std::uint64_t> samples,
              std::optional<std::uint64_t> seed) {
             const auto weights = p.checked(w);
             FairnessReport report;
             {
               py::gil_scoped_release release;
               report = evaluate(weights, *p.problem.population, *p.problem.cost,
                                 samples.value_or(p.config.solver.eval_samples),
                                 seed ? *seed : evaluation_seed(p.config.seed));
             }
             return parse_json(report_to_json(report));
           },
           py::arg("weights"), py::arg("samples") = py::none(), py::arg("seed") = py::none())
      .def("partition",
           [](const PyProblem& p, const WeightMatrix& w) {
             return PyPartition{PartitionHandle(p.checked(w), p.problem.population, p.problem.cost),
                                p.problem.discrete};
           },
           py::arg("weights"));

  py::class_<DiscreteInstance>(m, "Instance")
      .def_static("load", &load_instance, py::arg("dir"))
      .def("save", &save_instance, py::arg("dir"))
      .def_property_readonly("facility_count", &DiscreteInstance::facility_count)
      .def_property_readonly("group_count", &DiscreteInstance::group_count)
      .def_property_readonly("priors", &DiscreteInstance::priors)
      .def("exact_ascent",
           [](const DiscreteInstance& inst, std::uint64_t iterations, std::optional<std::vector<double>> p) {
             AscentConfig cfg;
             cfg.iterations = iterations;
             if (p) {
               cfg.mode = SolveMode::fixed_p;
               cfg.p = *p;
             }
             AscentResult r;
             {
               py::gil_scoped_release release;
               r = exact_ascent(inst, cfg);
             }
             return py::make_tuple(r.weights, r.dual_value);
           },
           py::arg("iterations") = 200'000, py::arg("p") = py::none())
      .def("duality_gap",
           [](const DiscreteInstance& inst, const WeightMatrix& w, std::optional<std::vector<double>> p) {
             return duality_gap(inst, w, optional_sizes(p));
           },
           py::arg("weights"), py::arg("p") = py::none());

  m.def(
      "lp_primal",
      [](const DiscreteInstance& inst, std::optional<std::vector<double>> p) {
        const auto lp = lp_primal(inst, optional_sizes(p));
        return py::dict(py::arg("objective") = lp.objective, py::arg("p") = lp.p, py::arg("g") = to_rows(lp.g),
                        py::arg("assignment_residual") = lp.assignment_residual);
      },
      py::arg("instance"), py::arg("p") = py::none());

  m.def(
      "verify_instance",
      [](const DiscreteInstance& inst, std::uint64_t iterations, std::uint64_t samples, std::uint64_t seed,
         double tolerance, std::optional<WeightMatrix> weights) {
        OracleOptions opts;
        opts.ascent_iterations = iterations;
        opts.gradient_samples = samples;
        opts.seed = seed;
        opts.tolerance = tolerance;
        opts.weights = std::move(weights);
        OracleSummary s;
        {
          py::gil_scoped_release release;
          s = verify_instance(inst, opts);
        }
        py::list checks;
        for (const auto& c : s.checks)
          checks.append(py::dict(py::arg("name") = c.name, py::arg("passed") = c.passed,
                                 py::arg("detail") = c.detail));
        return py::dict(py::arg("passed") = s.passed(), py::arg("lp_objective") = s.lp_objective,
                        py::arg("lp_sizes") = s.lp_sizes, py::arg("ascent_value") = s.ascent_value,
                        py::arg("ascent_gap") = s.ascent_gap, py::arg("checks") = checks);
      },
      py::arg("instance"), py::arg("iterations") = 200'000, py::arg("samples") = 100'000, py::arg("seed") = 1,
      py::arg("tolerance") = 1e-3, py::arg("weights") = py::none());

  m.def(
      "closed_facilities",
      [](const std::vector<double>& masses, double threshold) {
        const auto s = closed_facilities(masses, threshold);
        return std::vector<std::size_t>(s.begin(), s.end());
      },
      py::arg("masses"), py::arg("threshold") = kDefaultClosureThreshold);

  m.def(
      "percentile_nearest_rank",
      [](std::vector<double> values, double percent) {
        std::sort(values.begin(), values.end());
        return percentile_nearest_rank(values, percent);
      },
      py::arg("values"), py::arg("percent"));

  m.def("set_evaluation_workers", &set_evaluation_workers, py::arg("workers"));
}
