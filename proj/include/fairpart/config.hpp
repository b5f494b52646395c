#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/population.hpp"
#include "fairpart/solver.hpp"

namespace fairpart {

/// Environment variables with this prefix override config leaves;
/// FAIRPART__SOLVER__ITERATIONS=500 sets solver.iterations.
inline constexpr const char* kEnvPrefix = "FAIRPART__";

struct MixtureGroupSpec {
  double prior = 0.0;
  std::vector<GaussianComponent> components;
  /// Uniform density on a box instead of a Gaussian mixture.
  std::optional<Bounds> uniform;
};

/// One run, as read from a JSON config file. Relative paths are resolved
/// against the directory holding the config.
struct RunConfig {
  std::optional<std::filesystem::path> population_csv;
  Bounds bounds{0.0, 0.0, 1.0, 1.0};
  std::vector<MixtureGroupSpec> mixture;

  std::optional<std::filesystem::path> facilities_csv;
  FacilitySet inline_facilities;

  CostKind cost_kind = CostKind::euclidean;
  std::optional<std::filesystem::path> cost_matrix;
  std::string cost_units;

  SolverConfig solver;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;

  /// The effective config tree after overrides, pretty-printed.
  std::string resolved;
};

/// `overrides` are `dotted.path=value` strings; values that parse as JSON
/// are used as such, anything else as a string. `env` entries are applied
/// before `overrides`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides = {},
                           const std::map<std::string, std::string>& env = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {},
                          bool use_environment = true);

/// FAIRPART__* variables of the current process.
std::map<std::string, std::string> environment_overrides();

struct Problem {
  std::shared_ptr<const Population> population;
  /// Set when the population came from a CSV.
  std::shared_ptr<const DiscretePopulation> discrete;
  std::shared_ptr<const CostModel> cost;
  std::vector<std::string> warnings;
};

/// Loads data files and checks the cross-field rules that need them.
Problem build_problem(const RunConfig& config);

struct WeightsFile {
  WeightMatrix weights;
  std::string mode;
  std::vector<double> p;
  std::uint64_t seed = 0;
  std::uint64_t iterations = 0;
  double step_scale = 0.0;
  std::string cost_kind;
};

std::string weights_to_json(const WeightsFile& file);
WeightsFile weights_from_json(const std::string& text);
void save_weights(const WeightsFile& file, const std::filesystem::path& path);
WeightsFile load_weights(const std::filesystem::path& path);

}  // namespace fairpart
