#pragma once

// Exact reference computations on small discrete instances: gradients by
// summation over sites, deterministic supergradient ascent, and the
// Kantorovich relaxation solved as an exact rational LP.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/population.hpp"
#include "fairpart/solver.hpp"

namespace fairpart {

struct InstanceCaps {
  std::size_t max_sites = 40;
  std::size_t max_facilities = 4;
  std::size_t max_groups = 3;
};

struct DiscreteInstance {
  std::shared_ptr<const DiscretePopulation> population;
  std::shared_ptr<const CostModel> cost;

  /// Binds matrix costs to the population; throws DimensionMismatch if the
  /// sizes exceed `caps`.
  static DiscreteInstance make(DiscretePopulation pop, CostModel cost,
                               std::optional<InstanceCaps> caps = InstanceCaps{});

  std::size_t facility_count() const { return cost->facility_count(); }
  std::size_t group_count() const { return population->group_count(); }
  const std::vector<double>& priors() const { return population->priors(); }
};

/// Directory with population.csv, facilities.csv, optional costs.csv and
/// manifest.json ({K, M, q, cost, units}).
DiscreteInstance load_instance(const std::filesystem::path& dir);
void save_instance(const DiscreteInstance& instance, const std::filesystem::path& dir);

/// Populated sites of an instance with their masses, posteriors and costs,
/// precomputed for repeated exact evaluation.
class ExactModel {
 public:
  explicit ExactModel(const DiscretePopulation& pop, const CostModel& cost);

  std::size_t facility_count() const { return facilities_; }
  std::size_t group_count() const { return q_.size(); }

  /// E{min_k [c(X,k) - E(w_{k,Z}|X)]} by summation.
  double expected_min_score(const Matrix& w) const;
  /// Dual objective with free region sizes: expected_min_score(w) +
  /// min_k sum_z q_z w_{k,z}. A lower bound on the fair optimum for any w.
  double dual_value(const Matrix& w) const;
  /// Dual objective with fixed region sizes p.
  double dual_value(const Matrix& w, std::span<const double> p) const;

  /// Gradient of the dual at the given iterate (v for optimal_p, w for fixed_p).
  Matrix gradient(const Matrix& iterate, SolveMode mode, std::span<const double> p = {},
                  double* min_score = nullptr) const;

  /// Facility of each populated site (lowest index on ties).
  std::vector<std::size_t> assignment(const Matrix& w) const;
  /// Expected cost of the deterministic assignment induced by w.
  double assignment_cost(const Matrix& w) const;
  /// Largest cost between a populated site and any facility.
  double max_cost() const;

  struct SiteData {
    std::size_t index;  // site index in the population
    double mass;
    std::vector<double> posterior;
    std::vector<double> costs;
  };
  const std::vector<SiteData>& sites() const { return sites_; }

 private:
  std::size_t facilities_;
  std::vector<double> q_;
  double qq_;
  std::vector<SiteData> sites_;
};

Matrix exact_gradient(const Matrix& iterate, const DiscreteInstance& instance, SolveMode mode,
                      std::span<const double> p = {});

struct AscentConfig {
  SolveMode mode = SolveMode::optimal_p;
  std::vector<double> p;
  std::uint64_t iterations = 200'000;
  std::optional<double> step_scale;
  std::size_t checkpoints = 100;
};

struct AscentCheckpoint {
  std::uint64_t n = 0;
  /// Dual value of the averaged iterate.
  double average_value = 0.0;
  /// Best dual value seen so far over raw and averaged iterates.
  double best_value = 0.0;
};

struct AscentResult {
  /// Best weights seen over raw and averaged iterates, and their dual value.
  WeightMatrix weights;
  double dual_value = 0.0;
  /// The final averaged iterate.
  WeightMatrix averaged_weights;
  double averaged_value = 0.0;
  std::vector<AscentCheckpoint> trace;
};

/// Deterministic supergradient ascent with alpha / sqrt(n + 1) steps and
/// iterate averaging, using exact gradients. The default alpha is the largest
/// cost between a populated site and a facility. Works on any discrete
/// population (no size cap).
AscentResult exact_ascent(const DiscretePopulation& pop, const CostModel& cost,
                          const AscentConfig& config);
inline AscentResult exact_ascent(const DiscreteInstance& instance, const AscentConfig& config) {
  return exact_ascent(*instance.population, *instance.cost, config);
}

struct LPSolution {
  /// g(site, k) over all sites of the population (rows of unpopulated sites
  /// are set to the first facility).
  Matrix g;
  std::vector<double> p;
  double objective = 0.0;
  /// (k, z): sum_s g(s,k) f_z(s) - p_k.
  Matrix marginal_residuals;
  /// max_s |sum_k g(s,k) - 1|.
  double assignment_residual = 0.0;
};

/// Exact optimum of the relaxation. With `p` empty the region sizes are free
/// variables; otherwise they are fixed.
LPSolution lp_primal(const DiscreteInstance& instance, std::span<const double> p = {});

/// LP optimum minus the exact dual value at `weights`. With `p` empty both
/// sides use free region sizes.
double duality_gap(const DiscreteInstance& instance, const WeightMatrix& weights,
                   std::span<const double> p = {});
double duality_gap(const LPSolution& lp, const DiscreteInstance& instance,
                   const WeightMatrix& weights, std::span<const double> p = {});

struct OracleOptions {
  SolveMode mode = SolveMode::optimal_p;
  /// Region sizes in fixed_p mode.
  std::vector<double> p;
  std::uint64_t ascent_iterations = 200'000;
  std::uint64_t gradient_samples = 100'000;
  std::uint64_t seed = 1;
  /// Relative tolerance for the strong-duality comparisons.
  double tolerance = 1e-3;
  /// Extra weights whose duality gap is checked, e.g. a solver's output.
  std::optional<WeightMatrix> weights;
};

struct OracleCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct OracleSummary {
  double lp_objective = 0.0;
  std::vector<double> lp_sizes;
  double ascent_value = 0.0;
  /// LP optimum minus the ascent dual value.
  double ascent_gap = 0.0;
  std::optional<double> supplied_gap;
  std::vector<OracleCheck> checks;

  bool passed() const;
};

/// Runs the LP, exact ascent, weak and strong duality and gradient
/// unbiasedness checks on one instance.
OracleSummary verify_instance(const DiscreteInstance& instance, const OracleOptions& options = {});

}  // namespace fairpart
