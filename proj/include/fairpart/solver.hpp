#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/population.hpp"
#include "fairpart/types.hpp"

namespace fairpart {

/// Dual weights w_{k,z}, one row per facility and one column per group.
/// In terms of the Kantorovich dual variables, psi_z(k) = q_z * w_{k,z}.
struct WeightMatrix {
  Matrix w;
  std::vector<double> q;

  WeightMatrix() = default;
  WeightMatrix(Matrix weights, std::vector<double> priors);
  /// All-zero weights: the plain Voronoi diagram.
  static WeightMatrix zeros(std::size_t facilities, const std::vector<double>& priors);

  std::size_t facility_count() const { return w.rows(); }
  std::size_t group_count() const { return w.cols(); }
  /// sum_z q_z w_{k,z} for row k, i.e. E(w_{k,Z}).
  double row_mean(std::size_t k) const;
  /// max_k |sum_z q_z w_{k,z}|.
  double constraint_residual() const;

  friend bool operator==(const WeightMatrix&, const WeightMatrix&) = default;
};

/// Unconstrained parametrization; rows are projected onto the orthogonal
/// complement of q to obtain weights.
struct VMatrix {
  Matrix v;
};

enum class SolveMode { optimal_p, fixed_p };

const char* to_string(SolveMode mode);
SolveMode parse_solve_mode(const std::string& s);

struct SolverConfig {
  SolveMode mode = SolveMode::optimal_p;
  /// Region sizes for fixed_p mode.
  std::vector<double> p;
  std::uint64_t iterations = 100'000;
  /// alpha in alpha_n = alpha / sqrt(n + 1). Defaults to half the median
  /// pairwise facility cost.
  std::optional<double> step_scale;
  std::uint64_t seed = 1;
  std::uint64_t eval_samples = 100'000;
  /// Samples used at each trace checkpoint; 0 disables the trace.
  std::uint64_t trace_samples = 10'000;
  /// Fraction of the final iterates that enter the average; 1 = full.
  double tail_fraction = 1.0;

  /// Throws ConfigError naming the offending field.
  void validate(std::size_t facilities) const;
};

double default_step_scale(const CostModel& cost);

struct SolverState {
  SolveMode mode = SolveMode::optimal_p;
  /// v in optimal_p mode, w in fixed_p mode.
  Matrix iterate;
  Matrix average;
  std::uint64_t n = 0;
  std::uint64_t averaged = 0;
  /// First iterate index m (1-based) included in the average.
  std::uint64_t average_from = 1;
  double step_scale = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t discarded = 0;

  static SolverState initial(SolveMode mode, std::size_t facilities, std::size_t groups,
                             double step_scale, std::uint64_t seed = 0);
  double step_size() const;
};

// ---------------------------------------------------------------------------
// Scores and assignment

/// c(x, k) - E(w_{k,Z} | X = x).
double effective_score(const WeightMatrix& weights, const Population& pop,
                       const CostModel& cost, const Location& x, std::size_t k);

/// Lowest index among the minimizers of the effective score.
std::size_t argmin_facility(const WeightMatrix& weights, const Population& pop,
                            const CostModel& cost, const Location& x);

/// Same as above with the posterior already known.
std::size_t argmin_facility(const Matrix& w, std::span<const double> posterior,
                            const CostModel& cost, const Location& x, double* min_score = nullptr);

WeightMatrix project_v_to_w(const VMatrix& v, const std::vector<double>& q);

// ---------------------------------------------------------------------------
// Stochastic approximation

enum class StepOutcome { applied, discarded };

/// One optimal-region-size step on v. The winning row moves along
/// -(e_z - q_z q / q'q), which is the stochastic gradient of the concave dual.
StepOutcome sa_step_optimal_p(SolverState& state, const JointSample& sample,
                              const Population& pop, const CostModel& cost);

/// One fixed-region-size step on w: w_{k,z'} += a_n (p_k q_z' - 1{k=k*} 1{z'=z}).
StepOutcome sa_step_fixed_p(SolverState& state, const JointSample& sample,
                            std::span<const double> p, const Population& pop,
                            const CostModel& cost);

/// The direction a step would apply at the current iterate (before scaling
/// by the step size). Rows are facilities.
Matrix sampled_direction(const SolverState& state, const JointSample& sample,
                         std::span<const double> p, const Population& pop,
                         const CostModel& cost);

VMatrix polyak_average(const SolverState& state);

/// Weights implied by the state's averaged iterate.
WeightMatrix averaged_weights(const SolverState& state, const std::vector<double>& q);

// ---------------------------------------------------------------------------
// Monte Carlo evaluation

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Raw per-sample tallies shared by the evaluation routines.
struct SampleSummary {
  std::uint64_t samples = 0;
  std::uint64_t discarded = 0;
  /// counts(k, z) of samples of group z assigned to k.
  Matrix counts;
  double score_mean = 0.0;
  double score_m2 = 0.0;
  /// Mean of c(X, k*) in the model's own cost units.
  double cost_mean = 0.0;
  /// Raw (unsquared) cost per sample, grouped by z, in sample order. Only
  /// filled when requested.
  std::vector<std::vector<double>> raw_costs;

  std::vector<double> region_masses() const;
  /// max_{k,z} |P(Y=k|Z=z) - P(Y=k)|.
  double max_fairness_deviation() const;
  double score_stderr() const;
};

/// Draws `n` joint samples in fixed-size chunks with chunk seeds derived from
/// `seed`; results do not depend on the number of worker threads.
SampleSummary summarize_samples(const WeightMatrix& weights, const Population& pop,
                                const CostModel& cost, std::uint64_t n, std::uint64_t seed,
                                bool keep_costs = false);

/// E{min_k [c(X,k) - E(w_{k,Z}|X)]}, plus sum_k p_k sum_z q_z w_{k,z} when p is given.
Estimate dual_objective_estimate(const WeightMatrix& weights, const Population& pop,
                                 const CostModel& cost, std::uint64_t n_samples,
                                 std::uint64_t seed, std::span<const double> p = {});

std::vector<double> region_masses(const WeightMatrix& weights, const Population& pop,
                                  const CostModel& cost, std::uint64_t n_samples,
                                  std::uint64_t seed);

/// Seed of the evaluation stream that run() uses for its final estimates.
/// Reports built from the same master seed share these samples.
std::uint64_t evaluation_seed(std::uint64_t master_seed);

/// Worker threads used by summarize_samples; 0 picks hardware concurrency.
void set_evaluation_workers(unsigned workers);
unsigned evaluation_workers();

// ---------------------------------------------------------------------------
// Drivers

struct TraceRow {
  std::uint64_t n = 0;
  double dual_estimate = 0.0;
  double std_error = 0.0;
  double max_fairness_dev = 0.0;
};

struct SolverResult {
  WeightMatrix weights;
  VMatrix raw_final;
  Estimate dual_value;
  std::vector<double> region_masses;
  std::vector<TraceRow> trace;
  std::uint64_t iterations = 0;
  std::uint64_t discarded = 0;
  double step_scale = 0.0;
};

/// Runs the configured number of steps from zero weights.
SolverResult run(const SolverConfig& config, const Population& pop, const CostModel& cost);

/// Single-weight-per-facility transport (groups merged) with fixed sizes p.
std::vector<double> classical_ot_solve(std::shared_ptr<const Population> pop,
                                       const CostModel& cost, std::span<const double> p,
                                       SolverConfig config);

}  // namespace fairpart
