#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/population.hpp"
#include "fairpart/solver.hpp"

namespace fairpart {

/// Nearest-rank percentile: the element of rank ceil(P/100 * n) in sorted
/// order. The median of an even-sized sample is the lower middle element.
double percentile_nearest_rank(std::span<const double> sorted, double percent);

/// Standard error of a nearest-rank quantile from the spread of the order
/// statistics one binomial standard deviation either side of its rank.
double quantile_stderr(std::span<const double> sorted, double percent);

struct CostStats {
  std::uint64_t samples = 0;
  double mean = 0.0;
  double median = 0.0;
  double p90 = 0.0;
  double p90_stderr = 0.0;
};

CostStats cost_stats(std::vector<double> costs);

struct FairnessReport {
  std::vector<double> p_hat;
  /// (k, z) entry is P(Y=k | Z=z).
  Matrix conditional_shares;
  double max_deviation = 0.0;
  /// Raw (unsquared) cost statistics per group and for everyone.
  std::vector<CostStats> groups;
  CostStats overall;
  /// Mean cost in the model's own units (squared distance for power diagrams).
  double expected_cost = 0.0;
  std::uint64_t sample_size = 0;
  std::string cost_kind;

  /// Raw cost samples per group, kept for CDF export. Not serialized.
  std::vector<std::vector<double>> samples;
};

/// All statistics come from one stream of n joint samples.
FairnessReport evaluate(const WeightMatrix& weights, const Population& pop, const CostModel& cost,
                        std::uint64_t n_samples, std::uint64_t seed);

std::string report_to_json(const FairnessReport& report);
FairnessReport report_from_json(const std::string& text);
void save_report(const FairnessReport& report, const std::filesystem::path& path);
FairnessReport load_report(const std::filesystem::path& path);

struct ComparisonRow {
  std::string group;  // "1".."M" or "all"
  std::string stat;   // median, p90, mean
  std::vector<double> values;
  /// Percent change of models 2.. relative to the first.
  std::vector<double> pct_change;
  /// Absolute change of models 2.. relative to the first.
  std::vector<double> abs_change;
};

struct ComparisonTable {
  std::vector<std::string> models;
  std::vector<ComparisonRow> rows;

  /// Increase of the overall mean raw cost of each model over the first.
  std::vector<double> price_of_fairness() const;
};

ComparisonTable compare(const std::vector<std::pair<std::string, FairnessReport>>& reports);

/// `group,stat,model_1,...,model_n,pct_change_model_2,...`.
void save_comparison(const ComparisonTable& table, const std::filesystem::path& path);
std::string comparison_csv(const ComparisonTable& table);

struct CostCDF {
  /// (cost, cumulative fraction) at each distinct cost, increasing.
  std::vector<std::pair<double, double>> points;
};

CostCDF make_cdf(std::vector<double> costs);
std::vector<CostCDF> export_cdf(const FairnessReport& report);
/// Writes one `cost,cum_fraction` file per group named cdf_group_<z>.csv.
std::vector<std::filesystem::path> save_cdfs(const FairnessReport& report,
                                             const std::filesystem::path& dir);
void save_cdf(const CostCDF& cdf, const std::filesystem::path& path);
CostCDF load_cdf(const std::filesystem::path& path);

}  // namespace fairpart
