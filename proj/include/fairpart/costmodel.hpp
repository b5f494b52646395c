#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairpart/population.hpp"
#include "fairpart/types.hpp"

namespace fairpart {

struct FacilitySet {
  std::vector<Point> locations;
  std::vector<std::string> labels;

  std::size_t size() const { return locations.size(); }
};

/// Reads `facility_id,x,y`.
FacilitySet load_facilities(const std::filesystem::path& path);

enum class CostKind { euclidean, squared_euclidean, matrix };

const char* to_string(CostKind kind);
CostKind parse_cost_kind(const std::string& s);

/// Cost c(x, k) of serving location x from facility k.
class CostModel {
 public:
  static CostModel euclidean(FacilitySet facilities);
  static CostModel squared_euclidean(FacilitySet facilities);
  /// `rows[site_id][k]` from a travel-time or distance table.
  static CostModel matrix(FacilitySet facilities,
                          std::vector<std::pair<std::string, std::vector<double>>> rows,
                          std::string units = "");

  CostKind kind() const { return kind_; }
  std::size_t facility_count() const { return facilities_.size(); }
  const FacilitySet& facilities() const { return facilities_; }
  const std::string& units() const { return units_; }

  /// Matrix models must be bound to the site order of a population before
  /// costs can be looked up by Location. Throws UnknownSite when a populated
  /// site has no row.
  void bind(const DiscretePopulation& pop);
  bool bound() const { return !site_rows_.empty(); }

  double cost(const Location& x, std::size_t k) const;
  /// Matrix lookup by site id.
  double cost(const std::string& site_id, std::size_t k) const;
  /// All K costs at x.
  void costs_into(const Location& x, std::span<double> out) const;

  /// Cost in raw distance units: sqrt of the squared kind, unchanged otherwise.
  double raw_cost(const Location& x, std::size_t k) const;

  /// Median over facility pairs j < k of c(x_j, k); median of all table
  /// entries for matrix models.
  std::optional<double> median_pairwise_cost() const;

  /// Pairs of facilities with identical locations.
  std::vector<std::pair<std::size_t, std::size_t>> coincident_facilities() const;

 private:
  CostModel(CostKind kind, FacilitySet facilities) : kind_(kind), facilities_(std::move(facilities)) {}

  CostKind kind_;
  FacilitySet facilities_;
  std::string units_;
  std::vector<std::vector<double>> table_;
  std::unordered_map<std::string, std::size_t> row_of_;
  std::vector<std::ptrdiff_t> site_rows_;
};

/// Reads `site_id,c_1,...,c_K` for the given facilities.
CostModel load_cost_matrix(const std::filesystem::path& path, FacilitySet facilities,
                           std::string units = "");

}  // namespace fairpart
