#pragma once

#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/population.hpp"
#include "fairpart/solver.hpp"

namespace fairpart {

/// The generalized additively weighted Voronoi diagram induced by a set of
/// weights over a population and cost model.
class PartitionHandle {
 public:
  PartitionHandle(WeightMatrix weights, std::shared_ptr<const Population> pop,
                  std::shared_ptr<const CostModel> cost);

  /// Facility serving location x. Takes no group argument: everyone at x is
  /// served by the same facility.
  std::size_t assign(const Location& x) const;

  const WeightMatrix& weights() const { return weights_; }
  const Population& population() const { return *pop_; }
  const CostModel& cost() const { return *cost_; }

 private:
  WeightMatrix weights_;
  std::shared_ptr<const Population> pop_;
  std::shared_ptr<const CostModel> cost_;
};

struct AssignmentRow {
  std::string site_id;
  std::size_t facility = 0;
  double cost = 0.0;
  std::vector<double> counts;
};

struct AssignmentTable {
  std::vector<AssignmentRow> rows;

  /// Facility shares, P(Y=k), by population count.
  std::vector<double> facility_shares(std::size_t facilities) const;
  /// (k, z) entry is P(Y=k | Z=z).
  Matrix conditional_shares(std::size_t facilities) const;
  double total_population() const;
};

/// One row per populated site; zero-population sites are skipped.
AssignmentTable assign_all_sites(const PartitionHandle& handle, const DiscretePopulation& pop);

/// Writes `site_id,facility,cost,count_1..count_M` with 1-based facilities.
void save_assignment_table(const AssignmentTable& table, std::size_t groups,
                           const std::filesystem::path& path);

inline constexpr double kDefaultClosureThreshold = 1e-4;

/// Facilities whose mass is below the threshold.
std::set<std::size_t> closed_facilities(std::span<const double> masses,
                                        double threshold = kDefaultClosureThreshold);

struct Raster {
  std::size_t nx = 0;
  std::size_t ny = 0;
  Bounds bounds;
  /// Row-major from ymin upward, facility index or -1 off support.
  std::vector<int> cells;

  int at(std::size_t ix, std::size_t iy) const { return cells[iy * nx + ix]; }
  Point cell_center(std::size_t ix, std::size_t iy) const;
  /// Cell count share per facility among supported cells.
  std::vector<double> area_shares(std::size_t facilities) const;
  /// Connected components per facility, 4-connectivity.
  std::vector<std::size_t> region_components(std::size_t facilities) const;
};

Raster rasterize(const PartitionHandle& handle, std::size_t nx, std::size_t ny);
inline Raster rasterize(const PartitionHandle& handle, std::size_t resolution) {
  return rasterize(handle, resolution, resolution);
}

/// Header `nx,ny,xmin,ymin,xmax,ymax`, the header values, then one line of
/// comma separated cells per grid row. Facilities are written 1-based.
void save_raster(const Raster& raster, const std::filesystem::path& path);
Raster load_raster(const std::filesystem::path& path);

}  // namespace fairpart
