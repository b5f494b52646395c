#include "fairpart/partition.hpp"

#include <fstream>
#include <iomanip>
#include <numeric>

#include "csv.hpp"
#include "fairpart/errors.hpp"

namespace fairpart {

PartitionHandle::PartitionHandle(WeightMatrix weights, std::shared_ptr<const Population> pop,
                                 std::shared_ptr<const CostModel> cost)
    : weights_(std::move(weights)), pop_(std::move(pop)), cost_(std::move(cost)) {
  if (!pop_ || !cost_) throw ConfigError("partition needs a population and a cost model");
  if (weights_.group_count() != pop_->group_count() ||
      weights_.facility_count() != cost_->facility_count())
    throw DimensionMismatch("weights do not match the population and facilities");
}

std::size_t PartitionHandle::assign(const Location& x) const {
  return argmin_facility(weights_, *pop_, *cost_, x);
}

// ---------------------------------------------------------------------------

std::vector<double> AssignmentTable::facility_shares(std::size_t facilities) const {
  std::vector<double> shares(facilities, 0.0);
  double total = 0.0;
  for (const auto& r : rows) {
    const double t = std::accumulate(r.counts.begin(), r.counts.end(), 0.0);
    shares[r.facility] += t;
    total += t;
  }
  if (total > 0.0)
    for (auto& s : shares) s /= total;
  return shares;
}

Matrix AssignmentTable::conditional_shares(std::size_t facilities) const {
  const std::size_t m = rows.empty() ? 0 : rows.front().counts.size();
  Matrix shares(facilities, m);
  std::vector<double> group(m, 0.0);
  for (const auto& r : rows)
    for (std::size_t z = 0; z < m; ++z) {
      shares(r.facility, z) += r.counts[z];
      group[z] += r.counts[z];
    }
  for (std::size_t k = 0; k < facilities; ++k)
    for (std::size_t z = 0; z < m; ++z)
      if (group[z] > 0.0) shares(k, z) /= group[z];
  return shares;
}

double AssignmentTable::total_population() const {
  double t = 0.0;
  for (const auto& r : rows) t += std::accumulate(r.counts.begin(), r.counts.end(), 0.0);
  return t;
}

AssignmentTable assign_all_sites(const PartitionHandle& handle, const DiscretePopulation& pop) {
  if (pop.group_count() != handle.weights().group_count())
    throw DimensionMismatch("site table has a different number of groups");
  AssignmentTable table;
  for (std::size_t i = 0; i < pop.site_count(); ++i) {
    const auto& site = pop.sites()[i];
    if (!(site.total() > 0.0)) continue;
    const auto loc = pop.location(i);
    const auto k = handle.assign(loc);
    table.rows.push_back({site.id, k, handle.cost().raw_cost(loc, k), site.counts});
  }
  return table;
}

void save_assignment_table(const AssignmentTable& table, std::size_t groups,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "site_id,facility,cost";
  for (std::size_t z = 0; z < groups; ++z) out << ",count_" << z + 1;
  out << '\n' << std::setprecision(17);
  for (const auto& r : table.rows) {
    out << r.site_id << ',' << r.facility + 1 << ',' << r.cost;
    for (double c : r.counts) out << ',' << c;
    out << '\n';
  }
}

std::set<std::size_t> closed_facilities(std::span<const double> masses, double threshold) {
  std::set<std::size_t> closed;
  for (std::size_t k = 0; k < masses.size(); ++k)
    if (masses[k] < threshold) closed.insert(k);
  return closed;
}

// ---------------------------------------------------------------------------

Point Raster::cell_center(std::size_t ix, std::size_t iy) const {
  const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(nx);
  const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(ny);
  return {bounds.xmin + (static_cast<double>(ix) + 0.5) * dx,
          bounds.ymin + (static_cast<double>(iy) + 0.5) * dy};
}

std::vector<double> Raster::area_shares(std::size_t facilities) const {
  std::vector<double> shares(facilities, 0.0);
  double supported = 0.0;
  for (int c : cells)
    if (c >= 0) {
      shares[static_cast<std::size_t>(c)] += 1.0;
      supported += 1.0;
    }
  if (supported > 0.0)
    for (auto& s : shares) s /= supported;
  return shares;
}

std::vector<std::size_t> Raster::region_components(std::size_t facilities) const {
  std::vector<std::size_t> components(facilities, 0);
  std::vector<char> seen(cells.size(), 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < cells.size(); ++start) {
    if (seen[start] || cells[start] < 0) continue;
    const int label = cells[start];
    ++components[static_cast<std::size_t>(label)];
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const std::size_t ix = i % nx, iy = i / nx;
      auto visit = [&](std::size_t j) {
        if (!seen[j] && cells[j] == label) {
          seen[j] = 1;
          stack.push_back(j);
        }
      };
      if (ix > 0) visit(i - 1);
      if (ix + 1 < nx) visit(i + 1);
      if (iy > 0) visit(i - nx);
      if (iy + 1 < ny) visit(i + nx);
    }
  }
  return components;
}

Raster rasterize(const PartitionHandle& handle, std::size_t nx, std::size_t ny) {
  if (handle.population().is_discrete())
    throw ConfigError("rasterize needs a continuous population");
  if (nx < 2 || ny < 2) throw ConfigError("raster resolution must be at least 2 per axis");
  Raster r;
  r.nx = nx;
  r.ny = ny;
  r.bounds = handle.population().bounds();
  r.cells.resize(nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      try {
        r.cells[iy * nx + ix] = static_cast<int>(handle.assign({r.cell_center(ix, iy), -1}));
      } catch (const ZeroDensity&) {
        r.cells[iy * nx + ix] = -1;
      }
    }
  return r;
}

void save_raster(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  const auto& b = raster.bounds;
  out << "nx,ny,xmin,ymin,xmax,ymax\n" << std::setprecision(17) << raster.nx << ',' << raster.ny
      << ',' << b.xmin << ',' << b.ymin << ',' << b.xmax << ',' << b.ymax << '\n';
  for (std::size_t iy = 0; iy < raster.ny; ++iy) {
    for (std::size_t ix = 0; ix < raster.nx; ++ix) {
      const int c = raster.at(ix, iy);
      out << (ix ? "," : "") << (c < 0 ? -1 : c + 1);
    }
    out << '\n';
  }
}

Raster load_raster(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header != std::vector<std::string>{"nx", "ny", "xmin", "ymin", "xmax", "ymax"} ||
      table.rows.empty())
    throw ParseError(path.string() + ": not a raster file");
  const auto& meta = table.rows.front().second;
  if (meta.size() != 6) throw ParseError(path.string() + ": bad raster metadata");
  Raster r;
  r.nx = static_cast<std::size_t>(csv::parse_double(meta[0], "nx"));
  r.ny = static_cast<std::size_t>(csv::parse_double(meta[1], "ny"));
  r.bounds = {csv::parse_double(meta[2], "xmin"), csv::parse_double(meta[3], "ymin"),
              csv::parse_double(meta[4], "xmax"), csv::parse_double(meta[5], "ymax")};
  if (table.rows.size() != r.ny + 1) throw DimensionMismatch(path.string() + ": row count");
  for (std::size_t iy = 0; iy < r.ny; ++iy) {
    const auto& row = table.rows[iy + 1].second;
    if (row.size() != r.nx) throw DimensionMismatch(path.string() + ": column count");
    for (const auto& f : row) {
      const int v = static_cast<int>(csv::parse_double(f, "cell"));
      r.cells.push_back(v < 0 ? -1 : v - 1);
    }
  }
  return r;
}

}  // namespace fairpart
