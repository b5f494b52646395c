#include "fairpart/costmodel.hpp"

#include <algorithm>
#include <cmath>

#include "csv.hpp"
#include "fairpart/errors.hpp"

namespace fairpart {

FacilitySet load_facilities(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  if (h.size() != 3 || h[0] != "facility_id" || h[1] != "x" || h[2] != "y")
    throw ParseError(path.string() + ": header must be facility_id,x,y");
  FacilitySet fs;
  for (const auto& [lineno, row] : table.rows) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (row.size() != 3) throw ParseError(where + ": expected 3 fields");
    fs.labels.push_back(row[0]);
    fs.locations.push_back({csv::parse_double(row[1], where), csv::parse_double(row[2], where)});
  }
  if (fs.size() == 0) throw ParseError(path.string() + ": no facilities");
  return fs;
}

const char* to_string(CostKind kind) {
  switch (kind) {
    case CostKind::euclidean: return "euclidean";
    case CostKind::squared_euclidean: return "squared_euclidean";
    case CostKind::matrix: return "matrix";
  }
  return "?";
}

CostKind parse_cost_kind(const std::string& s) {
  if (s == "euclidean") return CostKind::euclidean;
  if (s == "squared_euclidean") return CostKind::squared_euclidean;
  if (s == "matrix") return CostKind::matrix;
  throw ConfigError("unknown cost kind '" + s + "'");
}

namespace {

void check_facilities(const FacilitySet& fs) {
  if (fs.size() == 0) throw ConfigError("at least one facility is required");
  if (!fs.labels.empty() && fs.labels.size() != fs.size())
    throw DimensionMismatch("facility labels and locations differ in length");
}

double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

}  // namespace

CostModel CostModel::euclidean(FacilitySet facilities) {
  check_facilities(facilities);
  return CostModel(CostKind::euclidean, std::move(facilities));
}

CostModel CostModel::squared_euclidean(FacilitySet facilities) {
  check_facilities(facilities);
  return CostModel(CostKind::squared_euclidean, std::move(facilities));
}

CostModel CostModel::matrix(FacilitySet facilities,
                            std::vector<std::pair<std::string, std::vector<double>>> rows,
                            std::string units) {
  check_facilities(facilities);
  CostModel m(CostKind::matrix, std::move(facilities));
  m.units_ = std::move(units);
  for (auto& [id, costs] : rows) {
    if (costs.size() != m.facility_count())
      throw DimensionMismatch("cost row for site '" + id + "' has " +
                              std::to_string(costs.size()) + " entries, expected " +
                              std::to_string(m.facility_count()));
    for (double c : costs)
      if (!(c >= 0.0) || !std::isfinite(c))
        throw ParseError("cost row for site '" + id + "' has a negative or non-finite entry");
    if (!m.row_of_.emplace(id, m.table_.size()).second)
      throw ParseError("duplicate cost row for site '" + id + "'");
    m.table_.push_back(std::move(costs));
  }
  return m;
}

void CostModel::bind(const DiscretePopulation& pop) {
  if (kind_ != CostKind::matrix) return;
  site_rows_.assign(pop.site_count(), -1);
  for (std::size_t i = 0; i < pop.site_count(); ++i) {
    auto it = row_of_.find(pop.sites()[i].id);
    if (it != row_of_.end()) {
      site_rows_[i] = static_cast<std::ptrdiff_t>(it->second);
    } else if (pop.sites()[i].total() > 0.0) {
      throw UnknownSite("cost matrix has no row for site '" + pop.sites()[i].id + "'");
    }
  }
}

double CostModel::cost(const Location& x, std::size_t k) const {
  if (k >= facility_count()) throw IndexOutOfRange("facility index " + std::to_string(k));
  switch (kind_) {
    case CostKind::euclidean:
      return std::sqrt(squared_distance(x.point, facilities_.locations[k]));
    case CostKind::squared_euclidean:
      return squared_distance(x.point, facilities_.locations[k]);
    case CostKind::matrix: {
      if (x.site < 0 || static_cast<std::size_t>(x.site) >= site_rows_.size())
        throw UnknownSite("matrix cost needs a bound site location");
      const auto row = site_rows_[static_cast<std::size_t>(x.site)];
      if (row < 0) throw UnknownSite("no cost row for site index " + std::to_string(x.site));
      return table_[static_cast<std::size_t>(row)][k];
    }
  }
  return 0.0;
}

double CostModel::cost(const std::string& site_id, std::size_t k) const {
  if (kind_ != CostKind::matrix) throw ConfigError("site-id lookup needs a matrix cost model");
  if (k >= facility_count()) throw IndexOutOfRange("facility index " + std::to_string(k));
  auto it = row_of_.find(site_id);
  if (it == row_of_.end()) throw UnknownSite("unknown site '" + site_id + "'");
  return table_[it->second][k];
}

void CostModel::costs_into(const Location& x, std::span<double> out) const {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = cost(x, k);
}

double CostModel::raw_cost(const Location& x, std::size_t k) const {
  const double c = cost(x, k);
  return kind_ == CostKind::squared_euclidean ? std::sqrt(c) : c;
}

std::optional<double> CostModel::median_pairwise_cost() const {
  std::vector<double> values;
  if (kind_ == CostKind::matrix) {
    for (const auto& row : table_) values.insert(values.end(), row.begin(), row.end());
  } else {
    const auto& loc = facilities_.locations;
    for (std::size_t j = 0; j < loc.size(); ++j)
      for (std::size_t k = j + 1; k < loc.size(); ++k) {
        const double d2 = squared_distance(loc[j], loc[k]);
        values.push_back(kind_ == CostKind::euclidean ? std::sqrt(d2) : d2);
      }
  }
  if (values.empty()) return std::nullopt;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

std::vector<std::pair<std::size_t, std::size_t>> CostModel::coincident_facilities() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto& loc = facilities_.locations;
  for (std::size_t j = 0; j < loc.size(); ++j)
    for (std::size_t k = j + 1; k < loc.size(); ++k)
      if (loc[j] == loc[k]) out.emplace_back(j, k);
  return out;
}

CostModel load_cost_matrix(const std::filesystem::path& path, FacilitySet facilities,
                           std::string units) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  const std::size_t k = facilities.size();
  if (h.empty() || h[0] != "site_id") throw ParseError(path.string() + ": header must start with site_id");
  if (h.size() != k + 1)
    throw DimensionMismatch(path.string() + ": header has " + std::to_string(h.size() - 1) +
                            " cost columns for " + std::to_string(k) + " facilities");
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const auto& [lineno, row] : table.rows) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (row.size() != k + 1)
      throw DimensionMismatch(where + ": expected " + std::to_string(k) + " costs, found " +
                              std::to_string(row.size() - 1));
    std::vector<double> costs;
    for (std::size_t j = 1; j <= k; ++j) {
      const double c = csv::parse_double(row[j], where);
      if (c < 0.0) throw ParseError(where + ": negative cost");
      costs.push_back(c);
    }
    rows.emplace_back(row[0], std::move(costs));
  }
  return CostModel::matrix(std::move(facilities), std::move(rows), std::move(units));
}

}  // namespace fairpart
