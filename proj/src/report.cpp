#include "fairpart/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "fairpart/errors.hpp"

namespace fairpart {

using json = nlohmann::json;

namespace {

std::size_t nearest_rank(std::size_t n, double percent) {
  const double r = std::ceil(percent / 100.0 * static_cast<double>(n));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, n);
}

}  // namespace

double percentile_nearest_rank(std::span<const double> sorted, double percent) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  return sorted[nearest_rank(sorted.size(), percent) - 1];
}

double quantile_stderr(std::span<const double> sorted, double percent) {
  const std::size_t n = sorted.size();
  if (n < 2) return 0.0;
  const double p = percent / 100.0;
  const double spread = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  const double center = p * static_cast<double>(n);
  auto at = [&](double rank) {
    const auto r = static_cast<std::size_t>(std::clamp(std::ceil(rank), 1.0, static_cast<double>(n)));
    return sorted[r - 1];
  };
  return 0.5 * (at(center + spread) - at(center - spread));
}

CostStats cost_stats(std::vector<double> costs) {
  CostStats s;
  s.samples = costs.size();
  if (costs.empty()) return s;
  std::sort(costs.begin(), costs.end());
  s.mean = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
  s.median = percentile_nearest_rank(costs, 50.0);
  s.p90 = percentile_nearest_rank(costs, 90.0);
  s.p90_stderr = quantile_stderr(costs, 90.0);
  return s;
}

FairnessReport evaluate(const WeightMatrix& weights, const Population& pop, const CostModel& cost,
                        std::uint64_t n_samples, std::uint64_t seed) {
  auto summary = summarize_samples(weights, pop, cost, n_samples, seed, true);
  FairnessReport r;
  const std::size_t kk = cost.facility_count(), m = pop.group_count();
  r.p_hat = summary.region_masses();
  r.conditional_shares = Matrix(kk, m);
  for (std::size_t z = 0; z < m; ++z) {
    double group = 0.0;
    for (std::size_t k = 0; k < kk; ++k) group += summary.counts(k, z);
    for (std::size_t k = 0; k < kk; ++k)
      r.conditional_shares(k, z) = group > 0.0 ? summary.counts(k, z) / group : 0.0;
  }
  r.max_deviation = summary.max_fairness_deviation();
  std::vector<double> all;
  for (const auto& g : summary.raw_costs) {
    all.insert(all.end(), g.begin(), g.end());
    r.groups.push_back(cost_stats(g));
  }
  r.overall = cost_stats(std::move(all));
  r.expected_cost = summary.cost_mean;
  r.sample_size = summary.samples;
  r.cost_kind = to_string(cost.kind());
  r.samples = std::move(summary.raw_costs);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

json stats_json(const CostStats& s) {
  return {{"samples", s.samples}, {"mean", s.mean},     {"median", s.median},
          {"p90", s.p90},         {"p90_stderr", s.p90_stderr}};
}

CostStats stats_from(const json& j) {
  CostStats s;
  s.samples = j.at("samples").get<std::uint64_t>();
  s.mean = j.at("mean").get<double>();
  s.median = j.at("median").get<double>();
  s.p90 = j.at("p90").get<double>();
  s.p90_stderr = j.value("p90_stderr", 0.0);
  return s;
}

}  // namespace

std::string report_to_json(const FairnessReport& r) {
  json shares = json::array();
  for (std::size_t k = 0; k < r.conditional_shares.rows(); ++k) {
    const auto row = r.conditional_shares.row(k);
    shares.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json groups = json::array();
  for (std::size_t z = 0; z < r.groups.size(); ++z) {
    auto g = stats_json(r.groups[z]);
    g["group"] = z + 1;
    groups.push_back(std::move(g));
  }
  json j = {{"cost_kind", r.cost_kind},
            {"sample_size", r.sample_size},
            {"p_hat", r.p_hat},
            {"conditional_shares", shares},
            {"max_deviation", r.max_deviation},
            {"expected_cost", r.expected_cost},
            {"groups", groups},
            {"overall", stats_json(r.overall)}};
  return j.dump(2) + "\n";
}

FairnessReport report_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    FairnessReport r;
    r.cost_kind = j.value("cost_kind", std::string());
    r.sample_size = j.at("sample_size").get<std::uint64_t>();
    r.p_hat = j.at("p_hat").get<std::vector<double>>();
    const auto& shares = j.at("conditional_shares");
    const std::size_t m = shares.empty() ? 0 : shares.front().size();
    r.conditional_shares = Matrix(shares.size(), m);
    for (std::size_t k = 0; k < shares.size(); ++k) {
      const auto row = shares[k].get<std::vector<double>>();
      if (row.size() != m) throw DimensionMismatch("ragged conditional_shares");
      for (std::size_t z = 0; z < m; ++z) r.conditional_shares(k, z) = row[z];
    }
    r.max_deviation = j.at("max_deviation").get<double>();
    r.expected_cost = j.value("expected_cost", 0.0);
    for (const auto& g : j.at("groups")) r.groups.push_back(stats_from(g));
    r.overall = stats_from(j.at("overall"));
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("report: ") + e.what());
  }
}

void save_report(const FairnessReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << report_to_json(report);
}

FairnessReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

// ---------------------------------------------------------------------------

std::vector<double> ComparisonTable::price_of_fairness() const {
  for (const auto& row : rows)
    if (row.group == "all" && row.stat == "mean") return row.abs_change;
  return {};
}

ComparisonTable compare(const std::vector<std::pair<std::string, FairnessReport>>& reports) {
  if (reports.size() < 2) throw ConfigError("compare needs at least two reports");
  const std::size_t m = reports.front().second.groups.size();
  for (const auto& [name, r] : reports)
    if (r.groups.size() != m)
      throw DimensionMismatch("report '" + name + "' has " + std::to_string(r.groups.size()) +
                              " groups, expected " + std::to_string(m));
  ComparisonTable table;
  for (const auto& [name, r] : reports) table.models.push_back(name);

  auto add_row = [&](std::string group, std::string stat, auto get) {
    ComparisonRow row{std::move(group), std::move(stat), {}, {}, {}};
    for (const auto& [name, r] : reports) row.values.push_back(get(r));
    const double base = row.values.front();
    for (std::size_t i = 1; i < row.values.size(); ++i) {
      const double diff = row.values[i] - base;
      row.abs_change.push_back(diff);
      row.pct_change.push_back(base != 0.0 ? 100.0 * diff / base
                               : diff == 0.0 ? 0.0
                                             : std::copysign(std::numeric_limits<double>::infinity(), diff));
    }
    table.rows.push_back(std::move(row));
  };
  for (std::size_t z = 0; z < m; ++z) {
    const std::string g = std::to_string(z + 1);
    add_row(g, "median", [z](const FairnessReport& r) { return r.groups[z].median; });
    add_row(g, "p90", [z](const FairnessReport& r) { return r.groups[z].p90; });
  }
  add_row("all", "mean", [](const FairnessReport& r) { return r.overall.mean; });
  add_row("all", "median", [](const FairnessReport& r) { return r.overall.median; });
  add_row("all", "p90", [](const FairnessReport& r) { return r.overall.p90; });
  return table;
}

std::string comparison_csv(const ComparisonTable& table) {
  std::ostringstream out;
  out << "group,stat";
  for (const auto& name : table.models) out << ',' << name;
  for (std::size_t i = 1; i < table.models.size(); ++i) out << ",pct_change_" << table.models[i];
  out << '\n' << std::setprecision(10);
  for (const auto& row : table.rows) {
    out << row.group << ',' << row.stat;
    for (double v : row.values) out << ',' << v;
    for (double v : row.pct_change) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

void save_comparison(const ComparisonTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << comparison_csv(table);
}

// ---------------------------------------------------------------------------

CostCDF make_cdf(std::vector<double> costs) {
  CostCDF cdf;
  if (costs.empty()) return cdf;
  std::sort(costs.begin(), costs.end());
  const double n = static_cast<double>(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (i + 1 < costs.size() && costs[i + 1] == costs[i]) continue;
    cdf.points.emplace_back(costs[i], static_cast<double>(i + 1) / n);
  }
  return cdf;
}

std::vector<CostCDF> export_cdf(const FairnessReport& report) {
  std::vector<CostCDF> out;
  for (const auto& g : report.samples) out.push_back(make_cdf(g));
  return out;
}

void save_cdf(const CostCDF& cdf, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "cost,cum_fraction\n" << std::setprecision(17);
  for (const auto& [c, f] : cdf.points) out << c << ',' << f << '\n';
}

std::vector<std::filesystem::path> save_cdfs(const FairnessReport& report,
                                             const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> paths;
  const auto cdfs = export_cdf(report);
  for (std::size_t z = 0; z < cdfs.size(); ++z) {
    auto p = dir / ("cdf_group_" + std::to_string(z + 1) + ".csv");
    save_cdf(cdfs[z], p);
    paths.push_back(std::move(p));
  }
  return paths;
}

CostCDF load_cdf(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  if (table.header != std::vector<std::string>{"cost", "cum_fraction"})
    throw ParseError(path.string() + ": header must be cost,cum_fraction");
  CostCDF cdf;
  for (const auto& [lineno, row] : table.rows) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (row.size() != 2) throw ParseError(where + ": expected 2 fields");
    cdf.points.emplace_back(csv::parse_double(row[0], where), csv::parse_double(row[1], where));
  }
  return cdf;
}

}  // namespace fairpart
