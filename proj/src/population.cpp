#include "fairpart/population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "fairpart/errors.hpp"

namespace fairpart {

double Matrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over master + stream
  std::uint64_t z = master + stream + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<double> cumulative(std::span<const double> weights) {
  std::vector<double> cdf(weights.size());
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  return cdf;
}

std::size_t sample_categorical(std::span<const double> cdf, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, cdf.back());
  const double r = u(rng);
  auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
  auto idx = static_cast<std::size_t>(it - cdf.begin());
  return std::min(idx, cdf.size() - 1);
}

// ---------------------------------------------------------------------------

GaussianMixtureDensity::GaussianMixtureDensity(std::vector<GaussianComponent> components,
                                               Bounds bounds)
    : components_(std::move(components)), bounds_(bounds) {
  if (components_.empty()) throw ConfigError("gaussian mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight > 0.0)) throw ConfigError("mixture component weight must be positive");
    total += c.weight;
  }
  std::vector<double> weights;
  for (const auto& c : components_) {
    const double a = c.cov[0], b = c.cov[1], d = c.cov[2];
    const double det = a * d - b * b;
    if (!(a > 0.0) || !(det > 0.0))
      throw ConfigError("mixture covariance must be symmetric positive definite");
    Prepared p{};
    p.weight = c.weight / total;
    p.mean = c.mean;
    p.inv_xx = d / det;
    p.inv_xy = -b / det;
    p.inv_yy = a / det;
    p.norm = p.weight / (2.0 * std::numbers::pi * std::sqrt(det));
    p.chol_l11 = std::sqrt(a);
    p.chol_l21 = b / p.chol_l11;
    p.chol_l22 = std::sqrt(d - p.chol_l21 * p.chol_l21);
    prepared_.push_back(p);
    weights.push_back(p.weight);
  }
  component_cdf_ = cumulative(weights);
}

double GaussianMixtureDensity::evaluate(const Point& x) const {
  double sum = 0.0;
  for (const auto& p : prepared_) {
    const double dx = x.x - p.mean.x, dy = x.y - p.mean.y;
    const double q = dx * dx * p.inv_xx + 2.0 * dx * dy * p.inv_xy + dy * dy * p.inv_yy;
    sum += p.norm * std::exp(-0.5 * q);
  }
  return sum;
}

Point GaussianMixtureDensity::sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  constexpr int kMaxAttempts = 1'000'000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const auto& p = prepared_[sample_categorical(component_cdf_, rng)];
    const double u = normal(rng), v = normal(rng);
    Point pt{p.mean.x + p.chol_l11 * u, p.mean.y + p.chol_l21 * u + p.chol_l22 * v};
    if (bounds_.contains(pt)) return pt;
  }
  throw ConfigError("gaussian mixture has negligible mass inside the bounds");
}

UniformBoxDensity::UniformBoxDensity(Bounds box) : box_(box) {
  const double w = box.xmax - box.xmin, h = box.ymax - box.ymin;
  if (w < 0.0 || h < 0.0 || (w == 0.0 && h == 0.0))
    throw ConfigError("uniform density needs a non-degenerate box");
  value_ = 1.0 / ((w > 0.0 ? w : 1.0) * (h > 0.0 ? h : 1.0));
}

double UniformBoxDensity::evaluate(const Point& p) const {
  return box_.contains(p) ? value_ : 0.0;
}

Point UniformBoxDensity::sample(Rng& rng) const {
  std::uniform_real_distribution<double> ux(box_.xmin, box_.xmax);
  std::uniform_real_distribution<double> uy(box_.ymin, box_.ymax);
  const double x = box_.xmax > box_.xmin ? ux(rng) : box_.xmin;
  const double y = box_.ymax > box_.ymin ? uy(rng) : box_.ymin;
  return {x, y};
}

// ---------------------------------------------------------------------------

Population::Population(std::vector<double> priors, Bounds bounds)
    : priors_(std::move(priors)), bounds_(bounds) {
  if (priors_.empty()) throw ConfigError("population needs at least one group");
  double sum = 0.0;
  for (double q : priors_) {
    if (!(q > 0.0)) throw ConfigError("group priors must be positive");
    sum += q;
    priors_dot_ += q * q;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream os;
    os << std::setprecision(17) << "group priors must sum to 1 (got " << sum << ")";
    throw ConfigError(os.str());
  }
}

std::vector<double> Population::posterior(const Location& x) const {
  std::vector<double> out(group_count());
  posterior_into(x, out);
  return out;
}

GroupMixture::GroupMixture(std::vector<double> priors,
                           std::vector<std::shared_ptr<const Density>> densities, Bounds bounds)
    : Population(std::move(priors), bounds), densities_(std::move(densities)) {
  if (densities_.size() != group_count())
    throw DimensionMismatch("one density per group required");
  for (const auto& d : densities_)
    if (!d) throw ConfigError("null density");
  group_cdf_ = cumulative(this->priors());
}

void GroupMixture::posterior_into(const Location& x, std::span<double> out) const {
  const auto& q = priors();
  double total = 0.0;
  for (std::size_t z = 0; z < q.size(); ++z) {
    out[z] = q[z] * densities_[z]->evaluate(x.point);
    total += out[z];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw ZeroDensity("zero total density at (" + std::to_string(x.point.x) + ", " +
                      std::to_string(x.point.y) + ")");
  for (auto& v : out) v /= total;
}

JointSample GroupMixture::sample_joint(Rng& rng) const {
  const std::size_t z = group_count() == 1 ? 0 : sample_categorical(group_cdf_, rng);
  return {{densities_[z]->sample(rng), -1}, z};
}

double GroupMixture::integral_estimate(std::size_t z, std::size_t samples,
                                       std::uint64_t seed) const {
  const auto& b = bounds();
  const double area = (b.xmax - b.xmin) * (b.ymax - b.ymin);
  auto rng = make_rng(seed, z);
  std::uniform_real_distribution<double> ux(b.xmin, b.xmax), uy(b.ymin, b.ymax);
  double sum = 0.0;
  for (std::size_t i = 0; i < samples; ++i) sum += densities_[z]->evaluate({ux(rng), uy(rng)});
  return area * sum / static_cast<double>(samples);
}

// ---------------------------------------------------------------------------

double Site::total() const { return std::accumulate(counts.begin(), counts.end(), 0.0); }

namespace {

Bounds bounding_box(const std::vector<Site>& sites) {
  Bounds b{0, 0, 0, 0};
  if (sites.empty()) return b;
  b = {sites[0].point.x, sites[0].point.y, sites[0].point.x, sites[0].point.y};
  for (const auto& s : sites) {
    b.xmin = std::min(b.xmin, s.point.x);
    b.ymin = std::min(b.ymin, s.point.y);
    b.xmax = std::max(b.xmax, s.point.x);
    b.ymax = std::max(b.ymax, s.point.y);
  }
  return b;
}

}  // namespace

std::vector<double> DiscretePopulation::derive_priors(const std::vector<Site>& sites) {
  if (sites.empty()) throw EmptyGroup("site table is empty");
  const std::size_t m = sites.front().counts.size();
  if (m == 0) throw DimensionMismatch("sites need at least one group count");
  std::vector<double> totals(m, 0.0);
  for (const auto& s : sites) {
    if (s.counts.size() != m) throw DimensionMismatch("site " + s.id + " has wrong group count");
    for (std::size_t z = 0; z < m; ++z) {
      if (!(s.counts[z] >= 0.0) || !std::isfinite(s.counts[z]))
        throw ParseError("site " + s.id + " has a negative or non-finite count");
      totals[z] += s.counts[z];
    }
  }
  const double grand = std::accumulate(totals.begin(), totals.end(), 0.0);
  if (!(grand > 0.0)) throw EmptyGroup("all site counts are zero");
  std::vector<double> q(m);
  for (std::size_t z = 0; z < m; ++z) {
    if (!(totals[z] > 0.0))
      throw EmptyGroup("group " + std::to_string(z + 1) + " has zero total count");
    q[z] = totals[z] / grand;
  }
  // Normalize away the last-bit drift of the division so the prior check holds.
  const double s = std::accumulate(q.begin(), q.end(), 0.0);
  for (auto& v : q) v /= s;
  return q;
}

DiscretePopulation::DiscretePopulation(std::vector<Site> sites)
    : Population(derive_priors(sites), bounding_box(sites)), sites_(std::move(sites)) {
  const std::size_t m = group_count();
  group_totals_.assign(m, 0.0);
  for (const auto& s : sites_)
    for (std::size_t z = 0; z < m; ++z) group_totals_[z] += s.counts[z];
  grand_total_ = std::accumulate(group_totals_.begin(), group_totals_.end(), 0.0);
  group_cdf_ = cumulative(priors());
  site_cdfs_.resize(m);
  std::vector<double> col(sites_.size());
  for (std::size_t z = 0; z < m; ++z) {
    for (std::size_t i = 0; i < sites_.size(); ++i) col[i] = sites_[i].counts[z];
    site_cdfs_[z] = cumulative(col);
  }
  for (std::size_t i = 0; i < sites_.size(); ++i) {
    if (!index_.emplace(sites_[i].id, i).second)
      throw ParseError("duplicate site_id '" + sites_[i].id + "'");
  }
}

double DiscretePopulation::pmf(std::size_t z, std::size_t site) const {
  return sites_[site].counts[z] / group_totals_[z];
}

std::ptrdiff_t DiscretePopulation::find_site(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
}

void DiscretePopulation::posterior_into(const Location& x, std::span<double> out) const {
  if (x.site < 0 || static_cast<std::size_t>(x.site) >= sites_.size())
    throw IndexOutOfRange("location is not a site of this population");
  const auto& s = sites_[static_cast<std::size_t>(x.site)];
  const double total = s.total();
  if (!(total > 0.0)) throw ZeroDensity("site " + s.id + " has no population");
  for (std::size_t z = 0; z < s.counts.size(); ++z) out[z] = s.counts[z] / total;
}

JointSample DiscretePopulation::sample_joint(Rng& rng) const {
  const std::size_t z = group_count() == 1 ? 0 : sample_categorical(group_cdf_, rng);
  const std::size_t site = sites_.size() == 1 ? 0 : sample_categorical(site_cdfs_[z], rng);
  return {location(site), z};
}

DiscretePopulation load_population(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto& h = table.header;
  if (h.size() < 4 || h[0] != "site_id" || h[1] != "x" || h[2] != "y")
    throw ParseError(path.string() + ": header must be site_id,x,y,count_1,...,count_M");
  const std::size_t m = h.size() - 3;
  for (std::size_t z = 0; z < m; ++z)
    if (h[3 + z] != "count_" + std::to_string(z + 1))
      throw ParseError(path.string() + ": unexpected column '" + h[3 + z] + "'");
  std::vector<Site> sites;
  for (const auto& [lineno, row] : table.rows) {
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (row.size() != h.size()) throw ParseError(where + ": expected " + std::to_string(h.size()) + " fields");
    Site s;
    s.id = row[0];
    if (s.id.empty()) throw ParseError(where + ": empty site_id");
    s.point = {csv::parse_double(row[1], where), csv::parse_double(row[2], where)};
    for (std::size_t z = 0; z < m; ++z) {
      const double c = csv::parse_double(row[3 + z], where);
      if (c < 0.0) throw ParseError(where + ": negative count");
      s.counts.push_back(c);
    }
    sites.push_back(std::move(s));
  }
  return DiscretePopulation(std::move(sites));
}

void save_population(const DiscretePopulation& pop, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "site_id,x,y";
  for (std::size_t z = 0; z < pop.group_count(); ++z) out << ",count_" << z + 1;
  out << '\n' << std::setprecision(17);
  for (const auto& s : pop.sites()) {
    out << s.id << ',' << s.point.x << ',' << s.point.y;
    for (double c : s.counts) out << ',' << c;
    out << '\n';
  }
}

namespace {

/// q-weighted sum of group densities, sampled by first drawing the group.
class PooledDensity final : public Density {
 public:
  PooledDensity(const GroupMixture& mix, std::shared_ptr<const Population> owner)
      : mix_(mix), owner_(std::move(owner)), cdf_(cumulative(mix.priors())) {}

  double evaluate(const Point& p) const override {
    double sum = 0.0;
    for (std::size_t z = 0; z < mix_.group_count(); ++z)
      sum += mix_.priors()[z] * mix_.density(z).evaluate(p);
    return sum;
  }
  Point sample(Rng& rng) const override {
    return mix_.density(sample_categorical(cdf_, rng)).sample(rng);
  }

 private:
  const GroupMixture& mix_;
  std::shared_ptr<const Population> owner_;
  std::vector<double> cdf_;
};

}  // namespace

std::shared_ptr<const Population> collapse_groups(std::shared_ptr<const Population> pop) {
  if (pop->group_count() == 1) return pop;
  if (const auto* d = dynamic_cast<const DiscretePopulation*>(pop.get())) {
    std::vector<Site> sites = d->sites();
    for (auto& s : sites) s.counts = {s.total()};
    return std::make_shared<DiscretePopulation>(std::move(sites));
  }
  const auto& mix = dynamic_cast<const GroupMixture&>(*pop);
  auto pooled = std::make_shared<PooledDensity>(mix, pop);
  return std::make_shared<GroupMixture>(std::vector<double>{1.0},
                                        std::vector<std::shared_ptr<const Density>>{pooled},
                                        mix.bounds());
}

}  // namespace fairpart
