#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairpart/types.hpp"

namespace fairpart {

/// Spatial density of one group. Densities are evaluated and sampled inside
/// the population bounds; they need not integrate to exactly one there.
class Density {
 public:
  virtual ~Density() = default;
  virtual double evaluate(const Point& p) const = 0;
  virtual Point sample(Rng& rng) const = 0;
};

struct GaussianComponent {
  double weight = 1.0;
  Point mean;
  /// Covariance entries (xx, xy, yy).
  std::array<double, 3> cov{1.0, 0.0, 1.0};
};

/// Gaussian mixture truncated to a box by rejection sampling. The density is
/// not renormalized after truncation.
class GaussianMixtureDensity final : public Density {
 public:
  GaussianMixtureDensity(std::vector<GaussianComponent> components, Bounds bounds);

  double evaluate(const Point& p) const override;
  Point sample(Rng& rng) const override;

  const std::vector<GaussianComponent>& components() const { return components_; }

 private:
  struct Prepared {
    double weight;  // normalized mixture weight
    Point mean;
    double inv_xx, inv_xy, inv_yy;
    double norm;  // weight / (2 pi sqrt(det))
    double chol_l11, chol_l21, chol_l22;
  };
  std::vector<GaussianComponent> components_;
  std::vector<Prepared> prepared_;
  std::vector<double> component_cdf_;
  Bounds bounds_;
};

/// Uniform density on a box. A zero-width axis is treated as absent, so a
/// box with ymin == ymax is the uniform density on a segment.
class UniformBoxDensity final : public Density {
 public:
  explicit UniformBoxDensity(Bounds box);

  double evaluate(const Point& p) const override;
  Point sample(Rng& rng) const override;

 private:
  Bounds box_;
  double value_;
};

/// Index drawn from the categorical distribution with cumulative weights
/// `cdf` (last entry is the total).
std::size_t sample_categorical(std::span<const double> cdf, Rng& rng);
std::vector<double> cumulative(std::span<const double> weights);

struct JointSample {
  Location location;
  std::size_t group = 0;
};

/// Heterogeneous population: priors over M groups and one spatial density per
/// group. Immutable once constructed.
class Population {
 public:
  virtual ~Population() = default;

  std::size_t group_count() const { return priors_.size(); }
  const std::vector<double>& priors() const { return priors_; }
  double priors_dot() const { return priors_dot_; }
  const Bounds& bounds() const { return bounds_; }

  /// P(Z = z | X = x) written into `out` (length M). Throws ZeroDensity when
  /// the total mixture density vanishes.
  virtual void posterior_into(const Location& x, std::span<double> out) const = 0;
  std::vector<double> posterior(const Location& x) const;

  /// Draws Z ~ q, then X ~ f_Z.
  virtual JointSample sample_joint(Rng& rng) const = 0;

  virtual bool is_discrete() const = 0;

 protected:
  Population(std::vector<double> priors, Bounds bounds);

 private:
  std::vector<double> priors_;
  double priors_dot_ = 0.0;
  Bounds bounds_;
};

class GroupMixture final : public Population {
 public:
  GroupMixture(std::vector<double> priors,
               std::vector<std::shared_ptr<const Density>> densities, Bounds bounds);

  void posterior_into(const Location& x, std::span<double> out) const override;
  JointSample sample_joint(Rng& rng) const override;
  bool is_discrete() const override { return false; }

  const Density& density(std::size_t z) const { return *densities_[z]; }

  /// Monte Carlo estimate of the integral of f_z over the bounds using
  /// uniform draws in the box.
  double integral_estimate(std::size_t z, std::size_t samples, std::uint64_t seed) const;

 private:
  std::vector<std::shared_ptr<const Density>> densities_;
  std::vector<double> group_cdf_;
};

struct Site {
  std::string id;
  Point point;
  std::vector<double> counts;

  double total() const;
};

/// Population given as a table of sites with per-group person counts.
/// q_z is the share of group z in the grand total and f_z is the normalized
/// per-group pmf over sites.
class DiscretePopulation final : public Population {
 public:
  explicit DiscretePopulation(std::vector<Site> sites);

  void posterior_into(const Location& x, std::span<double> out) const override;
  JointSample sample_joint(Rng& rng) const override;
  bool is_discrete() const override { return true; }

  const std::vector<Site>& sites() const { return sites_; }
  std::size_t site_count() const { return sites_.size(); }
  Location location(std::size_t site) const {
    return {sites_[site].point, static_cast<std::ptrdiff_t>(site)};
  }
  /// f_z(site).
  double pmf(std::size_t z, std::size_t site) const;
  /// Share of the whole population living at `site`.
  double site_mass(std::size_t site) const { return sites_[site].total() / grand_total_; }
  double group_total(std::size_t z) const { return group_totals_[z]; }
  double grand_total() const { return grand_total_; }
  std::ptrdiff_t find_site(const std::string& id) const;

 private:
  static std::vector<double> derive_priors(const std::vector<Site>& sites);

  std::vector<Site> sites_;
  std::vector<double> group_totals_;
  double grand_total_ = 0.0;
  std::vector<double> group_cdf_;
  std::vector<std::vector<double>> site_cdfs_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads `site_id,x,y,count_1,...,count_M`.
DiscretePopulation load_population(const std::filesystem::path& path);
void save_population(const DiscretePopulation& pop, const std::filesystem::path& path);

/// Same spatial distribution with all groups merged into one.
std::shared_ptr<const Population> collapse_groups(std::shared_ptr<const Population> pop);

}  // namespace fairpart
