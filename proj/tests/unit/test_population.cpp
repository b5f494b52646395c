#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fairpart/errors.hpp"
#include "fairpart/population.hpp"
#include "helpers.hpp"

using namespace fairpart;
using fairpart::fixtures::ConstantDensity;

namespace {

std::shared_ptr<GroupMixture> constant_mixture(std::vector<double> q, std::vector<double> values) {
  std::vector<std::shared_ptr<const Density>> d;
  for (double v : values) d.push_back(std::make_shared<ConstantDensity>(v, Bounds{}));
  return std::make_shared<GroupMixture>(std::move(q), std::move(d), Bounds{});
}

const Location kOrigin{{0.5, 0.5}, -1};

}  // namespace

TEST(Posterior, IdenticalDensitiesGivePriors) {
  auto pop = constant_mixture({0.5, 0.5}, {1.0, 1.0});
  const auto p = pop->posterior(kOrigin);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Posterior, BayesRatio) {
  auto pop = constant_mixture({0.3, 0.7}, {2.0, 1.0});
  const auto p = pop->posterior(kOrigin);
  EXPECT_NEAR(p[0], 6.0 / 13.0, 1e-15);
  EXPECT_NEAR(p[1], 7.0 / 13.0, 1e-15);
}

TEST(Posterior, DegenerateSupport) {
  auto pop = constant_mixture({0.3, 0.7}, {0.0, 4.0});
  const auto p = pop->posterior(kOrigin);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 1.0);
}

TEST(Posterior, ZeroDensityThrows) {
  auto pop = constant_mixture({0.3, 0.7}, {0.0, 0.0});
  EXPECT_THROW(pop->posterior(kOrigin), ZeroDensity);
}

TEST(Posterior, ScaleInvariance) {
  for (double scale : {1e-3, 0.5, 7.0, 1e4}) {
    auto a = constant_mixture({0.2, 0.5, 0.3}, {1.0, 3.0, 0.25});
    auto b = constant_mixture({0.2, 0.5, 0.3}, {scale * 1.0, scale * 3.0, scale * 0.25});
    const auto pa = a->posterior(kOrigin), pb = b->posterior(kOrigin);
    for (std::size_t z = 0; z < 3; ++z) EXPECT_NEAR(pa[z], pb[z], 1e-15);
  }
}

TEST(Posterior, SingleGroupIsOne) {
  auto pop = fixtures::uniform_groups({1.0});
  for (const auto& pt : fixtures::random_points(50, 3))
    EXPECT_EQ(pop->posterior({pt, -1})[0], 1.0);
}

TEST(Population, PriorsMustSumToOne) {
  EXPECT_THROW(constant_mixture({0.3, 0.6}, {1.0, 1.0}), ConfigError);
  EXPECT_THROW(constant_mixture({0.0, 1.0}, {1.0, 1.0}), ConfigError);
}

TEST(SampleJoint, SingleGroupAlwaysGroupOne) {
  auto pop = fixtures::uniform_groups({1.0});
  auto rng = make_rng(5);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(pop->sample_joint(rng).group, 0u);
}

TEST(SampleJoint, GroupMarginalMatchesPriors) {
  auto pop = fixtures::uniform_groups({0.3, 0.7});
  auto rng = make_rng(11);
  const int n = 1'000'000;
  int first = 0;
  for (int i = 0; i < n; ++i) first += pop->sample_joint(rng).group == 0;
  EXPECT_NEAR(first / double(n), 0.3, 0.002);
}

TEST(SampleJoint, OneSiteIsAlwaysThatSite) {
  DiscretePopulation pop({{"only", {2.0, 3.0}, {4.0, 1.0}}});
  auto rng = make_rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto s = pop.sample_joint(rng);
    EXPECT_EQ(s.location.site, 0);
    EXPECT_EQ(s.location.point, (Point{2.0, 3.0}));
  }
}

TEST(SampleJoint, SameSeedSameStream) {
  GaussianMixtureDensity g1({{1.0, {0.3, 0.3}, {0.02, 0.0, 0.02}}}, Bounds{});
  auto pop = std::make_shared<GroupMixture>(
      std::vector<double>{0.4, 0.6},
      std::vector<std::shared_ptr<const Density>>{
          std::make_shared<GaussianMixtureDensity>(g1),
          std::make_shared<GaussianMixtureDensity>(
              std::vector<GaussianComponent>{{1.0, {0.7, 0.6}, {0.05, 0.01, 0.03}}}, Bounds{})},
      Bounds{});
  auto a = make_rng(99), b = make_rng(99);
  for (int i = 0; i < 10'000; ++i) {
    const auto sa = pop->sample_joint(a), sb = pop->sample_joint(b);
    ASSERT_EQ(sa.group, sb.group);
    ASSERT_EQ(sa.location.point, sb.location.point);
  }
}

TEST(SampleJoint, DiscreteSiteFrequencies) {
  DiscretePopulation pop({{"a", {0, 0}, {3.0, 1.0}}, {"b", {1, 0}, {1.0, 3.0}}});
  auto rng = make_rng(4);
  const int n = 200'000;
  double a_given_1 = 0, ones = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = pop.sample_joint(rng);
    if (s.group == 0) {
      ++ones;
      a_given_1 += s.location.site == 0;
    }
  }
  EXPECT_NEAR(ones / n, 0.5, 0.005);
  EXPECT_NEAR(a_given_1 / ones, 0.75, 0.006);
}

TEST(GaussianMixture, IntegralOverBoundsNearOne) {
  auto d = std::make_shared<GaussianMixtureDensity>(
      std::vector<GaussianComponent>{{0.6, {0.4, 0.5}, {0.01, 0.0, 0.01}},
                                     {0.4, {0.6, 0.4}, {0.008, 0.002, 0.01}}},
      Bounds{});
  GroupMixture pop({1.0}, {d}, Bounds{});
  EXPECT_NEAR(pop.integral_estimate(0, 1'000'000, 3), 1.0, 0.02);
}

TEST(GaussianMixture, RejectsBadCovariance) {
  EXPECT_THROW(GaussianMixtureDensity({{1.0, {0, 0}, {1.0, 2.0, 1.0}}}, Bounds{}), ConfigError);
  EXPECT_THROW(GaussianMixtureDensity({}, Bounds{}), ConfigError);
}

TEST(GaussianMixture, SamplesStayInBounds) {
  GaussianMixtureDensity d({{1.0, {0.9, 0.9}, {0.1, 0.0, 0.1}}}, Bounds{});
  auto rng = make_rng(2);
  for (int i = 0; i < 10'000; ++i) ASSERT_TRUE(Bounds{}.contains(d.sample(rng)));
}

TEST(UniformBox, SegmentIsOneDimensional) {
  UniformBoxDensity seg(Bounds{0.0, 0.0, 2.0, 0.0});
  EXPECT_DOUBLE_EQ(seg.evaluate({1.0, 0.0}), 0.5);
  EXPECT_EQ(seg.evaluate({1.0, 0.1}), 0.0);
  auto rng = make_rng(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(seg.sample(rng).y, 0.0);
}

TEST(DiscretePopulation, SegregatedCountsGiveEqualPriors) {
  DiscretePopulation pop({{"a", {0, 0}, {10, 0}}, {"b", {1, 0}, {0, 10}}});
  EXPECT_DOUBLE_EQ(pop.priors()[0], 0.5);
  EXPECT_DOUBLE_EQ(pop.priors()[1], 0.5);
}

TEST(DiscretePopulation, PmfArithmetic) {
  DiscretePopulation pop({{"a", {0, 0}, {3, 1}}, {"b", {1, 0}, {1, 3}}});
  EXPECT_DOUBLE_EQ(pop.priors()[0], 0.5);
  EXPECT_DOUBLE_EQ(pop.pmf(0, 0), 0.75);
  EXPECT_DOUBLE_EQ(pop.pmf(0, 1), 0.25);
  const auto post = pop.posterior(pop.location(0));
  EXPECT_DOUBLE_EQ(post[0], 0.75);
}

TEST(DiscretePopulation, PmfSumsToOne) {
  const auto pop = fixtures::random_sites(37, 3, 8);
  for (std::size_t z = 0; z < 3; ++z) {
    double s = 0.0;
    for (std::size_t i = 0; i < pop.site_count(); ++i) s += pop.pmf(z, i);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(DiscretePopulation, EmptyGroupRejected) {
  EXPECT_THROW(DiscretePopulation({{"a", {0, 0}, {3, 0}}, {"b", {1, 0}, {1, 0}}}), EmptyGroup);
}

TEST(DiscretePopulation, ZeroPopulationSiteHasNoPosterior) {
  DiscretePopulation pop({{"a", {0, 0}, {3, 1}}, {"b", {1, 0}, {0, 0}}});
  EXPECT_THROW(pop.posterior(pop.location(1)), ZeroDensity);
}

TEST(LoadPopulation, ParsesAndDerivesPriors) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "p.csv", "site_id,x,y,count_1,count_2\nA,0,0,10,0\nB,1,0.5,0,10\n");
  const auto pop = load_population(dir / "p.csv");
  EXPECT_EQ(pop.site_count(), 2u);
  EXPECT_DOUBLE_EQ(pop.priors()[0], 0.5);
  EXPECT_EQ(pop.sites()[1].point, (Point{1.0, 0.5}));
  EXPECT_EQ(pop.find_site("B"), 1);
}

TEST(LoadPopulation, NegativeCountIsParseError) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "p.csv", "site_id,x,y,count_1\nA,0,0,-1\nB,1,0,3\n");
  EXPECT_THROW(load_population(dir / "p.csv"), ParseError);
}

TEST(LoadPopulation, MalformedRowsAreParseErrors) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "a.csv", "site_id,x,y,count_1\nA,0,0\n");
  EXPECT_THROW(load_population(dir / "a.csv"), ParseError);
  fixtures::write_file(dir / "b.csv", "site_id,x,y,count_1\nA,0,zero,1\n");
  EXPECT_THROW(load_population(dir / "b.csv"), ParseError);
  fixtures::write_file(dir / "c.csv", "id,x,y,count_1\nA,0,0,1\n");
  EXPECT_THROW(load_population(dir / "c.csv"), ParseError);
  fixtures::write_file(dir / "d.csv", "site_id,x,y,count_1,count_2\nA,0,0,1,0\n");
  EXPECT_THROW(load_population(dir / "d.csv"), EmptyGroup);
}

TEST(LoadPopulation, RoundTrip) {
  fixtures::TempDir dir;
  const auto pop = fixtures::random_sites(12, 2, 4);
  save_population(pop, dir / "p.csv");
  const auto back = load_population(dir / "p.csv");
  ASSERT_EQ(back.site_count(), pop.site_count());
  for (std::size_t i = 0; i < pop.site_count(); ++i) {
    EXPECT_EQ(back.sites()[i].id, pop.sites()[i].id);
    EXPECT_EQ(back.sites()[i].point, pop.sites()[i].point);
    EXPECT_EQ(back.sites()[i].counts, pop.sites()[i].counts);
  }
}

TEST(CollapseGroups, MergesCounts) {
  auto pop = std::make_shared<DiscretePopulation>(
      std::vector<Site>{{"a", {0, 0}, {3, 1}}, {"b", {1, 0}, {1, 3}}});
  const auto one = collapse_groups(pop);
  EXPECT_EQ(one->group_count(), 1u);
  const auto& d = dynamic_cast<const DiscretePopulation&>(*one);
  EXPECT_EQ(d.sites()[0].counts[0], 4.0);
}

TEST(DeriveSeed, StreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}
