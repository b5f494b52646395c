#include <gtest/gtest.h>

#include "fairpart/costmodel.hpp"
#include "fairpart/errors.hpp"
#include "helpers.hpp"

using namespace fairpart;
using fairpart::fixtures::facilities;

TEST(Cost, Euclidean) {
  const auto c = CostModel::euclidean(facilities({{3.0, 4.0}}));
  EXPECT_EQ(c.cost(Location{{0.0, 0.0}}, 0), 5.0);
}

TEST(Cost, SquaredEuclidean) {
  const auto c = CostModel::squared_euclidean(facilities({{3.0, 4.0}}));
  EXPECT_EQ(c.cost(Location{{0.0, 0.0}}, 0), 25.0);
  EXPECT_EQ(c.raw_cost(Location{{0.0, 0.0}}, 0), 5.0);
}

TEST(Cost, SquaredIsSquareOfEuclidean) {
  const auto pts = fixtures::random_points(4, 1);
  const auto e = CostModel::euclidean(facilities(pts));
  const auto s = CostModel::squared_euclidean(facilities(pts));
  for (const auto& x : fixtures::random_points(200, 2))
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = e.cost(Location{x}, k);
      EXPECT_NEAR(s.cost(Location{x}, k), d * d, 1e-14 * (1.0 + d * d));
    }
}

TEST(Cost, IndexOutOfRange) {
  const auto c = CostModel::euclidean(facilities({{0, 0}}));
  EXPECT_THROW(c.cost(Location{{0, 0}}, 1), IndexOutOfRange);
}

TEST(Cost, MatrixLookup) {
  auto c = CostModel::matrix(facilities({{0, 0}, {1, 1}}),
                             {{"s1", {10.0, 1234.0}}, {"s2", {5.0, 6.0}}}, "seconds");
  EXPECT_EQ(c.cost("s1", 1), 1234.0);
  EXPECT_EQ(c.units(), "seconds");
  EXPECT_THROW(c.cost("nowhere", 0), UnknownSite);
  DiscretePopulation pop({{"s2", {0, 0}, {1}}, {"s1", {1, 0}, {1}}});
  c.bind(pop);
  EXPECT_EQ(c.cost(pop.location(1), 1), 1234.0);
  EXPECT_EQ(c.cost(pop.location(0), 0), 5.0);
}

TEST(Cost, MatrixBindNeedsEverySite) {
  auto c = CostModel::matrix(facilities({{0, 0}}), {{"s1", {1.0}}});
  DiscretePopulation pop({{"s1", {0, 0}, {1}}, {"s9", {1, 0}, {2}}});
  EXPECT_THROW(c.bind(pop), UnknownSite);
}

TEST(LoadCostMatrix, TwoByTwo) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "c.csv", "site_id,c_1,c_2\na,1.5,2.25\nb,0.1,7\n");
  const auto c = load_cost_matrix(dir / "c.csv", facilities({{0, 0}, {1, 0}}));
  EXPECT_EQ(c.cost("a", 0), 1.5);
  EXPECT_EQ(c.cost("a", 1), 2.25);
  EXPECT_EQ(c.cost("b", 0), 0.1);
  EXPECT_EQ(c.cost("b", 1), 7.0);
}

TEST(LoadCostMatrix, ShortRowIsDimensionMismatch) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "c.csv", "site_id,c_1,c_2\na,1.5\n");
  EXPECT_THROW(load_cost_matrix(dir / "c.csv", facilities({{0, 0}, {1, 0}})), DimensionMismatch);
  fixtures::write_file(dir / "d.csv", "site_id,c_1\na,1.5\n");
  EXPECT_THROW(load_cost_matrix(dir / "d.csv", facilities({{0, 0}, {1, 0}})), DimensionMismatch);
}

TEST(LoadCostMatrix, NegativeCostIsParseError) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "c.csv", "site_id,c_1,c_2\na,1.5,-2\n");
  EXPECT_THROW(load_cost_matrix(dir / "c.csv", facilities({{0, 0}, {1, 0}})), ParseError);
}

TEST(LoadFacilities, Parses) {
  fixtures::TempDir dir;
  fixtures::write_file(dir / "f.csv", "facility_id,x,y\nnorth,0.5,1\nsouth,0.5,0\n");
  const auto fs = load_facilities(dir / "f.csv");
  ASSERT_EQ(fs.size(), 2u);
  EXPECT_EQ(fs.labels[0], "north");
  EXPECT_EQ(fs.locations[1], (Point{0.5, 0.0}));
  fixtures::write_file(dir / "g.csv", "facility_id,x,y\n");
  EXPECT_THROW(load_facilities(dir / "g.csv"), ParseError);
}

TEST(Cost, ParseKind) {
  EXPECT_EQ(parse_cost_kind("squared_euclidean"), CostKind::squared_euclidean);
  EXPECT_THROW(parse_cost_kind("manhattan"), ConfigError);
}

// The set where two facilities cost the same shrinks with grid refinement.
TEST(Cost, EqualityFractionVanishesOnRefinement) {
  for (const auto& c : {CostModel::euclidean(facilities({{0.2, 0.3}, {0.7, 0.6}})),
                        CostModel::squared_euclidean(facilities({{0.2, 0.3}, {0.7, 0.6}}))}) {
    double previous = 1.0;
    for (int n : {16, 64, 256}) {
      int equal = 0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const Location x{{(i + 0.5) / n, (j + 0.5) / n}};
          equal += std::abs(c.cost(x, 0) - c.cost(x, 1)) < 1e-12;
        }
      const double frac = equal / double(n * n);
      EXPECT_LE(frac, previous);
      previous = frac;
    }
    EXPECT_LT(previous, 1e-3);
  }
}

TEST(Cost, CoincidentFacilitiesReported) {
  const auto c = CostModel::euclidean(facilities({{0, 0}, {1, 0}, {0, 0}}));
  const auto pairs = c.coincident_facilities();
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], (std::pair<std::size_t, std::size_t>{0, 2}));
}

TEST(Cost, MedianPairwiseCost) {
  const auto c = CostModel::euclidean(facilities({{0, 0}, {1, 0}, {3, 0}}));
  EXPECT_DOUBLE_EQ(*c.median_pairwise_cost(), 2.0);
  EXPECT_FALSE(CostModel::euclidean(facilities({{0, 0}})).median_pairwise_cost().has_value());
}
