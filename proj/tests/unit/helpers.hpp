#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fairpart/costmodel.hpp"
#include "fairpart/oracle.hpp"
#include "fairpart/population.hpp"

namespace fairpart::fixtures {

/// Density with a fixed value everywhere, sampled uniformly from a box.
class ConstantDensity final : public Density {
 public:
  ConstantDensity(double value, Bounds box) : value_(value), box_(box) {}
  double evaluate(const Point&) const override { return value_; }
  Point sample(Rng& rng) const override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return {box_.xmin + u(rng) * (box_.xmax - box_.xmin), box_.ymin + u(rng) * (box_.ymax - box_.ymin)};
  }

 private:
  double value_;
  Bounds box_;
};

inline FacilitySet facilities(std::vector<Point> pts) {
  FacilitySet fs;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    fs.locations.push_back(pts[k]);
    fs.labels.push_back(std::to_string(k + 1));
  }
  return fs;
}

inline std::shared_ptr<const GroupMixture> uniform_groups(std::vector<double> q, Bounds box = {}) {
  std::vector<std::shared_ptr<const Density>> d;
  for (std::size_t z = 0; z < q.size(); ++z) d.push_back(std::make_shared<UniformBoxDensity>(box));
  return std::make_shared<GroupMixture>(std::move(q), std::move(d), box);
}

/// Random site table with integer counts in [0, 20] and at least one
/// person per group.
inline DiscretePopulation random_sites(std::size_t sites, std::size_t groups, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> c(0, 20);
  std::vector<Site> out;
  for (std::size_t s = 0; s < sites; ++s) {
    Site site{"s" + std::to_string(s), {u(rng), u(rng)}, {}};
    for (std::size_t z = 0; z < groups; ++z) site.counts.push_back(c(rng));
    out.push_back(std::move(site));
  }
  for (std::size_t z = 0; z < groups; ++z) out[z % sites].counts[z] += 5;
  return DiscretePopulation(std::move(out));
}

inline std::vector<Point> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
  return pts;
}

inline DiscreteInstance random_instance(std::size_t sites, std::size_t k, std::size_t m,
                                        std::uint64_t seed) {
  return DiscreteInstance::make(random_sites(sites, m, seed),
                                CostModel::euclidean(facilities(random_points(k, seed ^ 0x9e37))));
}

/// s1 holds only group 1 and sits on facility 1; s2 holds only group 2 and
/// sits on facility 2.
inline DiscreteInstance segregated_pair() {
  std::vector<Site> sites{{"s1", {0.0, 0.0}, {1.0, 0.0}}, {"s2", {1.0, 0.0}, {0.0, 1.0}}};
  return DiscreteInstance::make(DiscretePopulation(std::move(sites)),
                                CostModel::euclidean(facilities({{0.0, 0.0}, {1.0, 0.0}})));
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fairpart_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fairpart::fixtures
