#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "equipart/equipartition.hpp"
#include "equipart/measure.hpp"
#include "equipart/rng.hpp"
#include "equipart/verify.hpp"

using namespace equipart;

namespace {

Measure uniform_square(double mass, std::uint64_t seed, std::size_t budget) {
  return build_measure(MeasureSpec::uniform(
      ConvexBody::box({0.0, 0.0}, {1.0, 1.0}), mass, seed, budget));
}

Measure uniform_disc(double mass, std::uint64_t seed, std::size_t budget) {
  return build_measure(MeasureSpec::uniform(ConvexBody::ball({0.5, 0.5}, 0.5),
                                            mass, seed, budget));
}

Measure blob_pair(double mass, std::uint64_t seed, std::size_t budget,
                  double shift) {
  MeasureSpec spec;
  spec.dimension = 2;
  spec.total_mass = mass;
  spec.seed = seed;
  spec.sample_budget = budget;
  spec.components.push_back(
      {0.6, ConvexBody::box({0.0, 0.0}, {1.0, 1.0}),
       GaussianParams{{0.3 + shift, 0.35}, {0.12, 0.1}}});
  spec.components.push_back(
      {0.4, ConvexBody::box({0.0, 0.0}, {1.0, 1.0}),
       GaussianParams{{0.7, 0.65 + shift}, {0.1, 0.14}}});
  return build_measure(spec);
}

SearchParams quick_search(std::uint64_t seed, int restarts = 8) {
  SearchParams sp;
  sp.seed = seed;
  sp.restarts = restarts;
  sp.max_iterations = 1500;
  sp.coarse_samples_per_unit = 20000;
  return sp;
}

}  // namespace

TEST_CASE("collapse groups repeated points in order of first appearance") {
  TupleConfig x{2, {0.3, 0.3, 0.7, 0.7, 0.3, 0.3}};
  CollapsedConfig cc = collapse_tuple(x, 1e-9);
  REQUIRE(cc.multiplicities == std::vector<int>{2, 1});
  CHECK(cc.site_of_point == std::vector<int>{0, 1, 0});
  CHECK(cc.config.capacities == std::vector<double>{2.0, 1.0});
  CHECK(cc.config.site(0)[0] == 0.3);
  CHECK(cc.config.site(1)[0] == 0.7);
}

TEST_CASE("weight profile of a symmetric pair is zero") {
  Measure m = uniform_square(2.0, 81, 60000);
  TupleConfig x{2, {0.25, 0.5, 0.75, 0.5}};
  const auto prof = weight_profile(x, m);
  REQUIRE(prof.size() == 2);
  CHECK(std::abs(prof[0]) <= 1e-2);
  CHECK(std::abs(prof[1]) <= 1e-2);
  CHECK(std::abs(prof[0] + prof[1]) <= 1e-9);
}

TEST_CASE("weight profile expands by multiplicity and sums to zero") {
  Measure m = uniform_square(3.0, 82, 60000);
  TupleConfig x{2, {0.2, 0.4, 0.2, 0.4, 0.8, 0.6}};
  const auto prof = weight_profile(x, m);
  REQUIRE(prof.size() == 3);
  CHECK(prof[0] == prof[1]);  // repeated point carries the repeated weight
  CHECK(std::abs(prof[0] + prof[1] + prof[2]) <= 1e-9);
}

TEST_CASE("two sites on a mass-2 square bisect at the midline") {
  Measure m = uniform_square(2.0, 83, 60000);
  TupleConfig x{2, {0.0, 0.0, 1.0, 0.0}};
  const auto prof = weight_profile(x, m);
  // boundary x_1 = (1 + w_1 - w_2)/2 must sit at 0.5, so the profile is 0
  CHECK(std::abs(prof[0]) <= 1e-2);
  CHECK(std::abs(prof[0] + prof[1]) <= 1e-9);
}

TEST_CASE("weight profile rejects an all-coincident tuple") {
  Measure m = uniform_square(2.0, 84, 5000);
  TupleConfig x{2, {0.5, 0.5, 0.5, 0.5}};
  CHECK_THROWS_AS(weight_profile(x, m), std::invalid_argument);
}

TEST_CASE("discrepancy map vanishes identically for identical measures") {
  Measure m = uniform_square(2.0, 85, 40000);
  std::vector<Measure> measures{m, m};
  TupleConfig x{2, {0.2, 0.3, 0.7, 0.8}};
  const auto f = discrepancy_map(x, measures);
  REQUIRE(f.size() == 2);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.0);
}

TEST_CASE("discrepancy map for a single measure is empty") {
  Measure m = uniform_square(2.0, 86, 20000);
  TupleConfig x{2, {0.2, 0.3, 0.7, 0.8}};
  CHECK(discrepancy_map(x, {m}).empty());
}

TEST_CASE("centrally symmetric measures with an antipodal pair give zero") {
  Measure sq = uniform_square(2.0, 87, 100000);
  Measure ball = uniform_disc(2.0, 88, 100000);
  std::vector<Measure> measures{sq, ball};
  TupleConfig x{2, {0.2, 0.3, 0.8, 0.7}};  // antipodal about (0.5, 0.5)
  const auto f = discrepancy_map(x, measures);
  for (double v : f) CHECK(std::abs(v) <= 1.5e-2);
}

TEST_CASE("cyclic shifts act equivariantly on the discrepancy map") {
  Measure a = uniform_square(3.0, 89, 50000);
  Measure b = blob_pair(3.0, 90, 150000, 0.0);
  std::vector<Measure> measures{a, b};
  Rng rng(91);
  for (int trial = 0; trial < 3; ++trial) {
    TupleConfig x{2, {}};
    for (int j = 0; j < 6; ++j) x.points.push_back(rng.uniform(0.1, 0.9));
    TupleConfig shifted{2, {}};
    shifted.points.insert(shifted.points.end(), x.points.begin() + 2,
                          x.points.end());
    shifted.points.push_back(x.points[0]);
    shifted.points.push_back(x.points[1]);
    const auto f = discrepancy_map(x, measures);
    const auto g = discrepancy_map(shifted, measures);
    REQUIRE(f.size() == 3);
    REQUIRE(g.size() == 3);
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(g[j] - f[(j + 1) % 3]) <= 1e-2);
  }
}

TEST_CASE("prime search halves two identical squares") {
  std::vector<Measure> measures{uniform_square(2.0, 92, 60000),
                                uniform_square(2.0, 93, 60000)};
  PrimeSolveResult r = solve_prime(2, measures, quick_search(1));
  REQUIRE(r.success);
  REQUIRE(r.multiplicities == std::vector<int>{1, 1});
  for (const auto& masses : r.cell_masses)
    for (double v : masses) CHECK(std::abs(v - 1.0) <= 2e-2);
}

TEST_CASE("prime search matches the brute-force hyperplane oracle") {
  std::vector<Measure> measures{blob_pair(2.0, 94, 120000, 0.0),
                                blob_pair(2.0, 95, 120000, 0.15)};
  EquipartitionParams params;
  params.search = quick_search(2);
  EquipartitionResult solved = equipartition(2, measures, params);
  REQUIRE(solved.success);
  HyperplaneSearchResult oracle =
      brute_force_hyperplane(measures, BruteForceGrid{360, 400});
  CHECK(solved.max_deviation <= oracle.deviation + 5e-3);
}

TEST_CASE("three parts of a disc pair") {
  std::vector<Measure> measures{uniform_disc(3.0, 96, 90000),
                                uniform_disc(3.0, 97, 90000)};
  PrimeSolveResult r = solve_prime(3, measures, quick_search(3));
  REQUIRE(r.success);
  const int sum = std::accumulate(r.multiplicities.begin(),
                                  r.multiplicities.end(), 0);
  CHECK(sum == 3);
  for (const auto& masses : r.cell_masses)
    for (std::size_t j = 0; j < masses.size(); ++j)
      CHECK(std::abs(masses[j] - r.multiplicities[j]) <= 3e-2);
}

TEST_CASE("solve_prime validates its inputs") {
  std::vector<Measure> measures{uniform_square(4.0, 98, 5000),
                                uniform_square(4.0, 99, 5000)};
  CHECK_THROWS_AS(solve_prime(4, measures, quick_search(4)),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_prime(2, measures, quick_search(4)),
                  std::invalid_argument);  // mass != p
}

TEST_CASE("k = 1 returns the whole space exactly") {
  std::vector<Measure> measures{uniform_square(1.0, 100, 5000),
                                uniform_square(1.0, 101, 5000)};
  EquipartitionResult r = equipartition(1, measures);
  REQUIRE(r.success);
  REQUIRE(r.parts.size() == 1);
  CHECK(r.parts[0].empty());
  CHECK(r.max_deviation == 0.0);
  for (const auto& row : r.masses) CHECK(row[0] == 1.0);
}

TEST_CASE("k = 4 via the composite route") {
  std::vector<Measure> measures{uniform_square(4.0, 102, 160000),
                                blob_pair(4.0, 103, 160000, 0.1)};
  EquipartitionParams params;
  params.search = quick_search(5);
  EquipartitionResult r = equipartition(4, measures, params);
  REQUIRE(r.success);
  REQUIRE(r.parts.size() == 4);
  CHECK(r.max_deviation <= 2e-2);
  // partition validity on the caches
  VerifyOptions vo;
  vo.deviation_target = 1.0;
  std::vector<Measure> rescaled;
  for (const auto& m : measures) rescaled.push_back(m.with_total_mass(4.0));
  PartitionReport rep = verify_partition(r.parts, rescaled, vo);
  CHECK(rep.coverage_defects == 0);
  CHECK(rep.convexity_ok);
  CHECK(rep.max_deviation == r.max_deviation);  // bookkeeping identity
}

TEST_CASE("solve_composite with a unit factor is plain equipartition") {
  std::vector<Measure> measures{uniform_square(3.0, 104, 60000),
                                uniform_square(3.0, 105, 60000)};
  EquipartitionParams params;
  params.search = quick_search(6);
  EquipartitionResult direct = equipartition(3, measures, params);
  EquipartitionResult composite = solve_composite(3, 1, measures, params);
  REQUIRE(direct.success);
  REQUIRE(composite.success);
  CHECK(direct.parts.size() == composite.parts.size());
  CHECK(direct.max_deviation == composite.max_deviation);
}

TEST_CASE("explicit composite two-by-two stage") {
  std::vector<Measure> measures{uniform_square(4.0, 106, 120000),
                                uniform_disc(4.0, 107, 120000)};
  EquipartitionParams params;
  params.search = quick_search(7);
  EquipartitionResult r = solve_composite(2, 2, measures, params);
  REQUIRE(r.success);
  REQUIRE(r.parts.size() == 4);
  CHECK(r.max_deviation <= 2e-2);
  CHECK(r.tree.parts_target == 4);
}

TEST_CASE("six parts across two gaussian mixtures") {
  std::vector<Measure> measures{blob_pair(6.0, 108, 240000, 0.0),
                                blob_pair(6.0, 109, 240000, 0.12)};
  EquipartitionParams params;
  params.search = quick_search(8);
  EquipartitionResult r = equipartition(6, measures, params);
  REQUIRE(r.success);
  REQUIRE(r.parts.size() == 6);
  CHECK(r.max_deviation <= 2e-2);
}

TEST_CASE("one-dimensional measures split by quantiles") {
  MeasureSpec spec = MeasureSpec::uniform(ConvexBody::box({0.0}, {1.0}), 4.0,
                                          110, 80000);
  std::vector<Measure> measures{build_measure(spec)};
  EquipartitionResult r = equipartition(4, measures);
  REQUIRE(r.success);
  REQUIRE(r.parts.size() == 4);
  CHECK(r.max_deviation <= 1e-3);
  CHECK(r.tree.kind == PartitionNode::Kind::quantile_split);
}

TEST_CASE("the recursion tree records the solve") {
  std::vector<Measure> measures{uniform_square(2.0, 111, 40000),
                                uniform_square(2.0, 112, 40000)};
  EquipartitionParams params;
  params.search = quick_search(9);
  EquipartitionResult r = equipartition(2, measures, params);
  REQUIRE(r.success);
  CHECK(r.tree.kind == PartitionNode::Kind::prime_split);
  CHECK(r.tree.prime_p == 2);
  CHECK(r.tree.parts_target == 2);
  const int msum = std::accumulate(r.tree.multiplicities.begin(),
                                   r.tree.multiplicities.end(), 0);
  CHECK(msum == 2);
  CHECK(r.tree.children.size() == r.tree.cells.size());
  // zero-sum of the recorded collapsed weights under the multiplicities
  double wc = 0.0;
  for (std::size_t h = 0; h < r.tree.weights.size(); ++h)
    wc += r.tree.weights[h] * r.tree.multiplicities[h];
  CHECK(std::abs(wc) <= 1e-12);
}

TEST_CASE("driver validates inputs") {
  std::vector<Measure> measures{uniform_square(1.0, 113, 5000)};
  CHECK_THROWS_AS(equipartition(0, measures), std::invalid_argument);
  CHECK_THROWS_AS(equipartition(2, std::vector<Measure>{}),
                  std::invalid_argument);
  std::vector<Measure> three{uniform_square(1.0, 114, 5000),
                             uniform_square(1.0, 115, 5000),
                             uniform_square(1.0, 116, 5000)};
  CHECK_THROWS_AS(equipartition(2, three), std::invalid_argument);
}
