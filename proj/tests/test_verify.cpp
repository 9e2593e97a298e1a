#include <catch2/catch_amalgamated.hpp>

#include <cmath>

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

Measure blob(double mass, std::uint64_t seed, std::size_t budget,
             double cx, double cy) {
  return build_measure(MeasureSpec::gaussian(
      ConvexBody::box({0.0, 0.0}, {1.0, 1.0}), {cx, cy}, {0.15, 0.12}, mass,
      seed, budget));
}

}  // namespace

TEST_CASE("the whole space verifies exactly") {
  std::vector<Measure> measures{uniform_square(1.0, 121, 20000),
                                uniform_square(1.0, 122, 20000)};
  PartitionReport rep = verify_partition({{}}, measures);
  CHECK(rep.coverage_defects == 0);
  CHECK(rep.max_deviation == 0.0);
  CHECK(rep.masses[0][0] == 1.0);
  CHECK(rep.convexity_ok);
}

TEST_CASE("a center bisector splits symmetric measures within MC tolerance") {
  std::vector<Measure> measures{uniform_square(2.0, 123, 100000),
                                uniform_square(2.0, 124, 100000)};
  std::vector<std::vector<Halfspace>> parts{{{{1.0, 0.0}, 0.5}},
                                            {{{-1.0, 0.0}, -0.5}}};
  PartitionReport rep = verify_partition(parts, measures);
  const double se = 2.0 * std::sqrt(0.25 / 1e5);
  CHECK(rep.max_deviation <= 3.0 * se);
  CHECK(rep.coverage_defects == 0);
  // rows sum to the total mass exactly on the cache
  for (const auto& row : rep.masses)
    CHECK(row[0] + row[1] == Catch::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("overlapping parts are reported as coverage defects") {
  std::vector<Measure> measures{uniform_square(2.0, 125, 30000)};
  std::vector<std::vector<Halfspace>> overlapping{{{{1.0, 0.0}, 0.6}},
                                                  {{{-1.0, 0.0}, -0.4}}};
  PartitionReport rep = verify_partition(overlapping, measures);
  CHECK(rep.coverage_defects > 0);
}

TEST_CASE("a gap between parts is reported as coverage defects") {
  std::vector<Measure> measures{uniform_square(2.0, 126, 30000)};
  std::vector<std::vector<Halfspace>> gappy{{{{1.0, 0.0}, 0.4}},
                                            {{{-1.0, 0.0}, -0.6}}};
  PartitionReport rep = verify_partition(gappy, measures);
  CHECK(rep.coverage_defects > 0);
}

TEST_CASE("tampering with one offset breaks the deviation tolerance") {
  std::vector<Measure> measures{uniform_square(2.0, 127, 80000),
                                blob(2.0, 128, 80000, 0.45, 0.55)};
  EquipartitionParams params;
  params.search.seed = 11;
  params.search.restarts = 8;
  params.search.coarse_samples_per_unit = 20000;
  EquipartitionResult r = equipartition(2, measures, params);
  REQUIRE(r.success);
  REQUIRE(r.max_deviation <= 2e-2);

  auto tampered = r.parts;
  const double diam = std::sqrt(2.0);
  tampered[0][0].offset += 0.1 * diam;
  std::vector<Measure> rescaled;
  for (const auto& m : measures) rescaled.push_back(m.with_total_mass(2.0));
  VerifyOptions vo;
  vo.deviation_target = 1.0;
  PartitionReport rep = verify_partition(tampered, rescaled, vo);
  CHECK((rep.max_deviation > 2e-2 || rep.coverage_defects > 0));
}

TEST_CASE("oracle: symmetric pair admits a near-perfect line") {
  std::vector<Measure> measures{uniform_square(2.0, 129, 100000),
                                uniform_square(2.0, 130, 100000)};
  HyperplaneSearchResult res = brute_force_hyperplane(measures);
  const double se = 2.0 * std::sqrt(0.25 / 1e5);
  CHECK(res.deviation <= 3.0 * se);
}

TEST_CASE("oracle deviation never worsens under nested refinement") {
  std::vector<Measure> measures{blob(2.0, 131, 60000, 0.3, 0.4),
                                blob(2.0, 132, 60000, 0.65, 0.6)};
  const double coarse =
      brute_force_hyperplane(measures, BruteForceGrid{90, 64}).deviation;
  const double fine =
      brute_force_hyperplane(measures, BruteForceGrid{180, 128}).deviation;
  CHECK(fine <= coarse + 1e-12);
}

TEST_CASE("oracle validates its domain") {
  std::vector<Measure> measures{uniform_square(1.0, 133, 5000)};
  CHECK_THROWS_AS(brute_force_hyperplane(measures), std::invalid_argument);
  MeasureSpec spec = MeasureSpec::uniform(
      ConvexBody::box({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}), 2.0, 134, 5000);
  std::vector<Measure> m3{build_measure(spec)};
  CHECK_THROWS_AS(brute_force_hyperplane(m3), std::invalid_argument);
}

TEST_CASE("convexity spot checks accept halfspace cells") {
  std::vector<Measure> measures{uniform_square(4.0, 135, 40000)};
  std::vector<std::vector<Halfspace>> quadrants;
  for (int qx = 0; qx < 2; ++qx)
    for (int qy = 0; qy < 2; ++qy) {
      std::vector<Halfspace> cell;
      cell.push_back(qx == 0 ? Halfspace{{1.0, 0.0}, 0.5}
                             : Halfspace{{-1.0, 0.0}, -0.5});
      cell.push_back(qy == 0 ? Halfspace{{0.0, 1.0}, 0.5}
                             : Halfspace{{0.0, -1.0}, -0.5});
      quadrants.push_back(std::move(cell));
    }
  PartitionReport rep = verify_partition(quadrants, measures);
  CHECK(rep.convexity_ok);
  CHECK(rep.coverage_defects == 0);
  CHECK(rep.max_deviation <= 0.02);
}
