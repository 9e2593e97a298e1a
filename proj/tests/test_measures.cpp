#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "equipart/io.hpp"
#include "equipart/measure.hpp"
#include "equipart/rng.hpp"

using namespace equipart;

namespace {

ConvexBody unit_square() { return ConvexBody::box({0.0, 0.0}, {1.0, 1.0}); }

Measure uniform_square(double mass, std::uint64_t seed,
                       std::size_t budget = 0) {
  return build_measure(MeasureSpec::uniform(unit_square(), mass, seed, budget));
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("uniform unit square has density 1 and exact total integral") {
  Measure m = uniform_square(1.0, 11);
  CHECK(m.density_at(std::vector<double>{0.5, 0.5}) == Catch::Approx(1.0));
  CHECK(m.density_at(std::vector<double>{2.0, 0.5}) == 0.0);
  // constant-true indicator integrates to the total mass exactly
  CHECK(m.integrate([](std::span<const double>) { return true; }) == 1.0);
  CHECK(m.cache().count == kDefaultSamplesPerUnitMass);
}

TEST_CASE("total mass scales the density") {
  Measure m = uniform_square(3.0, 12);
  CHECK(m.density_at(std::vector<double>{0.25, 0.75}) == Catch::Approx(3.0));
  CHECK(m.integrate([](std::span<const double>) { return true; }) == 3.0);
}

TEST_CASE("half-square indicator integrates to half the mass") {
  Measure m = uniform_square(1.0, 13);
  const double est =
      m.integrate([](std::span<const double> x) { return x[0] <= 0.5; });
  const double se = std::sqrt(0.25 / static_cast<double>(m.cache().count));
  CHECK(std::abs(est - 0.5) <= 3.0 * se);
}

TEST_CASE("disjoint mixture splits its mass by the closed-form integrals") {
  // 0.5 uniform(A) + 0.5 uniform(B) on disjoint unit squares, total mass 2:
  // each square carries mass 1.
  MeasureSpec spec;
  spec.dimension = 2;
  spec.total_mass = 2.0;
  spec.seed = 14;
  spec.sample_budget = 1000000;
  spec.components.push_back(
      {0.5, ConvexBody::box({0.0, 0.0}, {1.0, 1.0}), std::nullopt});
  spec.components.push_back(
      {0.5, ConvexBody::box({2.0, 0.0}, {3.0, 1.0}), std::nullopt});
  Measure m = build_measure(spec);
  const double in_a =
      m.integrate([](std::span<const double> x) { return x[0] <= 1.5; });
  const double se = 2.0 * std::sqrt(0.25 / 1e6);
  CHECK(std::abs(in_a - 1.0) <= 3.0 * se);
  CHECK(m.density_at(std::vector<double>{0.5, 0.5}) == Catch::Approx(1.0));
  CHECK(m.density_at(std::vector<double>{2.5, 0.5}) == Catch::Approx(1.0));
  CHECK(m.density_at(std::vector<double>{1.5, 0.5}) == 0.0);
}

TEST_CASE("concentric disc carries the area-ratio mass") {
  Measure m = build_measure(
      MeasureSpec::uniform(ConvexBody::ball({0.0, 0.0}, 1.0), 1.0, 15));
  const double inner = m.integrate([](std::span<const double> x) {
    return x[0] * x[0] + x[1] * x[1] <= 0.25;
  });
  const double se =
      std::sqrt(0.25 * 0.75 / static_cast<double>(m.cache().count));
  CHECK(std::abs(inner - 0.25) <= 3.0 * se);
}

TEST_CASE("restriction keeps exactly the in-cell samples") {
  Measure m = uniform_square(1.0, 16);
  const std::vector<Halfspace> left{{{1.0, 0.0}, 0.5}};
  Measure r = m.restricted(left);
  // consistency: restriction mass equals the indicator integral exactly
  CHECK(r.total_mass() == m.integrate_cell(left));
  for (std::size_t i = 0; i < r.cache().count; i += 997)
    CHECK(r.cache().point(i)[0] <= 0.5);
  // empty halfspace list restricts to an identical measure
  Measure same = m.restricted({});
  CHECK(same.total_mass() == m.total_mass());
  CHECK(same.cache().count == m.cache().count);
}

TEST_CASE("quadrant of a mass-4 square has mass 1") {
  Measure m = uniform_square(4.0, 17);
  const std::vector<Halfspace> quadrant{{{1.0, 0.0}, 0.5}, {{0.0, 1.0}, 0.5}};
  Measure r = m.restricted(quadrant);
  const double se =
      4.0 * std::sqrt(0.25 * 0.75 / static_cast<double>(m.cache().count));
  CHECK(std::abs(r.total_mass() - 1.0) <= 3.0 * se);
}

TEST_CASE("restriction mass is monotone in the halfspace list") {
  Measure m = uniform_square(1.0, 18);
  std::vector<Halfspace> cell;
  double last = m.total_mass();
  Rng rng(99);
  for (int i = 0; i < 6; ++i) {
    cell.push_back(Halfspace{{rng.uniform(-1, 1), rng.uniform(-1, 1)},
                             rng.uniform(0.2, 0.9)});
    const double mass = m.integrate_cell(cell);
    CHECK(mass <= last + 1e-15);
    last = mass;
    if (mass == 0.0) break;
  }
}

TEST_CASE("same spec and seed reproduce the cache bit for bit") {
  Measure a = uniform_square(1.0, 19, 5000);
  Measure b = uniform_square(1.0, 19, 5000);
  REQUIRE(a.cache().coords.size() == b.cache().coords.size());
  CHECK(a.cache().coords == b.cache().coords);
  Measure c = uniform_square(1.0, 20, 5000);
  CHECK(a.cache().coords != c.cache().coords);
}

TEST_CASE("truncated gaussian renormalizes over its support") {
  MeasureSpec spec = MeasureSpec::gaussian(unit_square(), {0.3, 0.4},
                                           {0.2, 0.3}, 2.0, 21);
  Measure m = build_measure(spec);
  CHECK(m.integrate([](std::span<const double>) { return true; }) == 2.0);
  // independent quadrature oracle: mean density over the bounding box times
  // its volume approximates the total mass
  Rng rng(777);
  double acc = 0.0;
  const int quad = 200000;
  std::vector<double> pt(2);
  for (int i = 0; i < quad; ++i) {
    pt[0] = rng.uniform(0.0, 1.0);
    pt[1] = rng.uniform(0.0, 1.0);
    acc += m.density_at(pt);
  }
  const double est = acc / quad;  // box volume 1
  CHECK(std::abs(est - 2.0) <= 0.04);
}

TEST_CASE("build rejections") {
  CHECK_THROWS_AS(build_measure(MeasureSpec::uniform(unit_square(), -1.0, 1)),
                  std::invalid_argument);
  MeasureSpec bad_weight;
  bad_weight.dimension = 2;
  bad_weight.total_mass = 1.0;
  bad_weight.components.push_back({-0.5, unit_square(), std::nullopt});
  bad_weight.components.push_back({1.5, unit_square(), std::nullopt});
  CHECK_THROWS_AS(build_measure(bad_weight), std::invalid_argument);
  MeasureSpec bad_sigma = MeasureSpec::gaussian(unit_square(), {0.5, 0.5},
                                                {0.1, 0.0}, 1.0, 2);
  CHECK_THROWS_AS(build_measure(bad_sigma), std::invalid_argument);
  // unbounded support is unrepresentable: a degenerate box is the closest
  CHECK_THROWS_AS(ConvexBody::box({0.0, 0.0}, {1.0, 0.0}),
                  std::invalid_argument);
}

TEST_CASE("zero-measure restriction is a degenerate partition step") {
  Measure m = uniform_square(1.0, 22, 10000);
  const std::vector<Halfspace> off_support{{{1.0, 0.0}, -5.0}};
  CHECK_THROWS_AS(m.restricted(off_support), std::runtime_error);
}

TEST_CASE("predicate complement splits the cache with nothing lost") {
  Measure m = uniform_square(2.0, 23);
  auto pred = [](std::span<const double> x) {
    return 0.3 * x[0] - 0.8 * x[1] <= 0.1;
  };
  const double inside = m.integrate(pred);
  const double outside =
      m.integrate([&pred](std::span<const double> x) { return !pred(x); });
  CHECK(inside + outside == Catch::Approx(m.total_mass()).epsilon(1e-12));
}

TEST_CASE("sample cloud loading") {
  const auto corners = temp_file("equipart_corners.txt");
  {
    std::ofstream out(corners);
    out << "0 0\n1 0\n0 1\n1 1\n";
  }
  Measure m = load_sample_cloud(corners.string(), 1.0);
  CHECK(m.empirical());
  CHECK(m.integrate([](std::span<const double>) { return true; }) == 1.0);
  CHECK_THROWS_AS(m.density_at(std::vector<double>{0.5, 0.5}),
                  std::logic_error);

  // binomial error bound on a large uniform cloud
  const auto cloud = temp_file("equipart_cloud.txt");
  {
    std::ofstream out(cloud);
    Rng rng(24);
    for (int i = 0; i < 100000; ++i)
      out << format_full(rng.uniform01()) << ' ' << format_full(rng.uniform01())
          << '\n';
  }
  Measure big = load_sample_cloud(cloud.string(), 1.0);
  const double est =
      big.integrate([](std::span<const double> x) { return x[0] <= 0.5; });
  const double se = std::sqrt(0.25 / 1e5);
  CHECK(std::abs(est - 0.5) <= 3.0 * se);

  const auto ragged = temp_file("equipart_ragged.txt");
  {
    std::ofstream out(ragged);
    out << "0 0\n1 0\n0.5 0.5 0.5\n1 1\n";
  }
  CHECK_THROWS_AS(load_sample_cloud(ragged.string(), 1.0), ParseError);

  const auto tiny = temp_file("equipart_tiny.txt");
  {
    std::ofstream out(tiny);
    out << "0 0\n1 1\n";
  }
  CHECK_THROWS_AS(load_sample_cloud(tiny.string(), 1.0),
                  std::invalid_argument);
}

TEST_CASE("weighted cloud normalizes its weights") {
  const auto weighted = temp_file("equipart_weighted.txt");
  {
    std::ofstream out(weighted);
    out << "dim 2\n";
    out << "0 0 1\n1 0 1\n0 1 1\n1 1 5\n";
  }
  Measure m = load_sample_cloud(weighted.string(), 2.0);
  const double top_right = m.integrate(
      [](std::span<const double> x) { return x[0] > 0.5 && x[1] > 0.5; });
  CHECK(top_right == Catch::Approx(2.0 * 5.0 / 8.0));
}
