#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/market.hpp"

using namespace spotmarket;

namespace {

bool mentions(const ValidationReport& r, const std::string& where, const std::string& what) {
  for (const auto& v : r.violations)
    if (v.location.find(where) != std::string::npos && v.message.find(what) != std::string::npos)
      return true;
  return false;
}

}  // namespace

TEST_CASE("example scenario validates and sweeps in canonical order") {
  auto s = fixture::example_scenario();
  CHECK(validate(s).ok());
  CHECK_NOTHROW(require_valid(s));
  std::swap(s.units[0], s.units[7]);
  s.canonicalize();
  CHECK(s.units.front().node == 0);
  CHECK(s.units.back().node == 1);
  CHECK(s.units.back().producer == 1);
  CHECK(s.units.back().index == 1);
  const auto ids = s.units_of(1, 0);
  REQUIRE(ids.size() == 2);
  CHECK(s.units[ids[0]].index == 0);
  CHECK(s.units[ids[1]].index == 1);
  CHECK(s.capacity(0, 1) == 20.0);
}

TEST_CASE("welfare accounting at the optimal profile") {
  const auto s = fixture::example_scenario();
  const GenerationProfile p(s, {5, 5, 10, 5, 5, 0, 10, 0});
  CHECK(p.node(0) == 25.0);
  CHECK(p.node(1) == 15.0);
  CHECK(p.node_producer(0, 1) == 15.0);
  CHECK(p.producer(0) == 15.0);
  // pollution: unit slopes 1,3,1,3 at each node
  CHECK(p.node_pollution(0, 0) == doctest::Approx(5 + 15 + 10 + 15));
  CHECK(p.node_pollution(1, 0) == doctest::Approx(5 + 0 + 10 + 0));

  const double u = oracle::example_utility(25.0, 15.0);
  const double cost = 2 * 5 + 1 * 5 + 2 * 10 + 1 * 5 + 4 * 5 + 4 * 10;
  const double damage = 1.0 * 45 + 2.0 * 15;
  CHECK(total_cost(s, p) == doctest::Approx(cost));
  CHECK(externality_cost(s, p) == doctest::Approx(damage));
  CHECK(social_welfare(s, p) == doctest::Approx(u - cost - damage).epsilon(1e-12));
  CHECK(social_welfare(s, p) == doctest::Approx(425.0).epsilon(1e-12));

  // profit at prices (4, 6)
  const std::vector<double> prices{4.0, 6.0};
  CHECK(producer_profit(s, p, 0, prices) == doctest::Approx(4 * 10 + 6 * 5 - (15 + 20)));
  CHECK(producer_profit(s, p, 1, prices) == doctest::Approx(4 * 15 + 6 * 10 - (25 + 40)));
  const auto x = pollution_totals(s, p);
  CHECK(x[0][0] == doctest::Approx(45.0));
  CHECK(x[1][0] == doctest::Approx(15.0));
}

TEST_CASE("empty market") {
  MarketScenario s;
  s.utilities = {PiecewiseCurve::capped_quadratic_utility(1.0, 10.0)};
  s.externality.damage = {{PiecewiseCurve::zero()}};
  CHECK(validate(s).ok());
  const auto p = GenerationProfile::zero(s);
  CHECK(social_welfare(s, p) == 0.0);
}

TEST_CASE("validation flags bad inputs") {
  SUBCASE("concave cost") {
    auto s = fixture::example_scenario();
    s.units[2].cost = PiecewiseCurve({{0, -0.05, 3.0, 0.0}}, 10.0, Curvature::Concave);
    const auto r = validate(s);
    CHECK_FALSE(r.ok());
    CHECK(mentions(r, "(1,2,1)", "not convex"));
    CHECK_THROWS_AS(require_valid(s), ValidationError);
  }
  SUBCASE("missing node and producer") {
    auto s = fixture::example_scenario();
    s.units[0].node = 5;
    s.units[1].producer = 9;
    const auto r = validate(s);
    CHECK(mentions(r, "unit", "missing node"));
    CHECK(mentions(r, "unit", "missing producer"));
  }
  SUBCASE("duplicate id") {
    auto s = fixture::example_scenario();
    s.units[1].index = 0;
    CHECK(mentions(validate(s), "unit", "duplicate"));
  }
  SUBCASE("cost shorter than capacity") {
    auto s = fixture::example_scenario();
    s.units[0].capacity = 6.0;
    CHECK(mentions(validate(s), "(1,1,1)", "cover"));
  }
  SUBCASE("utility count and caps") {
    auto s = fixture::example_scenario();
    s.utilities.pop_back();
    s.price_caps = std::vector<double>{1.0};
    s.incentive_offsets = {-1.0, 0.0};
    const auto r = validate(s);
    CHECK(mentions(r, "nodes", "utility"));
    CHECK(mentions(r, "price_caps", "one cap per node"));
    CHECK(mentions(r, "offsets", ">= 0"));
  }
  SUBCASE("ptdf width") {
    auto s = fixture::example_scenario();
    s.grid.lines[0].ptdf = {1.0};
    CHECK_FALSE(validate(s).ok());
  }
}

TEST_CASE("profile rejects quantities outside capacity") {
  const auto s = fixture::example_scenario();
  CHECK_THROWS(GenerationProfile(s, {6, 5, 10, 5, 5, 0, 10, 0}));
  CHECK_THROWS(GenerationProfile(s, {-1, 5, 10, 5, 5, 0, 10, 0}));
  CHECK_THROWS(GenerationProfile(s, {1, 2}));
}
