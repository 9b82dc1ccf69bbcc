#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/pricecap.hpp"

using namespace spotmarket;

TEST_CASE("golden: cap 1 on the two-node example") {
  const auto s = fixture::example_scenario();
  const std::vector<double> caps{1.0, 1.0};
  const auto r = solve_capped(s, caps);
  const std::vector<double> want{0, 5, 0, 10, 0, 0, 0, 0};
  for (std::size_t k = 0; k < want.size(); ++k) CHECK(r.equilibrium.profile.unit(k) == doctest::Approx(want[k]).epsilon(1e-6));
  CHECK(r.equilibrium.social_welfare == doctest::Approx(375.0).epsilon(1e-9));
  CHECK(r.equilibrium.prices[0] == doctest::Approx(1.0));
  CHECK(r.equilibrium.prices[1] == doctest::Approx(1.0));
  REQUIRE(r.desired_demand[0].has_value());
  CHECK(*r.desired_demand[0] == doctest::Approx(26.5).epsilon(1e-9));
  CHECK_FALSE(r.desired_demand[1].has_value());
  CHECK_FALSE(r.load_shed[1].has_value());
  CHECK(*r.load_shed[0] >= 0.0);
  CHECK(r.cap_binding[0]);
  CHECK(r.cap_binding[1]);
}

TEST_CASE("capped price never exceeds the cap") {
  const auto s = fixture::example_scenario();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> q(0.0, 30.0), c(0.5, 30.0);
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> at{q(rng), q(rng)}, caps{c(rng), c(rng)};
    const auto raw = nodal_price(s.grid, s.utilities, at);
    const auto p = capped_price(s.grid, s.utilities, at, caps);
    for (std::size_t n = 0; n < 2; ++n) {
      CHECK(p[n] <= caps[n]);
      CHECK(p[n] == std::min(raw[n], caps[n]));
    }
  }
  CHECK_THROWS_AS(capped_price(s.grid, s.utilities, std::vector<double>{1, 1}, std::vector<double>{1}), DomainError);
}

TEST_CASE("realized prices respect caps at capped equilibria") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> c(1.0, 30.0);
  for (int t = 0; t < 10; ++t) {
    const auto inst = fixture::random_single_node(rng);
    const std::vector<double> caps{c(rng)};
    const auto r = solve_capped(inst.scenario, caps);
    CHECK(r.equilibrium.prices[0] <= caps[0] + 1e-12);
    if (r.load_shed[0]) CHECK(*r.load_shed[0] >= 0.0);
  }
}

TEST_CASE("infinite cap reproduces the oligopolistic solve") {
  const auto s = fixture::example_scenario();
  const std::vector<double> caps{kInfinity, kInfinity};
  const auto r = solve_capped(s, caps);
  const auto olig = solve(EquilibriumKind::Oligopolistic, s);
  CHECK(r.equilibrium.profile == olig.profile);
  for (std::size_t n = 0; n < 2; ++n) CHECK(*r.load_shed[n] == 0.0);
}

TEST_CASE("desired demand on one node is the closed form") {
  Grid g;
  const std::vector<PiecewiseCurve> u{PiecewiseCurve::capped_quadratic_utility(1.0, 44.0)};
  const DemandModel m(g, u);
  for (double cap : {1.0, 8.0, 20.0, 43.0}) {
    const auto d = desired_demand(m, std::vector<double>{3.0}, 0, cap);
    REQUIRE(d.has_value());
    CHECK(*d == doctest::Approx((44.0 - cap) / 2.0).epsilon(1e-9));
  }
  CHECK(*desired_demand(m, std::vector<double>{3.0}, 0, 50.0) == 0.0);

  const std::vector<PiecewiseCurve> flat{PiecewiseCurve::linear(6.0, kInfinity, Curvature::Concave)};
  const DemandModel lin(g, flat);
  CHECK_FALSE(desired_demand(lin, std::vector<double>{3.0}, 0, 5.0).has_value());
}

TEST_CASE("cap regions order and declared curve") {
  const auto s = fixture::example_scenario();
  const auto olig = solve(EquilibriumKind::Oligopolistic, s);
  for (double cap : {3.0, 8.0, 20.0})
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t n = 0; n < 2; ++n) {
        const auto r = cap_regions(s, olig, i, n, cap);
        CHECK(r.q_hat <= r.q_tilde + 1e-12);
        const double top = s.capacity(n, i);
        for (double y = 0.0; y < top; y += 0.5) {
          // true marginal below the declared one, and capped in the middle region
          std::vector<MeritComponent> comps;
          for (std::size_t k : s.units_of(n, i)) comps.push_back({s.units[k].cost, s.units[k].capacity});
          const auto truth = merit_merge(comps).aggregate();
          CHECK(r.declared.right_derivative(y) >= truth.right_derivative(y) - 1e-9);
          if (y >= r.q_hat && y < r.q_tilde) CHECK(r.declared.right_derivative(y) == doctest::Approx(cap));
        }
      }
  CHECK_THROWS_AS(cap_regions(s, olig, 0, 0, 0.0), DomainError);
}

TEST_CASE("cap argument checks") {
  const auto s = fixture::example_scenario();
  CHECK_THROWS_AS(solve_capped(s, std::vector<double>{1.0}), DomainError);
  CHECK_THROWS_AS(solve_capped(s, std::vector<double>{-1.0, 1.0}), DomainError);
}
