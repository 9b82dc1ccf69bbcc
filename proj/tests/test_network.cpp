#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/network.hpp"

using namespace spotmarket;

TEST_CASE("allocation on the two-node example") {
  const auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();

  auto a = allocate_demand(grid, u, std::vector<double>{10.0, 4.0});
  CHECK(a.demand[0] == doctest::Approx(14.0).epsilon(1e-12));
  CHECK(a.demand[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.flows[0] == doctest::Approx(-4.0).epsilon(1e-12));

  a = allocate_demand(grid, u, std::vector<double>{0.0, 0.0});
  CHECK(a.demand[0] == 0.0);
  CHECK(a.demand[1] == 0.0);
  CHECK(a.utility_value == 0.0);

  // the grid oracle pins d1 at the line limit, 20
  a = allocate_demand(grid, u, std::vector<double>{25.0, 15.0});
  double best_d1 = 0.0, best = -1e300;
  for (int k = 0; k <= 30000; ++k) {
    const double d1 = k * 1e-3;
    if (std::abs(25.0 - d1) > 5.0) continue;
    const double v = oracle::u1(d1) + oracle::u2(40.0 - d1);
    if (v > best) { best = v; best_d1 = d1; }
  }
  CHECK(a.demand[0] == doctest::Approx(best_d1).epsilon(1e-9));
  CHECK(a.demand[1] == doctest::Approx(40.0 - best_d1).epsilon(1e-9));
  CHECK(a.demand[0] + a.demand[1] == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("utility value on the two-node example") {
  const auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();
  CHECK(utility_value(grid, u, std::vector<double>{19.0, 5.0}) == doctest::Approx(505.0).epsilon(1e-12));
  CHECK(utility_value(grid, u, std::vector<double>{0.0, 0.0}) == 0.0);
  CHECK(utility_value(grid, u, std::vector<double>{26.0, 30.0}) == doctest::Approx(693.0).epsilon(1e-12));
}

TEST_CASE("nodal prices on the two-node example") {
  const auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();
  auto p = nodal_price(grid, u, std::vector<double>{10.0, 4.0});
  CHECK(p[0] == doctest::Approx(16.0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(16.0).epsilon(1e-9));
  p = nodal_price(grid, u, std::vector<double>{25.0, 15.0});
  CHECK(p[0] == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(6.0).epsilon(1e-9));
  p = nodal_price(grid, u, std::vector<double>{0.0, 0.0});
  CHECK(p[0] == doctest::Approx(44.0).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(44.0).epsilon(1e-9));
}

TEST_CASE("price jacobian on the two-node example") {
  const auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();
  auto j = price_jacobian(grid, u, std::vector<double>{10.0, 4.0});
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) CHECK(j(a, b) == doctest::Approx(-2.0).epsilon(1e-9));
  j = price_jacobian(grid, u, std::vector<double>{20.0, 10.0});
  CHECK(std::abs(j(1, 1)) <= 1e-9);

  Grid single;
  const std::vector<PiecewiseCurve> lin{PiecewiseCurve::linear(5.0, kInfinity, Curvature::Concave)};
  j = price_jacobian(single, lin, std::vector<double>{3.0});
  CHECK(std::abs(j(0, 0)) <= 1e-12);
}

TEST_CASE("flat utilities give the lexicographically smallest demand") {
  Grid g;
  g.node_count = 2;
  const std::vector<PiecewiseCurve> lin{PiecewiseCurve::linear(3.0, kInfinity, Curvature::Concave),
                                        PiecewiseCurve::linear(3.0, kInfinity, Curvature::Concave)};
  const auto a = allocate_demand(g, lin, std::vector<double>{4.0, 2.0});
  CHECK(a.demand[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(a.demand[1] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(a.utility_value == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("extra ISO constraints and infeasibility") {
  auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();
  // d1 >= 21, i.e. -d1 <= -21
  grid.extra_constraints.push_back({{0.0, 0.0}, {-1.0, 0.0}, -21.0});
  auto a = allocate_demand(grid, u, std::vector<double>{20.0, 10.0});
  CHECK(a.demand[0] == doctest::Approx(21.0).epsilon(1e-12));

  // utilities that cannot absorb the generation
  Grid single;
  const std::vector<PiecewiseCurve> bounded{PiecewiseCurve::linear(2.0, 10.0, Curvature::Concave)};
  try {
    allocate_demand(single, bounded, std::vector<double>{12.0});
    FAIL("expected infeasibility");
  } catch (const InfeasibleError& e) {
    CHECK(!e.violated().empty());
  }
  // generation stranded behind a line
  Grid two;
  two.node_count = 2;
  two.lines.push_back({{1.0, 0.0}, 1.0});
  const std::vector<PiecewiseCurve> caps{PiecewiseCurve::linear(2.0, 2.0, Curvature::Concave),
                                         PiecewiseCurve::linear(2.0, 100.0, Curvature::Concave)};
  CHECK_THROWS_AS(allocate_demand(two, caps, std::vector<double>{5.0, 0.0}), InfeasibleError);
}

TEST_CASE("allocation properties on random points") {
  const auto grid = fixture::example_grid();
  const auto u = fixture::example_utilities();
  DemandModel model(grid, u);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(0.0, 35.0), step(0.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    const std::vector<double> q{dist(rng), dist(rng)};
    const auto a = model.allocate(q);
    CHECK(std::abs(a.demand[0] + a.demand[1] - q[0] - q[1]) <= 1e-9);
    CHECK(std::abs(a.flows[0]) <= 5.0 + 1e-9);
    CHECK(a.demand[0] >= 0.0);
    CHECK(a.demand[1] >= 0.0);
    CHECK(a.utility_value == doctest::Approx(oracle::example_utility(q[0], q[1])).epsilon(1e-12));
    const auto p = model.prices(q);
    CHECK(p[0] >= 0.0);
    CHECK(p[1] >= 0.0);
    const std::vector<double> dlt{step(rng), step(rng)};
    const std::vector<double> q1{q[0] + dlt[0], q[1] + dlt[1]};
    const std::vector<double> q2{q[0] + 2 * dlt[0], q[1] + 2 * dlt[1]};
    CHECK(model.value(q) + model.value(q2) <= 2.0 * model.value(q1) + 1e-9);
  }
}

TEST_CASE("utility value matches a demand grid on a three-node ring") {
  Grid g;
  g.node_count = 3;
  g.lines.push_back({{0.0, 2.0 / 3.0, 1.0 / 3.0}, 2.0});
  g.lines.push_back({{0.0, 1.0 / 3.0, 2.0 / 3.0}, 3.0});
  const std::vector<PiecewiseCurve> u{PiecewiseCurve::capped_quadratic_utility(0.5, 10.0),
                                      PiecewiseCurve::capped_quadratic_utility(1.0, 12.0),
                                      PiecewiseCurve::capped_quadratic_utility(0.25, 6.0)};
  DemandModel model(g, u);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> dist(0.0, 6.0);
  for (int k = 0; k < 4; ++k) {
    const std::vector<double> q{dist(rng), dist(rng), dist(rng)};
    const double total = q[0] + q[1] + q[2];
    double best = -1e300;
    // d1 on a 1e-3 grid; for each, the remaining split is a concave 1-D problem
    for (double d1 = 0.0; d1 <= total + 1e-12; d1 += 1e-3) {
      auto f = [&](double d2) {
        const double d3 = total - d1 - d2;
        const double inj[3] = {q[0] - d1, q[1] - d2, q[2] - d3};
        for (const auto& line : g.lines) {
          double flow = 0.0;
          for (int n = 0; n < 3; ++n) flow += line.ptdf[n] * inj[n];
          if (std::abs(flow) > line.capacity + 1e-12) return -1e300;
        }
        return u[0].eval(d1) + u[1].eval(d2) + u[2].eval(d3);
      };
      // feasible d2 interval from the two line limits
      double lo = 0.0, hi = total - d1;
      for (const auto& line : g.lines) {
        // flow = c + (h3 - h2) d2 with d3 = total - d1 - d2
        const double c = line.ptdf[0] * (q[0] - d1) + line.ptdf[1] * q[1] +
                         line.ptdf[2] * (q[2] - (total - d1));
        const double s = line.ptdf[2] - line.ptdf[1];
        if (std::abs(s) < 1e-15) {
          if (std::abs(c) > line.capacity) { lo = 1; hi = 0; }
          continue;
        }
        double a = (-line.capacity - c) / s, b = (line.capacity - c) / s;
        if (a > b) std::swap(a, b);
        lo = std::max(lo, a);
        hi = std::min(hi, b);
      }
      if (lo > hi) continue;
      best = std::max(best, oracle::concave_max(f, lo, hi));
    }
    CHECK(model.value(q) >= best - 1e-9);
    CHECK(model.value(q) <= best + 1e-6);
  }
}
