#pragma once

#include <random>
#include <vector>

#include "spotmarket/market.hpp"
#include "spotmarket/multiperiod.hpp"
#include "spotmarket/network.hpp"
#include "spotmarket/piecewise.hpp"

namespace fixture {

inline spotmarket::Grid example_grid() {
  spotmarket::Grid g;
  g.node_count = 2;
  g.lines.push_back({{1.0, 0.0}, 5.0});
  return g;
}

inline std::vector<spotmarket::PiecewiseCurve> example_utilities() {
  using spotmarket::PiecewiseCurve;
  return {PiecewiseCurve::capped_quadratic_utility(1.0, 44.0, 22.0),
          PiecewiseCurve::linear(6.0, spotmarket::kInfinity, spotmarket::Curvature::Concave)};
}

// Two nodes, two producers, two units each.  Costs and pollution are linear.
inline spotmarket::MarketScenario example_scenario() {
  using spotmarket::PiecewiseCurve;
  spotmarket::MarketScenario s;
  s.name = "two-node example";
  s.grid = example_grid();
  s.utilities = example_utilities();
  s.producer_count = 2;
  s.channel_count = 1;
  struct Row { std::size_t n, i, j; double cap, cost, poll; };
  const Row rows[] = {{0, 0, 0, 5, 2, 1},  {0, 0, 1, 5, 1, 3},  {0, 1, 0, 10, 2, 1},
                      {0, 1, 1, 10, 1, 3}, {1, 0, 0, 5, 4, 1},  {1, 0, 1, 5, 2, 3},
                      {1, 1, 0, 10, 4, 1}, {1, 1, 1, 10, 2, 3}};
  for (const auto& r : rows)
    s.units.push_back({r.n, r.i, r.j, r.cap, PiecewiseCurve::linear(r.cost, r.cap),
                       {PiecewiseCurve::linear(r.poll, r.cap)}});
  s.externality.damage = {{PiecewiseCurve::linear(1.0, spotmarket::kInfinity)},
                          {PiecewiseCurve::linear(2.0, spotmarket::kInfinity)}};
  return s;
}

// One node, two intervals.  Unit A (producer 1) is cheap and energy limited,
// unit B (producer 2) has a rising marginal.  No pollution.
inline spotmarket::MarketScenario toy_interval(double a, double b) {
  using spotmarket::PiecewiseCurve;
  spotmarket::MarketScenario s;
  s.grid = spotmarket::Grid::single_node();
  s.utilities = {PiecewiseCurve::capped_quadratic_utility(a, b)};
  s.producer_count = 2;
  s.units.push_back({0, 0, 0, 10.0, PiecewiseCurve::linear(1.0, 10.0),
                     {PiecewiseCurve::zero(10.0)}});
  s.units.push_back({0, 1, 0, 10.0,
                     PiecewiseCurve({{0.0, 0.25, 2.0, 0.0}}, 10.0, spotmarket::Curvature::Convex),
                     {PiecewiseCurve::zero(10.0)}});
  return s;
}

inline spotmarket::MultiIntervalScenario toy_multi(double budget) {
  spotmarket::MultiIntervalScenario m;
  m.intervals = {toy_interval(1.0, 40.0), toy_interval(1.0, 30.0)};
  m.energy_limits.push_back({{0, 0, 0}, budget});
  return m;
}

// Unit with marginal cost c + s q and linear pollution e q.
struct AffineUnit {
  std::size_t node = 0, producer = 0, index = 0;
  double cap = 0.0, c = 0.0, s = 0.0, e = 0.0;
};

inline spotmarket::PiecewiseCurve affine_cost(double c, double s, double cap) {
  return spotmarket::PiecewiseCurve({{0.0, 0.5 * s, c, 0.0}}, cap, spotmarket::Curvature::Convex);
}

// Quadratic utilities -a d^2 + b d (flat past b/2a) and linear damage per node.
inline spotmarket::MarketScenario affine_market(spotmarket::Grid grid,
                                                const std::vector<std::pair<double, double>>& ab,
                                                const std::vector<AffineUnit>& units,
                                                const std::vector<double>& damage,
                                                std::size_t producers) {
  using spotmarket::PiecewiseCurve;
  spotmarket::MarketScenario s;
  s.grid = std::move(grid);
  for (auto [a, b] : ab) s.utilities.push_back(PiecewiseCurve::capped_quadratic_utility(a, b));
  s.producer_count = producers;
  for (const auto& u : units)
    s.units.push_back({u.node, u.producer, u.index, u.cap, affine_cost(u.c, u.s, u.cap),
                       {PiecewiseCurve::linear(u.e, u.cap)}});
  for (double d : damage) s.externality.damage.push_back({PiecewiseCurve::linear(d, spotmarket::kInfinity)});
  s.canonicalize();
  return s;
}

struct RandomSingleNode {
  double a = 1.0, b = 40.0, damage = 1.0;
  std::vector<AffineUnit> units;
  spotmarket::MarketScenario scenario;
};

// 2 producers x 2 units, affine marginals in [0.5, 5], pollution slopes in
// [0.5, 4], quadratic utility.
inline RandomSingleNode random_single_node(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coef(0.5, 5.0), poll(0.5, 4.0), cap(2.0, 8.0),
      a(0.5, 2.0), b(20.0, 60.0), dmg(0.2, 2.0);
  RandomSingleNode r;
  r.a = a(rng);
  r.b = b(rng);
  r.damage = dmg(rng);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      r.units.push_back({0, i, j, cap(rng), coef(rng), coef(rng), poll(rng)});
  r.scenario = affine_market(spotmarket::Grid::single_node(), {{r.a, r.b}}, r.units, {r.damage}, 2);
  return r;
}

}  // namespace fixture
