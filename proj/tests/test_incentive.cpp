#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/incentive.hpp"

using namespace spotmarket;

namespace {

const GenerationProfile& optimal_profile() {
  static const auto s = fixture::example_scenario();
  static const GenerationProfile p(s, {5, 5, 10, 5, 5, 0, 10, 0});
  return p;
}

}  // namespace

TEST_CASE("golden: payments at the optimum") {
  const auto s = fixture::example_scenario();
  const auto& p = optimal_profile();
  CHECK(incentive_payment(s, p, 0) == doctest::Approx(-11.0).epsilon(1e-9));
  CHECK(std::abs(incentive_payment(s, p, 1)) <= 1e-9);

  const auto opt = solve(EquilibriumKind::Optimal, s);
  const auto sched = incentive_schedule(s, opt);
  CHECK(sched.budget == doctest::Approx(-11.0).epsilon(1e-6));
  CHECK(iso_budget(sched) == doctest::Approx(sched.budget));
  CHECK_FALSE(sched.net_subsidy);
  CHECK(sched.producers[0].tax >= 0.0);
}

TEST_CASE("payment terms against a hand computation") {
  // phi^i = [U(q) - U(q - q^i)] - sum P q^i - [E(x) - E(x - x^i)]
  const auto s = fixture::example_scenario();
  const auto& p = optimal_profile();
  const std::vector<double> prices{4.0, 6.0};
  // producer 1: 10 at node 1, 5 at node 2; pollution 20 at node 1, 5 at node 2
  const double gain1 = oracle::example_utility(25, 15) - oracle::example_utility(15, 10);
  const double phi1 = gain1 - (4 * 10 + 6 * 5) - (1.0 * 20 + 2.0 * 5);
  const double gain2 = oracle::example_utility(25, 15) - oracle::example_utility(10, 5);
  const double phi2 = gain2 - (4 * 15 + 6 * 10) - (1.0 * 25 + 2.0 * 10);
  CHECK(incentive_payment(s, p, 0) == doctest::Approx(phi1).epsilon(1e-12));
  CHECK(incentive_payment(s, p, 1) == doctest::Approx(phi2).epsilon(1e-12));
  const auto b = payment_breakdown(s, s.demand_model(), p.totals(), 0, prices);
  CHECK(b.utility_gain == doctest::Approx(gain1));
  CHECK(b.total() == doctest::Approx(phi1));
  CHECK(incentive_payment(s, p, 0, 2.5) == doctest::Approx(phi1 + 2.5));
}

TEST_CASE("individual rationality bounds") {
  const auto s = fixture::example_scenario();
  const auto opt = solve(EquilibriumKind::Optimal, s);
  // -[U(q) - U(q - q^i)] + C^i + [E(x) - E(x - x^i)]
  const double b1 = -(oracle::example_utility(25, 15) - oracle::example_utility(15, 10)) + 35 + 30;
  const double b2 = -(oracle::example_utility(25, 15) - oracle::example_utility(10, 5)) + 65 + 45;
  CHECK(ir_offset_bound(s, opt, 0) == doctest::Approx(b1).epsilon(1e-9));
  CHECK(ir_offset_bound(s, opt, 1) == doctest::Approx(b2).epsilon(1e-9));
  CHECK(ir_offset_bound(s, opt, 0) <= 0.0);
  CHECK(ir_offset_bound(s, opt, 1) <= 0.0);
}

TEST_CASE("payments ignore how a rival splits output across its units") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const auto inst = fixture::random_single_node(rng);
    const auto& s = inst.scenario;
    std::uniform_real_distribution<double> frac(0.0, 1.0);
    std::vector<double> q;
    for (const auto& u : s.units) q.push_back(u.capacity * frac(rng));
    const GenerationProfile base(s, q);
    // move output between producer 2's units, keeping its total
    const auto ids = s.units_of(0, 1);
    const double total = q[ids[0]] + q[ids[1]];
    const double a = std::min(total, s.units[ids[0]].capacity) * frac(rng);
    std::vector<double> r = q;
    r[ids[0]] = a;
    r[ids[1]] = total - a;
    if (r[ids[1]] > s.units[ids[1]].capacity) continue;
    const GenerationProfile moved(s, r);
    CHECK(incentive_payment(s, moved, 0) == doctest::Approx(incentive_payment(s, base, 0)).epsilon(1e-9));
  }
}

TEST_CASE("declared marginal under the mechanism is at least the true marginal") {
  std::mt19937_64 rng(22);
  for (int t = 0; t < 20; ++t) {
    const auto inst = fixture::random_single_node(rng);
    const auto& s = inst.scenario;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto mech = declared_cost_under_mechanism(s, i, 0);
      std::vector<MeritComponent> comps;
      for (std::size_t k : s.units_of(0, i)) comps.push_back({s.units[k].cost, s.units[k].capacity});
      const auto truth = merit_merge(comps).aggregate();
      for (int g = 0; g < 100; ++g) {
        const double y = truth.domain_end() * g / 100.0;
        CHECK(mech.right_derivative(y) >= truth.right_derivative(y) - 1e-12);
      }
    }
  }
}

TEST_CASE("mechanism reproduces the optimum") {
  const auto s = fixture::example_scenario();
  const auto check = verify_incentive_compatibility(s);
  CHECK(check.compatible);
  for (double d : check.unit_deviation) CHECK(d <= 1e-5);
  for (double d : check.dispatch_deviation) CHECK(d <= 1e-5);

  std::mt19937_64 rng(23);
  for (int t = 0; t < 10; ++t) {
    const auto inst = fixture::random_single_node(rng);
    const auto c = verify_incentive_compatibility(inst.scenario);
    INFO("instance " << t);
    CHECK(c.compatible);
  }
}

TEST_CASE("payment argument checks") {
  auto s = fixture::example_scenario();
  const auto& p = optimal_profile();
  CHECK_THROWS_AS(incentive_payment(s, p, 0, -1.0), DomainError);
  CHECK_THROWS_AS(incentive_payment(s, p, 5), DomainError);
  s.channel_count = 2;
  CHECK_THROWS_AS(incentive_payment(s, p, 0), DomainError);
  const auto fresh = fixture::example_scenario();
  const auto opt = solve(EquilibriumKind::Optimal, fresh);
  CHECK_THROWS_AS(incentive_schedule(fresh, opt, {0.0}), DomainError);
  CHECK_THROWS_AS(incentive_schedule(fresh, opt, {0.0, -1.0}), DomainError);
}
