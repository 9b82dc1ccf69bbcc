#include "spotmarket/incentive.hpp"

#include <algorithm>
#include <cmath>

#include "engine.hpp"
#include "spotmarket/errors.hpp"

namespace spotmarket {

PaymentBreakdown payment_breakdown(const MarketScenario& s, const DemandModel& model,
                                   const TotalsView& t, std::size_t producer,
                                   std::span<const double> prices, double offset) {
  if (producer >= t.producer_count()) throw DomainError("no such producer");
  const std::size_t nodes = t.node_count();
  std::vector<double> q(t.node_totals().begin(), t.node_totals().end());
  std::vector<double> without(nodes);
  for (std::size_t n = 0; n < nodes; ++n)
    without[n] = std::max(0.0, q[n] - t.node_producer(n, producer));

  PaymentBreakdown b;
  b.offset = offset;
  b.utility_gain = model.value(q) - model.value(without);
  for (std::size_t n = 0; n < nodes; ++n) b.revenue += prices[n] * t.node_producer(n, producer);
  for (std::size_t n = 0; n < s.externality.damage.size(); ++n)
    for (std::size_t m = 0; m < s.externality.damage[n].size(); ++m) {
      const double x = t.node_pollution(n, m);
      const double rest = std::max(0.0, x - t.pollution(n, producer, m));
      b.damage += s.externality.value(n, m, x) - s.externality.value(n, m, rest);
    }
  return b;
}

double incentive_payment_multi(const MarketScenario& s, const GenerationProfile& p,
                               std::size_t producer, double offset) {
  if (offset < 0.0) throw DomainError("offset must be nonnegative");
  const DemandModel model = s.demand_model();
  const auto prices = model.prices(p.node_totals());
  return payment_breakdown(s, model, p.totals(), producer, prices, offset).total();
}

double incentive_payment(const MarketScenario& s, const GenerationProfile& p, std::size_t producer,
                         double offset) {
  if (s.channel_count != 1)
    throw DomainError("single-channel payment asked for a multi-channel scenario");
  return incentive_payment_multi(s, p, producer, offset);
}

PiecewiseCurve declared_cost_under_mechanism(const MarketScenario& s, std::size_t producer,
                                             std::size_t node, const TotalsView& at) {
  if (producer >= s.producer_count || node >= s.node_count())
    throw DomainError("no such producer or node");
  const auto e = detail::marginal_damage(s, at, node);
  std::vector<MeritComponent> comps;
  for (std::size_t k : s.units_of(node, producer))
    comps.push_back({detail::adjusted_cost(s.units[k], e), s.units[k].capacity});
  if (comps.empty()) return PiecewiseCurve::zero(0.0);
  return merit_merge(comps).aggregate();
}

PiecewiseCurve declared_cost_under_mechanism(const MarketScenario& s, std::size_t producer,
                                             std::size_t node) {
  return declared_cost_under_mechanism(s, producer, node, GenerationProfile::zero(s).totals());
}

double ir_offset_bound(const MarketScenario& s, const EquilibriumReport& optimal,
                       std::size_t producer) {
  const DemandModel model = s.demand_model();
  const auto b = payment_breakdown(s, model, optimal.profile.totals(), producer, optimal.prices);
  return -b.utility_gain + producer_cost(s, optimal.profile, producer) + b.damage;
}

IncentiveSchedule incentive_schedule(const MarketScenario& s, const EquilibriumReport& at,
                                     std::vector<double> offsets) {
  if (offsets.empty()) offsets = s.incentive_offsets;
  if (offsets.empty()) offsets.assign(s.producer_count, 0.0);
  if (offsets.size() != s.producer_count) throw DomainError("one offset per producer required");
  const DemandModel model = s.demand_model();
  IncentiveSchedule out;
  for (std::size_t i = 0; i < s.producer_count; ++i) {
    if (offsets[i] < 0.0) throw DomainError("offsets must be nonnegative");
    const auto b = payment_breakdown(s, model, at.profile.totals(), i, at.prices, offsets[i]);
    IncentiveSchedule::Entry e;
    e.payment = b.total();
    e.offset = offsets[i];
    e.subsidy = b.subsidy();
    e.tax = b.tax();
    e.ir_bound = -b.utility_gain + producer_cost(s, at.profile, i) + b.damage;
    e.profit = producer_profit(s, at.profile, i, at.prices);
    out.producers.push_back(e);
    out.budget += e.payment;
  }
  out.net_subsidy = out.budget > 0.0;
  return out;
}

double iso_budget(const IncentiveSchedule& schedule) {
  double b = 0.0;
  for (const auto& e : schedule.producers) b += e.payment;
  return b;
}

double congestion_rent(const MarketScenario& s, const EquilibriumReport& r) {
  double rent = 0.0;
  for (std::size_t n = 0; n < s.node_count(); ++n)
    rent += r.prices[n] * (r.demand.demand[n] - r.profile.node(n));
  return rent;
}

namespace {

detail::GameRule mechanism_rule(const MarketScenario& s) {
  detail::GameRule rule;
  rule.objective = detail::BlockObjective::Payment;
  rule.offsets = s.incentive_offsets;
  return rule;
}

}  // namespace

EquilibriumReport solve_mechanism(const MarketScenario& s, const SolverConfig& config) {
  config.check();
  require_valid(s);
  const detail::PriceOracle oracle(s.demand_model(), s.price_caps.value_or(std::vector<double>{}));
  auto run = detail::gauss_seidel(s, oracle, mechanism_rule(s), config,
                                  detail::start_profile(s, config));
  return detail::build_report(EquilibriumKind::Optimal, s, oracle, std::move(run));
}

IncentiveCheck verify_incentive_compatibility(const MarketScenario& s, const SolverConfig& config,
                                              double tolerance) {
  IncentiveCheck out;
  out.mechanism = solve_mechanism(s, config);
  out.optimal = solve(EquilibriumKind::Optimal, s, config);
  double worst = 0.0;
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    out.unit_deviation.push_back(std::abs(out.mechanism.profile.unit(k) - out.optimal.profile.unit(k)));
    worst = std::max(worst, out.unit_deviation.back());
  }

  // ISO clearing against the declared curves: truthful dispatch of costs that
  // already carry the incremental damage, with no damage left to count
  MarketScenario declared = s;
  declared.externality.damage.clear();
  declared.price_caps.reset();
  const auto& totals = out.optimal.profile.totals();
  for (auto& u : declared.units)
    u.cost = detail::adjusted_cost(u, detail::marginal_damage(s, totals, u.node));
  const auto cleared = solve(EquilibriumKind::Competitive, declared, config);
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    out.dispatch.push_back(cleared.profile.unit(k));
    out.dispatch_deviation.push_back(std::abs(cleared.profile.unit(k) - out.optimal.profile.unit(k)));
    worst = std::max(worst, out.dispatch_deviation.back());
  }

  // unilateral deviations on a grid, scored with the literal payoff
  const detail::PriceOracle oracle(s.demand_model(), s.price_caps.value_or(std::vector<double>{}));
  const auto rule = mechanism_rule(s);
  const auto& p = out.mechanism.profile;
  for (std::size_t n = 0; n < s.node_count(); ++n)
    for (std::size_t i = 0; i < s.producer_count; ++i) {
      if (s.units_of(n, i).empty()) continue;
      const MeritSplit merit = detail::block_merit(s, rule, p, n, i);
      const double here = detail::payment_value(s, oracle, rule, p, n, i, merit, p.node_producer(n, i));
      constexpr int kProbe = 64;
      for (int g = 0; g <= kProbe; ++g) {
        const double y = merit.capacity() * g / kProbe;
        out.best_response_gain = std::max(
            out.best_response_gain, detail::payment_value(s, oracle, rule, p, n, i, merit, y) - here);
      }
    }
  out.compatible = worst <= tolerance && out.best_response_gain <= tolerance;
  return out;
}

}  // namespace spotmarket
