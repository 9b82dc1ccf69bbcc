#pragma once

#include <span>
#include <vector>

#include "spotmarket/equilibrium.hpp"
#include "spotmarket/market.hpp"

namespace spotmarket {

// phi^i = [U(q) - U(q - q^i) - sum_n P_n q_n^i] - [E(x) - E(x - x^i)] + offset
struct PaymentBreakdown {
  double utility_gain = 0.0;  // U(q) - U(q - q^i)
  double revenue = 0.0;       // sum_n P_n q_n^i
  double damage = 0.0;        // E(x) - E(x - x^i), all channels
  double offset = 0.0;

  double subsidy() const { return utility_gain - revenue; }
  double tax() const { return damage; }
  double total() const { return subsidy() - tax() + offset; }
};

// Works from totals only; rivals enter through q_n^i' and x_n^i'.
PaymentBreakdown payment_breakdown(const MarketScenario& scenario, const DemandModel& model,
                                   const TotalsView& totals, std::size_t producer,
                                   std::span<const double> prices, double offset = 0.0);

// Single pollutant channel.
double incentive_payment(const MarketScenario& scenario, const GenerationProfile& profile,
                         std::size_t producer, double offset = 0.0);
// Any number of channels; damage differences are taken jointly over them.
double incentive_payment_multi(const MarketScenario& scenario, const GenerationProfile& profile,
                               std::size_t producer, double offset = 0.0);

// Merit-merged true cost plus incremental damage.  Non-affine damage is
// linearized at the node's pollution in `at`.
PiecewiseCurve declared_cost_under_mechanism(const MarketScenario& scenario, std::size_t producer,
                                             std::size_t node, const TotalsView& at);
PiecewiseCurve declared_cost_under_mechanism(const MarketScenario& scenario, std::size_t producer,
                                             std::size_t node);

// Right-hand side of the participation condition at the given (optimal) report.
double ir_offset_bound(const MarketScenario& scenario, const EquilibriumReport& optimal,
                       std::size_t producer);

struct IncentiveSchedule {
  struct Entry {
    double payment = 0.0;
    double offset = 0.0;
    double ir_bound = 0.0;
    double subsidy = 0.0;
    double tax = 0.0;
    double profit = 0.0;  // market profit, excluding the payment
  };
  std::vector<Entry> producers;
  double budget = 0.0;
  bool net_subsidy = false;  // the ISO pays out in total
};

// offsets empty: the scenario's offsets, or zero
IncentiveSchedule incentive_schedule(const MarketScenario& scenario, const EquilibriumReport& at,
                                     std::vector<double> offsets = {});
double iso_budget(const IncentiveSchedule& schedule);

// sum_n P_n (d_n - q_n); reported separately, never assigned to producers
double congestion_rent(const MarketScenario& scenario, const EquilibriumReport& report);

// Best-response fixed point when every producer maximizes profit + phi^i.
EquilibriumReport solve_mechanism(const MarketScenario& scenario, const SolverConfig& config = {});

struct IncentiveCheck {
  bool compatible = false;
  EquilibriumReport mechanism;
  EquilibriumReport optimal;
  std::vector<double> unit_deviation;  // |mechanism - optimal| per unit
  std::vector<double> dispatch;        // ISO clearing against mechanism-declared costs
  std::vector<double> dispatch_deviation;
  // largest gain any block could get from a unilateral deviation (grid probe)
  double best_response_gain = 0.0;
};

IncentiveCheck verify_incentive_compatibility(const MarketScenario& scenario,
                                              const SolverConfig& config = {},
                                              double tolerance = 1e-6);

}  // namespace spotmarket
