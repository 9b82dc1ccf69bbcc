#pragma once

// Block Gauss-Seidel over (node, producer) pairs shared by every equilibrium
// flavour.  Each block step maximizes the producer's objective in its total
// output at one node with everything else frozen, then splits the total over
// units by merit order.

#include <Eigen/Dense>
#include <deque>
#include <span>
#include <vector>

#include "spotmarket/equilibrium.hpp"
#include "spotmarket/market.hpp"
#include "spotmarket/network.hpp"

namespace spotmarket::detail {

// Nodal prices as seen by producers, with optional per-node caps.
class PriceOracle {
 public:
  PriceOracle(DemandModel model, std::vector<double> caps = {});

  const DemandModel& model() const { return model_; }
  bool capped() const { return !caps_.empty(); }
  std::span<const double> caps() const { return caps_; }

  std::vector<double> prices(std::span<const double> q, Side side = Side::Right) const;
  std::vector<double> uncapped(std::span<const double> q, Side side = Side::Right) const;
  Eigen::MatrixXd jacobian(std::span<const double> q, Side side = Side::Right) const;

 private:
  struct Entry {
    std::vector<double> q;
    Side side;
    std::vector<double> p;
    Eigen::MatrixXd j;  // empty until asked for
  };
  Entry& lookup(std::span<const double> q, Side side) const;

  DemandModel model_;
  std::vector<double> caps_;
  mutable std::deque<Entry> cache_;
};

enum class BlockObjective {
  Welfare,  // U - cost [- damage]; concave, slope only
  Profit,   // sum_n' P_n' q_n'^i - cost [- damage]; market power
  Payment,  // literal profit + incentive payment
};

struct GameRule {
  BlockObjective objective = BlockObjective::Welfare;
  bool externality = false;  // costs carry marginal damage
  std::vector<double> offsets;  // Payment only
};

GameRule rule_for(const ConditionTerms& terms);

struct EngineResult {
  std::vector<double> units;
  bool converged = false;
  int sweeps = 0;
  double residual = 0.0;
  std::vector<double> trace;  // max unit change per sweep
};

// Marginal damage per channel at node n for the given profile.
std::vector<double> marginal_damage(const MarketScenario& s, const TotalsView& t, std::size_t node);

// Unit cost plus linearized damage e . x(q), restricted to the capacity.
PiecewiseCurve adjusted_cost(const Unit& u, std::span<const double> damage);

// Merit split of the (node, producer) block under the rule's costs.
MeritSplit block_merit(const MarketScenario& s, const GameRule& rule,
                       const GenerationProfile& p, std::size_t node, std::size_t producer);

// Unit-level stationarity f at the profile, one-sided in the direction given.
double unit_condition(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                      const GenerationProfile& p, std::size_t unit, Side side);

// max over units of the three-case violation using both one-sided conditions
double max_violation(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                     const GenerationProfile& p);

// Best response of one block given the rest of the profile.
double block_best_response(const MarketScenario& s, const PriceOracle& oracle,
                           const GameRule& rule, const GenerationProfile& p, std::size_t node,
                           std::size_t producer);

// Literal profit + incentive payment of `producer` when its total at `node`
// is y, split over units by `merit`.
double payment_value(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                     const GenerationProfile& p, std::size_t node, std::size_t producer,
                     const MeritSplit& merit, double y);

// Throws NonConvergenceError unless the run converged.
EquilibriumReport build_report(EquilibriumKind kind, const MarketScenario& s,
                               const PriceOracle& oracle, EngineResult run);

// solve() without scenario validation, for internally adjusted scenarios
EquilibriumReport solve_unchecked(EquilibriumKind kind, const MarketScenario& s,
                                  const SolverConfig& config);

std::vector<double> start_profile(const MarketScenario& s, const SolverConfig& config);

EngineResult gauss_seidel(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                          const SolverConfig& config, std::vector<double> start);

}  // namespace spotmarket::detail
