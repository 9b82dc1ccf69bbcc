#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "spotmarket/market.hpp"
#include "spotmarket/network.hpp"

namespace spotmarket {

enum class EquilibriumKind { Optimal, Competitive, Oligopolistic };

std::string to_string(EquilibriumKind kind);

// Which terms enter the stationarity condition.  Price and marginal cost are
// always present.
struct ConditionTerms {
  bool marginal_externality = false;
  bool market_power = false;
  bool operator==(const ConditionTerms&) const = default;
};

ConditionTerms condition_terms(EquilibriumKind kind);

enum class InitialProfile { Zero, Competitive, Explicit };

struct SolverConfig {
  double tolerance = 1e-8;
  int max_sweeps = 10000;
  double damping = 1.0;
  InitialProfile initial = InitialProfile::Zero;
  std::vector<double> explicit_profile;  // per unit, when initial == Explicit
  std::optional<ConditionTerms> terms_override;
  // also solve from the other start and flag disagreement (oligopoly only)
  bool check_sensitivity = false;

  void check() const;
};

struct EquilibriumReport {
  EquilibriumKind kind = EquilibriumKind::Optimal;
  GenerationProfile profile;
  DemandAllocation demand;
  std::vector<double> prices;
  double social_welfare = 0.0;
  std::vector<double> profit;
  double residual = 0.0;
  bool converged = false;
  int sweeps_used = 0;
  bool sensitivity_flag = false;
  std::vector<double> residual_trace;
};

// f for unit k (canonical unit position); right-derivatives throughout.
double stationarity(EquilibriumKind kind, const MarketScenario& scenario,
                    const GenerationProfile& profile, std::size_t unit);
double stationarity(EquilibriumKind kind, const MarketScenario& scenario,
                    const GenerationProfile& profile, std::size_t node, std::size_t producer,
                    std::size_t unit_id);
// Violation of the three-case condition: interior |f|, at zero max(0, f),
// at capacity max(0, -f).
double stationarity_violation(double f, double q, double capacity, double tol = 1e-9);

EquilibriumReport solve(EquilibriumKind kind, const MarketScenario& scenario,
                        const SolverConfig& config = {});

// Declared cost under market power: true merged cost plus the markup
// -sum_n' dP_n'/dq_n q_n'^i along the producer's own quantity at `node`,
// rivals and the producer's other nodes frozen at the equilibrium.
PiecewiseCurve declared_cost_market_power(const MarketScenario& scenario,
                                          const EquilibriumReport& oligopolistic,
                                          std::size_t producer, std::size_t node);

double market_power_index(const MarketScenario& scenario, const GenerationProfile& profile,
                          std::size_t producer, std::size_t node);

}  // namespace spotmarket
