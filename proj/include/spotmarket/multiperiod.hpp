#pragma once

#include <vector>

#include "spotmarket/equilibrium.hpp"
#include "spotmarket/market.hpp"

namespace spotmarket {

// Identifies a unit by (node, producer, unit id), zero-based.
struct UnitRef {
  std::size_t node = 0;
  std::size_t producer = 0;
  std::size_t index = 0;
  bool operator==(const UnitRef&) const = default;
};

// sum_t q_unit^t <= budget
struct EnergyLimit {
  UnitRef unit;
  double budget = 0.0;
  bool operator==(const EnergyLimit&) const = default;
};

// sum over terms of coefficient * q_unit^interval <= rhs
struct LinearConstraint {
  struct Term {
    std::size_t interval = 0;
    UnitRef unit;
    double coefficient = 0.0;
    bool operator==(const Term&) const = default;
  };
  std::vector<Term> terms;
  double rhs = 0.0;
  bool operator==(const LinearConstraint&) const = default;
};

struct MultiIntervalScenario {
  std::vector<MarketScenario> intervals;  // same units in every interval
  std::vector<EnergyLimit> energy_limits;
  std::vector<LinearConstraint> constraints;
  bool operator==(const MultiIntervalScenario&) const = default;
};

ValidationReport validate(const MultiIntervalScenario& scenario);

struct MultiConfig {
  SolverConfig solver;
  double budget_tolerance = 1e-6;
  double lambda_max = 0.0;  // 0: largest price at zero output over the intervals
  int max_rounds = 100;     // outer passes over the multipliers
};

struct MultiIntervalReport {
  std::vector<EquilibriumReport> intervals;
  std::vector<double> lambdas;    // per energy limit
  std::vector<double> mus;        // per generalized constraint
  std::vector<double> usage;      // sum_t q per energy limit
  std::vector<double> slackness;  // lambda * (budget - usage)
  std::vector<double> constraint_values;  // lhs - rhs per constraint
  std::vector<std::vector<double>> payments;  // [interval][producer], zero offsets
  double social_welfare = 0.0;
  int rounds = 0;
};

// Costs offset by mu * coefficient * q on the constrained unit-intervals.
MultiIntervalScenario apply_generalized_constraint(const MultiIntervalScenario& scenario,
                                                   const LinearConstraint& constraint, double mu);

MultiIntervalReport solve_multi(EquilibriumKind kind, const MultiIntervalScenario& scenario,
                                const MultiConfig& config = {});

double incentive_payment_t(const MultiIntervalScenario& scenario,
                           const std::vector<GenerationProfile>& profiles, std::size_t producer,
                           std::size_t interval, double offset = 0.0);

}  // namespace spotmarket
