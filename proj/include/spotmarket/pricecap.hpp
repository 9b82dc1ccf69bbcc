#pragma once

#include <optional>
#include <span>
#include <vector>

#include "spotmarket/equilibrium.hpp"
#include "spotmarket/market.hpp"
#include "spotmarket/network.hpp"

namespace spotmarket {

// min(P_n, cap_n) elementwise
std::vector<double> capped_price(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                 std::span<const double> q, std::span<const double> caps);

struct CapRegions {
  double q_hat = 0.0;    // declared (market power) marginal reaches the cap
  double q_tilde = 0.0;  // true marginal passes the cap; output never exceeds this
  PiecewiseCurve declared = PiecewiseCurve::zero(0.0);  // region-wise declared cost
};

CapRegions cap_regions(const MarketScenario& scenario, const EquilibriumReport& oligopolistic,
                       std::size_t producer, std::size_t node, double cap);
// solves the oligopolistic equilibrium first
CapRegions cap_regions(const MarketScenario& scenario, std::size_t producer, std::size_t node,
                       double cap);

struct CappedReport {
  EquilibriumReport equilibrium;  // prices already capped
  std::vector<double> caps;
  // nullopt: marginal utility never falls to the cap (unbounded)
  std::vector<std::optional<double>> desired_demand;
  std::vector<std::optional<double>> load_shed;
  std::vector<bool> cap_binding;
};

// sup{y : P_n(q with q_n = y) >= cap}; nullopt when unbounded
std::optional<double> desired_demand(const DemandModel& model, std::span<const double> q,
                                     std::size_t node, double cap);

CappedReport solve_capped(const MarketScenario& scenario, std::span<const double> caps,
                          const SolverConfig& config = {});

}  // namespace spotmarket
