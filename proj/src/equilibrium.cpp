#include "spotmarket/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "engine.hpp"
#include "spotmarket/errors.hpp"

namespace spotmarket {

std::string to_string(EquilibriumKind kind) {
  switch (kind) {
    case EquilibriumKind::Optimal: return "optimal";
    case EquilibriumKind::Competitive: return "competitive";
    case EquilibriumKind::Oligopolistic: return "oligopolistic";
  }
  return "unknown";
}

ConditionTerms condition_terms(EquilibriumKind kind) {
  ConditionTerms t;
  t.marginal_externality = kind == EquilibriumKind::Optimal;
  t.market_power = kind == EquilibriumKind::Oligopolistic;
  return t;
}

void SolverConfig::check() const {
  if (!(tolerance > 0.0)) throw DomainError("solver tolerance must be positive");
  if (max_sweeps < 1) throw DomainError("max_sweeps must be at least 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw DomainError("damping must lie in (0, 1]");
}

double stationarity_violation(double f, double q, double capacity, double tol) {
  if (q <= tol) return std::max(0.0, f);
  if (q >= capacity - tol) return std::max(0.0, -f);
  return std::abs(f);
}

double stationarity(EquilibriumKind kind, const MarketScenario& s, const GenerationProfile& p,
                    std::size_t unit) {
  if (unit >= s.units.size()) throw DomainError("unit position out of range");
  const detail::PriceOracle oracle(s.demand_model());
  return detail::unit_condition(s, oracle, detail::rule_for(condition_terms(kind)), p, unit,
                                Side::Right);
}

double stationarity(EquilibriumKind kind, const MarketScenario& s, const GenerationProfile& p,
                    std::size_t node, std::size_t producer, std::size_t unit_id) {
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    const Unit& u = s.units[k];
    if (u.node == node && u.producer == producer && u.index == unit_id)
      return stationarity(kind, s, p, k);
  }
  throw DomainError("no such unit");
}

namespace detail {

EquilibriumReport build_report(EquilibriumKind kind, const MarketScenario& s,
                               const PriceOracle& oracle, EngineResult run) {
  if (!run.converged)
    throw NonConvergenceError("no convergence after " + std::to_string(run.sweeps) + " sweeps",
                              run.trace);
  EquilibriumReport r;
  r.kind = kind;
  r.profile = GenerationProfile(s, std::move(run.units));
  r.demand = oracle.model().allocate(r.profile.node_totals());
  r.prices = oracle.prices(r.profile.node_totals());
  r.social_welfare = social_welfare(s, oracle.model(), r.profile);
  for (std::size_t i = 0; i < s.producer_count; ++i)
    r.profit.push_back(producer_profit(s, r.profile, i, r.prices));
  r.residual = run.residual;
  r.converged = true;
  r.sweeps_used = run.sweeps;
  r.residual_trace = std::move(run.trace);
  return r;
}

std::vector<double> start_profile(const MarketScenario& s, const SolverConfig& config) {
  switch (config.initial) {
    case InitialProfile::Zero: return std::vector<double>(s.units.size(), 0.0);
    case InitialProfile::Explicit:
      if (config.explicit_profile.size() != s.units.size())
        throw DomainError("explicit start needs one quantity per unit");
      return config.explicit_profile;
    case InitialProfile::Competitive: {
      SolverConfig c = config;
      c.initial = InitialProfile::Zero;
      c.terms_override.reset();
      c.check_sensitivity = false;
      const auto units = solve_unchecked(EquilibriumKind::Competitive, s, c).profile.units();
      return std::vector<double>(units.begin(), units.end());
    }
  }
  return {};
}

}  // namespace detail

EquilibriumReport solve(EquilibriumKind kind, const MarketScenario& s, const SolverConfig& config) {
  config.check();
  require_valid(s);
  return detail::solve_unchecked(kind, s, config);
}

EquilibriumReport detail::solve_unchecked(EquilibriumKind kind, const MarketScenario& s,
                                          const SolverConfig& config) {
  const detail::PriceOracle oracle(s.demand_model());
  const auto rule = detail::rule_for(config.terms_override.value_or(condition_terms(kind)));
  auto run = detail::gauss_seidel(s, oracle, rule, config, detail::start_profile(s, config));
  EquilibriumReport r = detail::build_report(kind, s, oracle, std::move(run));

  if (config.check_sensitivity) {
    SolverConfig other = config;
    other.check_sensitivity = false;
    other.initial = config.initial == InitialProfile::Zero ? InitialProfile::Competitive
                                                           : InitialProfile::Zero;
    const auto alt = detail::gauss_seidel(s, oracle, rule, other, detail::start_profile(s, other));
    double gap = alt.converged ? 0.0 : kInfinity;
    for (std::size_t k = 0; k < alt.units.size() && alt.converged; ++k)
      gap = std::max(gap, std::abs(alt.units[k] - r.profile.unit(k)));
    r.sensitivity_flag = gap > std::max(1e-6, 100.0 * config.tolerance);
  }
  return r;
}

double market_power_index(const MarketScenario& s, const GenerationProfile& p,
                          std::size_t producer, std::size_t node) {
  const Eigen::MatrixXd j = s.demand_model().jacobian(p.node_totals());
  double m = 0.0;
  for (std::size_t n = 0; n < s.node_count(); ++n)
    m -= j(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(node)) * p.node_producer(n, producer);
  return m == 0.0 ? 0.0 : m;
}

PiecewiseCurve declared_cost_market_power(const MarketScenario& s,
                                          const EquilibriumReport& olig, std::size_t producer,
                                          std::size_t node) {
  if (producer >= s.producer_count || node >= s.node_count())
    throw DomainError("no such producer or node");
  const detail::PriceOracle oracle(s.demand_model());
  const detail::GameRule truthful{};
  const MeritSplit merit = detail::block_merit(s, truthful, olig.profile, node, producer);
  const PiecewiseCurve& cost = merit.aggregate();
  const double cap = merit.capacity();
  if (!(cap > 0.0)) return PiecewiseCurve::zero(0.0);

  const double y0 = olig.profile.node_producer(node, producer);
  auto totals_at = [&](double y) {
    std::vector<double> q(olig.profile.node_totals().begin(), olig.profile.node_totals().end());
    q[node] = std::max(0.0, q[node] - y0 + y);
    return q;
  };
  auto column = [&](double y) {
    const Eigen::MatrixXd j = oracle.jacobian(totals_at(y));
    return Eigen::VectorXd(j.col(static_cast<Eigen::Index>(node)));
  };
  auto same = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() <= 1e-9 * (1.0 + a.lpNorm<Eigen::Infinity>());
  };

  // the markup is affine wherever the price cell (hence the Jacobian column)
  // is fixed; find the cell boundaries along y by scanning and bisection
  std::vector<double> cuts{0.0};
  for (double b : cost.breakpoints()) cuts.push_back(b);
  constexpr int kScan = 64;
  std::vector<double> grid;
  for (int k = 0; k <= kScan; ++k) grid.push_back(cap * k / kScan);
  for (int k = 0; k < kScan; ++k) {
    double a = grid[static_cast<std::size_t>(k)], b = grid[static_cast<std::size_t>(k) + 1];
    const Eigen::VectorXd ca = column(a);
    if (same(ca, column(b - 1e-9 * cap))) continue;
    for (int it = 0; it < 60 && b - a > 1e-11 * (1.0 + cap); ++it) {
      const double m = 0.5 * (a + b);
      if (same(ca, column(m))) a = m;
      else b = m;
    }
    cuts.push_back(b);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end(),
                         [](double a, double b) { return std::abs(a - b) <= 1e-10; }),
             cuts.end());

  std::vector<MarginalSegment> segs;
  for (std::size_t c = 0; c < cuts.size(); ++c) {
    const double start = cuts[c];
    const double end = c + 1 < cuts.size() ? cuts[c + 1] : cap;
    if (end - start <= 1e-12) continue;
    const double mid = 0.5 * (start + end);
    const Eigen::VectorXd col = column(mid);
    double markup = 0.0;  // at y = start
    for (std::size_t n = 0; n < s.node_count(); ++n) {
      const double own = n == node ? start : olig.profile.node_producer(n, producer);
      markup -= col(static_cast<Eigen::Index>(n)) * own;
    }
    const double cost_slope =
        (cost.right_derivative(mid) - cost.right_derivative(start)) / (mid - start);
    segs.push_back({start, cost.right_derivative(start) + markup,
                    cost_slope - col(static_cast<Eigen::Index>(node))});
  }
  // the markup can drop across network cells, so convexity is not guaranteed
  PiecewiseCurve declared = PiecewiseCurve::from_marginals(segs, cap, Curvature::Unconstrained);
  if (!declared.is_convex()) return declared;
  const auto pieces = declared.pieces();
  return PiecewiseCurve({pieces.begin(), pieces.end()}, cap, Curvature::Convex);
}

}  // namespace spotmarket
