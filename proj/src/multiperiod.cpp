#include "spotmarket/multiperiod.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "engine.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/incentive.hpp"

namespace spotmarket {

namespace {

std::optional<std::size_t> find_unit(const MarketScenario& s, const UnitRef& ref) {
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    const Unit& u = s.units[k];
    if (u.node == ref.node && u.producer == ref.producer && u.index == ref.index) return k;
  }
  return std::nullopt;
}

std::string label(const UnitRef& r) {
  return "(" + std::to_string(r.node + 1) + "," + std::to_string(r.producer + 1) + "," +
         std::to_string(r.index + 1) + ")";
}

}  // namespace

ValidationReport validate(const MultiIntervalScenario& m) {
  ValidationReport r;
  auto flag = [&](std::string where, std::string what) {
    r.violations.push_back({std::move(where), std::move(what)});
  };
  if (m.intervals.empty()) {
    flag("intervals", "at least one interval is required");
    return r;
  }
  for (std::size_t t = 0; t < m.intervals.size(); ++t) {
    for (auto v : validate(m.intervals[t]).violations)
      flag("interval " + std::to_string(t + 1) + " " + v.location, v.message);
    const auto& a = m.intervals[t].units;
    const auto& b = m.intervals.front().units;
    bool same = a.size() == b.size();
    for (std::size_t k = 0; same && k < a.size(); ++k)
      same = a[k].node == b[k].node && a[k].producer == b[k].producer && a[k].index == b[k].index;
    if (!same) flag("interval " + std::to_string(t + 1), "unit list differs from interval 1");
  }
  for (std::size_t l = 0; l < m.energy_limits.size(); ++l) {
    const auto& e = m.energy_limits[l];
    const std::string where = "energy limit " + label(e.unit);
    if (!(e.budget >= 0.0)) flag(where, "budget must be >= 0");
    if (!find_unit(m.intervals.front(), e.unit)) flag(where, "references a missing unit");
  }
  for (std::size_t c = 0; c < m.constraints.size(); ++c)
    for (const auto& term : m.constraints[c].terms) {
      const std::string where = "constraint " + std::to_string(c + 1);
      if (term.interval >= m.intervals.size()) flag(where, "references a missing interval");
      else if (!find_unit(m.intervals[term.interval], term.unit))
        flag(where, "references a missing unit " + label(term.unit));
    }
  return r;
}

namespace {

struct Multipliers {
  std::vector<double> lambda, mu;
};

// per interval, per unit marginal offset
std::vector<std::vector<double>> offsets(const MultiIntervalScenario& m, const Multipliers& w) {
  std::vector<std::vector<double>> off(m.intervals.size());
  for (std::size_t t = 0; t < m.intervals.size(); ++t) {
    off[t].assign(m.intervals[t].units.size(), 0.0);
    for (std::size_t l = 0; l < m.energy_limits.size(); ++l)
      off[t][*find_unit(m.intervals[t], m.energy_limits[l].unit)] += w.lambda[l];
  }
  for (std::size_t c = 0; c < m.constraints.size(); ++c)
    for (const auto& term : m.constraints[c].terms)
      off[term.interval][*find_unit(m.intervals[term.interval], term.unit)] +=
          w.mu[c] * term.coefficient;
  return off;
}

MarketScenario with_offsets(const MarketScenario& s, const std::vector<double>& off) {
  MarketScenario a = s;
  for (std::size_t k = 0; k < a.units.size(); ++k)
    if (off[k] != 0.0) a.units[k].cost = a.units[k].cost.plus_linear(off[k]);
  return a;
}

// `warm` holds the last unit profile per interval and is updated in place.
std::vector<EquilibriumReport> solve_all(EquilibriumKind kind, const MultiIntervalScenario& m,
                                         const Multipliers& w, SolverConfig config,
                                         std::vector<std::vector<double>>& warm) {
  const auto off = offsets(m, w);
  std::vector<EquilibriumReport> out;
  warm.resize(m.intervals.size());
  for (std::size_t t = 0; t < m.intervals.size(); ++t) {
    if (!warm[t].empty()) {
      config.initial = InitialProfile::Explicit;
      config.explicit_profile = warm[t];
    }
    out.push_back(detail::solve_unchecked(kind, with_offsets(m.intervals[t], off[t]), config));
    warm[t].assign(out.back().profile.units().begin(), out.back().profile.units().end());
  }
  return out;
}

double usage(const MultiIntervalScenario& m, const std::vector<EquilibriumReport>& r,
             const UnitRef& unit) {
  double u = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t)
    u += r[t].profile.unit(*find_unit(m.intervals[t], unit));
  return u;
}

double constraint_value(const MultiIntervalScenario& m, const std::vector<EquilibriumReport>& r,
                        const LinearConstraint& c) {
  double v = -c.rhs;
  for (const auto& term : c.terms)
    v += term.coefficient *
         r[term.interval].profile.unit(*find_unit(m.intervals[term.interval], term.unit));
  return v;
}

constexpr double kFeasible = 1e-10;

// Smallest multiplier (to bisection precision) with excess <= kFeasible,
// assuming the excess does not increase with the multiplier.  Stops early
// once the excess is within `tight` of zero (complementary slackness).
double bisect(const std::function<double(double)>& excess, double current, double start_hi,
              double tight) {
  const double at = excess(current);
  if (at <= kFeasible && (current == 0.0 || at >= -tight)) return current;
  if (excess(0.0) <= kFeasible) return 0.0;
  double lo = 0.0, hi = std::max(start_hi, 1.0);
  int doublings = 0;
  while (excess(hi) > kFeasible) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 60) throw NonConvergenceError("multiplier bracket exhausted", {});
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double e = excess(mid);
    if (e > kFeasible) {
      lo = mid;
    } else {
      hi = mid;
      if (e >= -tight) break;
    }
  }
  return hi;
}

}  // namespace

MultiIntervalScenario apply_generalized_constraint(const MultiIntervalScenario& m,
                                                   const LinearConstraint& c, double mu) {
  if (mu < 0.0) throw DomainError("multiplier must be nonnegative");
  MultiIntervalScenario out = m;
  if (mu == 0.0) return out;
  for (const auto& term : c.terms) {
    if (term.interval >= out.intervals.size()) throw DomainError("constraint names a missing interval");
    auto& s = out.intervals[term.interval];
    const auto k = find_unit(s, term.unit);
    if (!k) throw DomainError("constraint names a missing unit " + label(term.unit));
    s.units[*k].cost = s.units[*k].cost.plus_linear(mu * term.coefficient);
  }
  return out;
}

MultiIntervalReport solve_multi(EquilibriumKind kind, const MultiIntervalScenario& m,
                                const MultiConfig& config) {
  const auto report = validate(m);
  if (!report.ok()) {
    std::vector<std::string> lines;
    for (const auto& v : report.violations) lines.push_back(v.location + ": " + v.message);
    throw ValidationError("invalid multi-interval scenario: " + lines.front(), lines);
  }
  config.solver.check();
  // budget feasibility is checked to 1e-9, so the inner solves must be tighter
  SolverConfig inner = config.solver;
  inner.tolerance = std::min(inner.tolerance, 1e-11);
  std::vector<std::vector<double>> warm;

  double lambda_max = config.lambda_max;
  if (!(lambda_max > 0.0)) {
    for (const auto& s : m.intervals) {
      const std::vector<double> zero(s.node_count(), 0.0);
      for (double p : s.demand_model().prices(zero)) lambda_max = std::max(lambda_max, p);
    }
  }

  Multipliers w{std::vector<double>(m.energy_limits.size(), 0.0),
                std::vector<double>(m.constraints.size(), 0.0)};
  // a gap of `tight` keeps lambda * gap well below the slackness tolerance
  const double tight = 1e-3 * config.budget_tolerance;
  int rounds = 0;
  for (; rounds < config.max_rounds; ++rounds) {
    bool changed = false;
    for (std::size_t l = 0; l < w.lambda.size(); ++l) {
      const auto& lim = m.energy_limits[l];
      auto excess = [&](double lam) {
        Multipliers v = w;
        v.lambda[l] = lam;
        return usage(m, solve_all(kind, m, v, inner, warm), lim.unit) - lim.budget;
      };
      const double next = bisect(excess, w.lambda[l], lambda_max, tight);
      changed |= std::abs(next - w.lambda[l]) > 1e-9 * (1.0 + w.lambda[l]);
      w.lambda[l] = next;
    }
    for (std::size_t c = 0; c < w.mu.size(); ++c) {
      auto excess = [&](double mu) {
        Multipliers v = w;
        v.mu[c] = mu;
        return constraint_value(m, solve_all(kind, m, v, inner, warm), m.constraints[c]);
      };
      const double next = bisect(excess, w.mu[c], lambda_max, tight);
      changed |= std::abs(next - w.mu[c]) > 1e-9 * (1.0 + w.mu[c]);
      w.mu[c] = next;
    }
    if (!changed) break;
  }
  if (rounds == config.max_rounds)
    throw NonConvergenceError("multiplier rounds did not settle", {});

  MultiIntervalReport out;
  out.intervals = solve_all(kind, m, w, inner, warm);
  out.lambdas = w.lambda;
  out.mus = w.mu;
  out.rounds = rounds + 1;
  for (std::size_t t = 0; t < m.intervals.size(); ++t) {
    // report true welfare and profit, not the offset costs
    const MarketScenario& s = m.intervals[t];
    auto& r = out.intervals[t];
    const GenerationProfile p(s, {r.profile.units().begin(), r.profile.units().end()});
    r.profile = p;
    r.social_welfare = social_welfare(s, p);
    for (std::size_t i = 0; i < s.producer_count; ++i) r.profit[i] = producer_profit(s, p, i, r.prices);
    out.social_welfare += r.social_welfare;
    std::vector<double> phi;
    for (std::size_t i = 0; i < s.producer_count; ++i) phi.push_back(incentive_payment_multi(s, p, i));
    out.payments.push_back(std::move(phi));
  }
  for (std::size_t l = 0; l < m.energy_limits.size(); ++l) {
    const double u = usage(m, out.intervals, m.energy_limits[l].unit);
    out.usage.push_back(u);
    out.slackness.push_back(w.lambda[l] * (m.energy_limits[l].budget - u));
  }
  for (const auto& c : m.constraints) out.constraint_values.push_back(constraint_value(m, out.intervals, c));
  return out;
}

double incentive_payment_t(const MultiIntervalScenario& m,
                           const std::vector<GenerationProfile>& profiles, std::size_t producer,
                           std::size_t interval, double offset) {
  if (interval >= m.intervals.size() || interval >= profiles.size())
    throw DomainError("no such interval");
  return incentive_payment_multi(m.intervals[interval], profiles[interval], producer, offset);
}

}  // namespace spotmarket
