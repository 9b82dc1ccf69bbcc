#include "engine.hpp"

#include <algorithm>
#include <cmath>

#include "scalar_search.hpp"
#include "spotmarket/errors.hpp"
#include "spotmarket/incentive.hpp"

namespace spotmarket::detail {

PriceOracle::PriceOracle(DemandModel model, std::vector<double> caps)
    : model_(std::move(model)), caps_(std::move(caps)) {
  if (!caps_.empty() && caps_.size() != model_.node_count())
    throw DomainError("one price cap per node required");
}

PriceOracle::Entry& PriceOracle::lookup(std::span<const double> q, Side side) const {
  for (auto& e : cache_)
    if (e.side == side && std::equal(e.q.begin(), e.q.end(), q.begin(), q.end())) return e;
  if (cache_.size() >= 32) cache_.pop_back();
  cache_.push_front({{q.begin(), q.end()}, side, model_.prices(q, side), {}});
  return cache_.front();
}

std::vector<double> PriceOracle::uncapped(std::span<const double> q, Side side) const {
  return lookup(q, side).p;
}

std::vector<double> PriceOracle::prices(std::span<const double> q, Side side) const {
  std::vector<double> p = lookup(q, side).p;
  for (std::size_t n = 0; n < caps_.size(); ++n) p[n] = std::min(p[n], caps_[n]);
  return p;
}

Eigen::MatrixXd PriceOracle::jacobian(std::span<const double> q, Side side) const {
  Entry& e = lookup(q, side);
  if (e.j.size() == 0) e.j = model_.jacobian(q, side);
  Eigen::MatrixXd j = e.j;
  // derivative of min(P, cap): zero above the cap, one-sided at it
  for (std::size_t a = 0; a < caps_.size(); ++a) {
    const auto r = static_cast<Eigen::Index>(a);
    const double gap = e.p[a] - caps_[a];
    if (gap > 1e-9) {
      j.row(r).setZero();
    } else if (gap >= -1e-9) {
      for (Eigen::Index b = 0; b < j.cols(); ++b)
        j(r, b) = side == Side::Right ? std::min(j(r, b), 0.0) : std::max(j(r, b), 0.0);
    }
  }
  return j;
}

GameRule rule_for(const ConditionTerms& terms) {
  GameRule r;
  r.objective = terms.market_power ? BlockObjective::Profit : BlockObjective::Welfare;
  r.externality = terms.marginal_externality;
  return r;
}

namespace {

double damage_slope(const MarketScenario& s, std::size_t node, std::size_t channel, double x,
                    Side side) {
  const auto& dmg = s.externality.damage;
  if (node >= dmg.size() || channel >= dmg[node].size()) return 0.0;
  const auto& e = dmg[node][channel];
  x = std::clamp(x, 0.0, e.domain_end());
  if (side == Side::Left && x > 0.0) return e.left_derivative(x);
  return e.right_derivative(x);
}

std::vector<double> damage_at(const MarketScenario& s, const TotalsView& t, std::size_t node,
                              Side side) {
  std::vector<double> e(s.channel_count, 0.0);
  for (std::size_t m = 0; m < s.channel_count; ++m)
    e[m] = damage_slope(s, node, m, t.node_pollution(node, m), side);
  return e;
}

}  // namespace

std::vector<double> marginal_damage(const MarketScenario& s, const TotalsView& t,
                                    std::size_t node) {
  return damage_at(s, t, node, Side::Right);
}

PiecewiseCurve adjusted_cost(const Unit& u, std::span<const double> damage) {
  PiecewiseCurve c = u.cost.restricted(u.capacity);
  bool touched = false;
  for (std::size_t m = 0; m < damage.size() && m < u.pollution.size(); ++m) {
    if (damage[m] == 0.0) continue;
    c = c.plus(u.pollution[m].restricted(u.capacity).scaled(damage[m]));
    touched = true;
  }
  if (!touched) return c;
  const auto pieces = c.pieces();
  // throws if the adjusted cost is not convex
  return PiecewiseCurve({pieces.begin(), pieces.end()}, c.domain_end(), Curvature::Convex);
}

MeritSplit block_merit(const MarketScenario& s, const GameRule& rule, const GenerationProfile& p,
                       std::size_t node, std::size_t producer) {
  std::vector<double> e;
  if (rule.externality || rule.objective == BlockObjective::Payment)
    e = damage_at(s, p.totals(), node, Side::Right);
  std::vector<MeritComponent> comps;
  for (std::size_t k : s.units_of(node, producer)) {
    const Unit& u = s.units[k];
    comps.push_back({e.empty() ? u.cost.restricted(u.capacity) : adjusted_cost(u, e), u.capacity});
  }
  return merit_merge(comps);
}

double unit_condition(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                      const GenerationProfile& p, std::size_t k, Side side) {
  const Unit& u = s.units[k];
  const double q = p.unit(k);
  const std::span<const double> nodes = p.node_totals();
  const bool left = side == Side::Left && q > 0.0;
  double f = oracle.prices(nodes, side)[u.node];
  f -= left ? u.cost.left_derivative(q) : u.cost.right_derivative(q);
  if (rule.externality || rule.objective == BlockObjective::Payment) {
    const auto e = damage_at(s, p.totals(), u.node, side);
    for (std::size_t m = 0; m < e.size() && m < u.pollution.size(); ++m) {
      const double dx = left ? u.pollution[m].left_derivative(q) : u.pollution[m].right_derivative(q);
      f -= e[m] * dx;
    }
  }
  if (rule.objective == BlockObjective::Profit) {
    const Eigen::MatrixXd j = oracle.jacobian(nodes, side);
    for (std::size_t n = 0; n < s.node_count(); ++n)
      f += j(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(u.node)) *
           p.node_producer(n, u.producer);
  }
  return f;
}

double max_violation(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                     const GenerationProfile& p) {
  constexpr double kAtBound = 1e-9;
  double worst = 0.0;
  for (std::size_t k = 0; k < s.units.size(); ++k) {
    const double q = p.unit(k);
    const double cap = s.units[k].capacity;
    if (q < cap - kAtBound) worst = std::max(worst, unit_condition(s, oracle, rule, p, k, Side::Right));
    if (q > kAtBound) worst = std::max(worst, -unit_condition(s, oracle, rule, p, k, Side::Left));
  }
  return worst;
}

double payment_value(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                     const GenerationProfile& p, std::size_t node, std::size_t producer,
                     const MeritSplit& merit, double y) {
  const double offset = producer < rule.offsets.size() ? rule.offsets[producer] : 0.0;
  std::vector<double> units(p.units().begin(), p.units().end());
  const auto ids = s.units_of(node, producer);
  const auto split = merit.disaggregate(std::clamp(y, 0.0, merit.capacity()));
  for (std::size_t c = 0; c < ids.size(); ++c) units[ids[c]] = split[c];
  const GenerationProfile trial(s, std::move(units));
  const auto price = oracle.prices(trial.node_totals());
  const double profit = producer_profit(s, trial, producer, price);
  return profit + payment_breakdown(s, oracle.model(), trial.totals(), producer, price, offset).total();
}

namespace {

struct BlockStep {
  MeritSplit merit;
  double target;
};

BlockStep best_response(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                        const GenerationProfile& p, std::size_t node, std::size_t producer) {
  MeritSplit merit = block_merit(s, rule, p, node, producer);
  const double cap = merit.capacity();
  if (!(cap > 0.0)) return {std::move(merit), 0.0};
  const PiecewiseCurve& agg = merit.aggregate();
  const double y0 = p.node_producer(node, producer);
  const std::size_t nodes = s.node_count();

  auto totals_at = [&](double y) {
    std::vector<double> q(p.node_totals().begin(), p.node_totals().end());
    q[node] = std::max(0.0, q[node] - y0 + y);
    return q;
  };
  auto own = [&](std::size_t n, double y) {
    return n == node ? y : p.node_producer(n, producer);
  };

  ScalarObjective obj;
  obj.slope = [&](double y) {
    const auto q = totals_at(y);
    double f = oracle.prices(q)[node] - agg.right_derivative(std::min(y, cap));
    if (rule.objective == BlockObjective::Profit) {
      const Eigen::MatrixXd j = oracle.jacobian(q);
      for (std::size_t n = 0; n < nodes; ++n)
        f += j(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(node)) * own(n, y);
    }
    return f;
  };
  if (rule.objective == BlockObjective::Profit) {
    obj.value = [&](double y) {
      const auto q = totals_at(y);
      const auto price = oracle.prices(q);
      double v = -agg.eval(std::min(y, cap));
      for (std::size_t n = 0; n < nodes; ++n) v += price[n] * own(n, y);
      return v;
    };
  } else if (rule.objective == BlockObjective::Payment) {
    obj.value = [&](double y) { return payment_value(s, oracle, rule, p, node, producer, merit, y); };
  }
  const auto hints = agg.breakpoints();
  const bool concave = rule.objective == BlockObjective::Welfare;
  const double target = maximize_scalar(obj, 0.0, cap, hints, concave);
  return {std::move(merit), target};
}

}  // namespace

double block_best_response(const MarketScenario& s, const PriceOracle& oracle,
                           const GameRule& rule, const GenerationProfile& p, std::size_t node,
                           std::size_t producer) {
  return best_response(s, oracle, rule, p, node, producer).target;
}

EngineResult gauss_seidel(const MarketScenario& s, const PriceOracle& oracle, const GameRule& rule,
                          const SolverConfig& config, std::vector<double> units) {
  if (units.size() != s.units.size()) throw DomainError("start profile needs one entry per unit");
  for (std::size_t k = 0; k < units.size(); ++k)
    units[k] = std::clamp(units[k], 0.0, s.units[k].capacity);

  EngineResult out;
  double damping = config.damping;
  int stalled = 0;
  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    double largest = 0.0;
    for (std::size_t n = 0; n < s.node_count(); ++n) {
      for (std::size_t i = 0; i < s.producer_count; ++i) {
        const auto ids = s.units_of(n, i);
        if (ids.empty()) continue;
        const GenerationProfile p(s, units);
        BlockStep step = best_response(s, oracle, rule, p, n, i);
        const double y0 = p.node_producer(n, i);
        largest = std::max(largest, std::abs(step.target - y0));
        const double y = std::clamp(y0 + damping * (step.target - y0), 0.0, step.merit.capacity());
        const auto split = step.merit.disaggregate(y);
        for (std::size_t c = 0; c < ids.size(); ++c) {
          largest = std::max(largest, std::abs(split[c] - units[ids[c]]));
          units[ids[c]] = split[c];
        }
      }
    }
    out.trace.push_back(largest);
    out.sweeps = sweep;
    if (largest <= config.tolerance) {
      out.converged = true;
      break;
    }
    // cycling: the step is not shrinking
    const std::size_t t = out.trace.size();
    if (t >= 3 && out.trace[t - 1] >= 0.95 * out.trace[t - 3]) {
      if (++stalled >= 3 && damping > 1.0 / 1024.0) {
        damping *= 0.5;
        stalled = 0;
      }
    } else {
      stalled = 0;
    }
  }
  out.units = std::move(units);
  out.residual = max_violation(s, oracle, rule, GenerationProfile(s, out.units));
  return out;
}

}  // namespace spotmarket::detail
