#include "spotmarket/market.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "spotmarket/errors.hpp"

namespace spotmarket {

double Externality::value(std::size_t node, std::size_t channel, double x) const {
  if (node >= damage.size() || channel >= damage[node].size()) return 0.0;
  return damage[node][channel].eval(x);
}

double Externality::marginal(std::size_t node, std::size_t channel, double x) const {
  if (node >= damage.size() || channel >= damage[node].size()) return 0.0;
  return damage[node][channel].right_derivative(x);
}

bool Externality::affine() const {
  for (const auto& row : damage)
    for (const auto& e : row)
      if (e.pieces().size() != 1 || e.pieces().front().quadratic != 0.0) return false;
  return true;
}

std::vector<std::size_t> MarketScenario::units_of(std::size_t node, std::size_t producer) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < units.size(); ++k)
    if (units[k].node == node && units[k].producer == producer) out.push_back(k);
  std::stable_sort(out.begin(), out.end(),
                   [&](std::size_t a, std::size_t b) { return units[a].index < units[b].index; });
  return out;
}

double MarketScenario::capacity(std::size_t node, std::size_t producer) const {
  double k = 0.0;
  for (const auto& u : units)
    if (u.node == node && u.producer == producer) k += u.capacity;
  return k;
}

void MarketScenario::canonicalize() {
  std::stable_sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
    return std::tie(a.node, a.producer, a.index) < std::tie(b.node, b.producer, b.index);
  });
}

double TotalsView::node_pollution(std::size_t n, std::size_t m) const {
  double x = 0.0;
  for (std::size_t i = 0; i < producers_; ++i) x += pollution(n, i, m);
  return x;
}

GenerationProfile::GenerationProfile(const MarketScenario& s, std::vector<double> q)
    : q_(std::move(q)) {
  if (q_.size() != s.units.size())
    throw DomainError("profile needs one quantity per unit");
  auto& t = totals_;
  t.nodes_ = s.node_count();
  t.producers_ = s.producer_count;
  t.channels_ = s.channel_count;
  t.q_.assign(t.nodes_ * t.producers_, 0.0);
  t.k_.assign(t.nodes_ * t.producers_, 0.0);
  t.x_.assign(t.nodes_ * t.producers_ * t.channels_, 0.0);
  t.node_.assign(t.nodes_, 0.0);
  for (std::size_t k = 0; k < q_.size(); ++k) {
    const Unit& u = s.units[k];
    const double v = q_[k];
    if (!(v >= -PiecewiseCurve::kTolerance) || v > u.capacity + PiecewiseCurve::kTolerance)
      throw DomainError("unit quantity outside [0, capacity]");
    const std::size_t cell = u.node * t.producers_ + u.producer;
    t.q_[cell] += v;
    t.k_[cell] += u.capacity;
    t.node_[u.node] += v;
    for (std::size_t m = 0; m < t.channels_ && m < u.pollution.size(); ++m)
      t.x_[cell * t.channels_ + m] += u.pollution[m].eval(std::min(v, u.pollution[m].domain_end()));
  }
}

GenerationProfile GenerationProfile::zero(const MarketScenario& s) {
  return GenerationProfile(s, std::vector<double>(s.units.size(), 0.0));
}

double GenerationProfile::producer(std::size_t i) const {
  double q = 0.0;
  for (std::size_t n = 0; n < totals_.node_count(); ++n) q += node_producer(n, i);
  return q;
}

namespace {

std::string unit_label(const Unit& u) {
  return "(" + std::to_string(u.node + 1) + "," + std::to_string(u.producer + 1) + "," +
         std::to_string(u.index + 1) + ")";
}

bool increasing(const PiecewiseCurve& c) {
  for (const auto& p : c.pieces()) {
    if (p.slope(p.start) < -PiecewiseCurve::kTolerance) return false;
  }
  if (c.bounded() && c.left_derivative(c.domain_end()) < -PiecewiseCurve::kTolerance) return false;
  return true;
}

}  // namespace

ValidationReport validate(const MarketScenario& s) {
  ValidationReport r;
  auto flag = [&](std::string where, std::string what) {
    r.violations.push_back({std::move(where), std::move(what)});
  };
  for (const auto& p : s.grid.problems()) flag("grid", p);
  const std::size_t nodes = s.node_count();
  if (s.utilities.size() != nodes)
    flag("nodes", "expected " + std::to_string(nodes) + " utility curves, got " +
                      std::to_string(s.utilities.size()));
  for (std::size_t n = 0; n < s.utilities.size(); ++n) {
    const auto& u = s.utilities[n];
    const std::string where = "nodes[" + std::to_string(n + 1) + "].utility";
    if (!u.is_concave()) flag(where, "utility must be concave");
    if (!increasing(u)) flag(where, "utility must be nondecreasing");
  }
  if (s.channel_count == 0) flag("pollutants", "at least one pollutant channel is required");

  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const auto& u : s.units) {
    const std::string where = "unit " + unit_label(u);
    if (u.node >= nodes) flag(where, "references a missing node");
    if (u.producer >= s.producer_count) flag(where, "references a missing producer");
    if (!seen.insert({u.node, u.producer, u.index}).second) flag(where, "duplicate unit id");
    if (!(u.capacity >= 0.0) || !std::isfinite(u.capacity)) flag(where, "capacity must be finite and >= 0");
    if (u.cost.domain_end() < u.capacity - PiecewiseCurve::kTolerance)
      flag(where, "cost curve does not cover the capacity");
    if (!u.cost.is_convex()) flag(where, "cost curve is not convex");
    if (!increasing(u.cost)) flag(where, "cost curve is decreasing");
    if (std::abs(u.cost.eval(0.0)) > PiecewiseCurve::kTolerance) flag(where, "cost(0) must be 0");
    if (u.pollution.size() != s.channel_count)
      flag(where, "expected " + std::to_string(s.channel_count) + " pollution curves");
    for (std::size_t m = 0; m < u.pollution.size(); ++m) {
      const auto& x = u.pollution[m];
      const std::string pw = where + " pollution[" + std::to_string(m + 1) + "]";
      if (!increasing(x)) flag(pw, "pollution must be nondecreasing");
      if (std::abs(x.eval(0.0)) > PiecewiseCurve::kTolerance) flag(pw, "pollution(0) must be 0");
      if (x.domain_end() < u.capacity - PiecewiseCurve::kTolerance)
        flag(pw, "pollution curve does not cover the capacity");
    }
  }

  const auto& dmg = s.externality.damage;
  if (!dmg.empty() && dmg.size() != nodes)
    flag("externalities", "damage table must have one row per node");
  for (std::size_t n = 0; n < dmg.size(); ++n) {
    if (dmg[n].size() != s.channel_count)
      flag("externalities node " + std::to_string(n + 1),
           "expected one damage curve per channel");
    for (std::size_t m = 0; m < dmg[n].size(); ++m) {
      const auto& e = dmg[n][m];
      const std::string where =
          "externality (node " + std::to_string(n + 1) + ", channel " + std::to_string(m + 1) + ")";
      if (!e.is_convex()) flag(where, "damage must be convex");
      if (!increasing(e)) flag(where, "damage must be nondecreasing");
      if (std::abs(e.eval(0.0)) > PiecewiseCurve::kTolerance) flag(where, "damage(0) must be 0");
      if (e.bounded()) {
        double most = 0.0;
        for (const auto& u : s.units)
          if (u.node == n && m < u.pollution.size())
            most += u.pollution[m].eval(std::min(u.capacity, u.pollution[m].domain_end()));
        if (e.domain_end() < most - PiecewiseCurve::kTolerance)
          flag(where, "damage curve does not cover the maximum pollution");
      }
    }
  }

  if (s.price_caps) {
    if (s.price_caps->size() != nodes) flag("price_caps", "one cap per node required");
    for (double c : *s.price_caps)
      if (!(c >= 0.0)) flag("price_caps", "caps must be >= 0");
  }
  if (!s.incentive_offsets.empty()) {
    if (s.incentive_offsets.size() != s.producer_count)
      flag("offsets", "one offset per producer required");
    for (double o : s.incentive_offsets)
      if (!(o >= 0.0)) flag("offsets", "offsets must be >= 0");
  }
  return r;
}

void require_valid(const MarketScenario& s) {
  const auto r = validate(s);
  if (r.ok()) return;
  std::vector<std::string> lines;
  for (const auto& v : r.violations) lines.push_back(v.location + ": " + v.message);
  throw ValidationError("invalid scenario: " + lines.front(), lines);
}

double total_cost(const MarketScenario& s, const GenerationProfile& p) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.units.size(); ++k) c += s.units[k].cost.eval(p.unit(k));
  return c;
}

double externality_cost(const MarketScenario& s, const GenerationProfile& p) {
  double e = 0.0;
  for (std::size_t n = 0; n < s.externality.damage.size(); ++n)
    for (std::size_t m = 0; m < s.externality.damage[n].size(); ++m)
      e += s.externality.value(n, m, p.node_pollution(n, m));
  return e;
}

double social_welfare(const MarketScenario& s, const DemandModel& model,
                      const GenerationProfile& p) {
  return model.value(p.node_totals()) - total_cost(s, p) - externality_cost(s, p);
}

double social_welfare(const MarketScenario& s, const GenerationProfile& p) {
  return social_welfare(s, s.demand_model(), p);
}

double producer_cost(const MarketScenario& s, const GenerationProfile& p, std::size_t producer) {
  double c = 0.0;
  for (std::size_t k = 0; k < s.units.size(); ++k)
    if (s.units[k].producer == producer) c += s.units[k].cost.eval(p.unit(k));
  return c;
}

double producer_profit(const MarketScenario& s, const GenerationProfile& p, std::size_t producer,
                       std::span<const double> prices) {
  double revenue = 0.0;
  for (std::size_t n = 0; n < s.node_count(); ++n) revenue += prices[n] * p.node_producer(n, producer);
  return revenue - producer_cost(s, p, producer);
}

double producer_profit(const MarketScenario& s, const GenerationProfile& p, std::size_t producer) {
  const auto prices = s.demand_model().prices(p.node_totals());
  return producer_profit(s, p, producer, prices);
}

std::vector<std::vector<double>> pollution_totals(const MarketScenario& s,
                                                  const GenerationProfile& p) {
  std::vector<std::vector<double>> out(s.node_count(), std::vector<double>(s.channel_count, 0.0));
  for (std::size_t n = 0; n < s.node_count(); ++n)
    for (std::size_t m = 0; m < s.channel_count; ++m) out[n][m] = p.node_pollution(n, m);
  return out;
}

}  // namespace spotmarket
