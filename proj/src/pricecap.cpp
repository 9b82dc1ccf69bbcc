#include "spotmarket/pricecap.hpp"

#include <algorithm>
#include <cmath>

#include "engine.hpp"
#include "spotmarket/errors.hpp"

namespace spotmarket {

std::vector<double> capped_price(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                 std::span<const double> q, std::span<const double> caps) {
  if (caps.size() != grid.node_count) throw DomainError("one price cap per node required");
  for (double c : caps)
    if (!(c >= 0.0)) throw DomainError("price caps must be nonnegative");
  auto p = nodal_price(grid, utilities, q);
  for (std::size_t n = 0; n < p.size(); ++n) p[n] = std::min(p[n], caps[n]);
  return p;
}

CapRegions cap_regions(const MarketScenario& s, const EquilibriumReport& olig, std::size_t producer,
                       std::size_t node, double cap) {
  if (!(cap > 0.0)) throw DomainError("cap must be positive");
  const MeritSplit merit = detail::block_merit(s, detail::GameRule{}, olig.profile, node, producer);
  const PiecewiseCurve& truth = merit.aggregate();
  const double top = merit.capacity();
  CapRegions r;
  if (!(top > 0.0)) return r;
  const PiecewiseCurve mp = declared_cost_market_power(s, olig, producer, node);
  r.q_tilde = truth.max_quantity_at_marginal(cap);
  r.q_hat = std::min(mp.min_quantity_at_marginal(cap), r.q_tilde);

  std::vector<MarginalSegment> segs;
  for (const auto& m : mp.marginal_segments())
    if (m.start < r.q_hat) segs.push_back(m);
  if (r.q_tilde > r.q_hat) segs.push_back({r.q_hat, cap, 0.0});
  if (r.q_tilde < top) {
    const auto tail = truth.marginal_segments();
    for (std::size_t k = 0; k < tail.size(); ++k) {
      const double end = k + 1 < tail.size() ? tail[k + 1].start : top;
      if (end <= r.q_tilde) continue;
      const double start = std::max(tail[k].start, r.q_tilde);
      segs.push_back({start, tail[k].marginal + tail[k].marginal_slope * (start - tail[k].start),
                      tail[k].marginal_slope});
    }
  }
  if (segs.empty()) segs.push_back({0.0, cap, 0.0});
  PiecewiseCurve declared = PiecewiseCurve::from_marginals(segs, top, Curvature::Unconstrained);
  if (declared.is_convex()) {
    const auto pieces = declared.pieces();
    declared = PiecewiseCurve({pieces.begin(), pieces.end()}, top, Curvature::Convex);
  }
  r.declared = std::move(declared);
  return r;
}

CapRegions cap_regions(const MarketScenario& s, std::size_t producer, std::size_t node, double cap) {
  return cap_regions(s, solve(EquilibriumKind::Oligopolistic, s), producer, node, cap);
}

std::optional<double> desired_demand(const DemandModel& model, std::span<const double> q,
                                     std::size_t node, double cap) {
  std::vector<double> at(q.begin(), q.end());
  auto price = [&](double y) {
    at[node] = y;
    return model.prices(at)[node];
  };
  // far enough out that every utility sits on its last piece; larger values
  // only cost precision in the allocation program
  double scale = 1.0;
  for (double v : q) scale += v;
  for (const auto& u : model.utilities())
    for (double b : u.breakpoints()) scale = std::max(scale, b);
  if (price(1e6 * scale) >= cap) return std::nullopt;
  if (price(0.0) < cap) return 0.0;
  double lo = 0.0, hi = std::max(1.0, q[node]);
  while (price(hi) >= cap) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (price(mid) >= cap) lo = mid;
    else hi = mid;
  }
  return lo;
}

CappedReport solve_capped(const MarketScenario& s, std::span<const double> caps,
                          const SolverConfig& config) {
  config.check();
  require_valid(s);
  if (caps.size() != s.node_count()) throw DomainError("one price cap per node required");
  for (double c : caps)
    if (!(c >= 0.0)) throw DomainError("price caps must be nonnegative");

  const detail::PriceOracle oracle(s.demand_model(), {caps.begin(), caps.end()});
  const auto rule = detail::rule_for(config.terms_override.value_or(
      condition_terms(EquilibriumKind::Oligopolistic)));
  auto run = detail::gauss_seidel(s, oracle, rule, config, detail::start_profile(s, config));

  CappedReport out;
  out.equilibrium =
      detail::build_report(EquilibriumKind::Oligopolistic, s, oracle, std::move(run));
  out.caps.assign(caps.begin(), caps.end());
  const auto q = out.equilibrium.profile.node_totals();
  const auto raw = oracle.uncapped(q);
  for (std::size_t n = 0; n < s.node_count(); ++n) {
    out.cap_binding.push_back(raw[n] >= caps[n]);
    const auto want = std::isfinite(caps[n]) ? desired_demand(oracle.model(), q, n, caps[n])
                                             : std::optional<double>(out.equilibrium.demand.demand[n]);
    out.desired_demand.push_back(want);
    if (want)
      out.load_shed.push_back(std::max(0.0, *want - out.equilibrium.demand.demand[n]));
    else
      out.load_shed.push_back(std::nullopt);
  }
  return out;
}

}  // namespace spotmarket
