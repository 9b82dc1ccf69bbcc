#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spotmarket/network.hpp"
#include "spotmarket/piecewise.hpp"

namespace spotmarket {

// Indices are zero-based in the library; files and reports use one-based ids.
struct Unit {
  std::size_t node = 0;
  std::size_t producer = 0;
  std::size_t index = 0;  // unit id within (node, producer)
  double capacity = 0.0;
  PiecewiseCurve cost = PiecewiseCurve::zero(0.0);
  std::vector<PiecewiseCurve> pollution;  // one curve per channel
  bool operator==(const Unit&) const = default;
};

// Separable damage: E = sum over nodes and channels of damage[n][m](x_nm).
struct Externality {
  std::vector<std::vector<PiecewiseCurve>> damage;

  double value(std::size_t node, std::size_t channel, double x) const;
  double marginal(std::size_t node, std::size_t channel, double x) const;
  bool affine() const;  // every damage curve is a single linear piece
  bool operator==(const Externality&) const = default;
};

struct MarketScenario {
  std::string name;
  Grid grid;
  std::vector<PiecewiseCurve> utilities;
  std::vector<Unit> units;
  Externality externality;
  std::size_t producer_count = 0;
  std::size_t channel_count = 1;
  std::optional<std::vector<double>> price_caps;
  std::vector<double> incentive_offsets;

  std::size_t node_count() const { return grid.node_count; }
  // unit positions of (node, producer) in canonical order
  std::vector<std::size_t> units_of(std::size_t node, std::size_t producer) const;
  double capacity(std::size_t node, std::size_t producer) const;
  // sort units by (node, producer, index); the order all solvers sweep in
  void canonicalize();
  DemandModel demand_model() const { return DemandModel(grid, utilities); }
  bool operator==(const MarketScenario&) const = default;
};

// Observable totals only; this is all the ISO gets to see.
class TotalsView {
 public:
  double node_producer(std::size_t n, std::size_t i) const { return q_[n * producers_ + i]; }
  double node(std::size_t n) const { return node_[n]; }
  double pollution(std::size_t n, std::size_t i, std::size_t m) const {
    return x_[(n * producers_ + i) * channels_ + m];
  }
  double node_pollution(std::size_t n, std::size_t m) const;
  double capacity(std::size_t n, std::size_t i) const { return k_[n * producers_ + i]; }
  std::span<const double> node_totals() const { return node_; }
  std::size_t node_count() const { return nodes_; }
  std::size_t producer_count() const { return producers_; }
  std::size_t channel_count() const { return channels_; }

 private:
  friend class GenerationProfile;
  std::size_t nodes_ = 0, producers_ = 0, channels_ = 0;
  std::vector<double> q_, x_, k_, node_;
};

class GenerationProfile {
 public:
  GenerationProfile() = default;  // empty market
  GenerationProfile(const MarketScenario& scenario, std::vector<double> unit_quantities);
  static GenerationProfile zero(const MarketScenario& scenario);

  std::span<const double> units() const { return q_; }
  double unit(std::size_t k) const { return q_[k]; }
  double node_producer(std::size_t n, std::size_t i) const { return totals_.node_producer(n, i); }
  double node(std::size_t n) const { return totals_.node(n); }
  double producer(std::size_t i) const;
  double pollution(std::size_t n, std::size_t i, std::size_t m) const {
    return totals_.pollution(n, i, m);
  }
  double node_pollution(std::size_t n, std::size_t m) const { return totals_.node_pollution(n, m); }
  std::span<const double> node_totals() const { return totals_.node_totals(); }
  const TotalsView& totals() const { return totals_; }
  bool operator==(const GenerationProfile& o) const { return q_ == o.q_; }

 private:
  std::vector<double> q_;
  TotalsView totals_;
};

struct Violation {
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const MarketScenario& scenario);
// throws ValidationError listing every violation
void require_valid(const MarketScenario& scenario);

double social_welfare(const MarketScenario& scenario, const GenerationProfile& profile);
double social_welfare(const MarketScenario& scenario, const DemandModel& model,
                      const GenerationProfile& profile);
double total_cost(const MarketScenario& scenario, const GenerationProfile& profile);
double externality_cost(const MarketScenario& scenario, const GenerationProfile& profile);
double producer_cost(const MarketScenario& scenario, const GenerationProfile& profile,
                     std::size_t producer);
double producer_profit(const MarketScenario& scenario, const GenerationProfile& profile,
                       std::size_t producer);
double producer_profit(const MarketScenario& scenario, const GenerationProfile& profile,
                       std::size_t producer, std::span<const double> prices);
// [node][channel]
std::vector<std::vector<double>> pollution_totals(const MarketScenario& scenario,
                                                  const GenerationProfile& profile);

}  // namespace spotmarket
