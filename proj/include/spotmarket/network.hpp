#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spotmarket/piecewise.hpp"

namespace spotmarket {

struct Line {
  std::vector<double> ptdf;  // H_ln
  double capacity = 0.0;
  bool operator==(const Line&) const = default;
};

// generation·q + demand·d <= rhs
struct IsoConstraint {
  std::vector<double> generation;
  std::vector<double> demand;
  double rhs = 0.0;
  bool operator==(const IsoConstraint&) const = default;
};

struct Grid {
  std::size_t node_count = 1;
  std::vector<Line> lines;
  std::vector<IsoConstraint> extra_constraints;

  static Grid single_node() { return Grid{}; }
  std::vector<std::string> problems() const;
  bool operator==(const Grid&) const = default;
};

struct DemandAllocation {
  std::vector<double> demand;
  std::vector<double> flows;
  double utility_value = 0.0;
  std::vector<std::string> binding_set;
};

// Which one-sided derivative to take at a kink.
enum class Side { Right, Left };

// The ISO's demand subproblem for a fixed grid and set of utilities.  Keeps
// the program structure so repeated evaluations only change right-hand sides.
class DemandModel {
 public:
  DemandModel(Grid grid, std::vector<PiecewiseCurve> utilities);
  ~DemandModel();
  DemandModel(const DemandModel&);
  DemandModel& operator=(const DemandModel&);

  std::size_t node_count() const { return grid_.node_count; }
  const Grid& grid() const { return grid_; }
  std::span<const PiecewiseCurve> utilities() const { return utilities_; }

  DemandAllocation allocate(std::span<const double> q) const;
  double value(std::span<const double> q) const;
  // P_n = one-sided derivative of U in q_n (left falls back to right at q_n = 0)
  std::vector<double> prices(std::span<const double> q, Side side = Side::Right) const;
  // J(a, b) = one-sided derivative of P_a with respect to q_b
  Eigen::MatrixXd jacobian(std::span<const double> q, Side side = Side::Right) const;

  struct Impl;

 private:
  Grid grid_;
  std::vector<PiecewiseCurve> utilities_;
  std::unique_ptr<Impl> impl_;
};

DemandAllocation allocate_demand(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                 std::span<const double> q);
double utility_value(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                     std::span<const double> q);
std::vector<double> nodal_price(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                std::span<const double> q);
Eigen::MatrixXd price_jacobian(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                               std::span<const double> q);

}  // namespace spotmarket
