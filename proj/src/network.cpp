#include "spotmarket/network.hpp"

#include <algorithm>
#include <cmath>

#include "qp.hpp"
#include "spotmarket/errors.hpp"

namespace spotmarket {

std::vector<std::string> Grid::problems() const {
  std::vector<std::string> out;
  if (node_count == 0) out.push_back("grid has no nodes");
  for (std::size_t l = 0; l < lines.size(); ++l) {
    const std::string where = "lines[" + std::to_string(l) + "]";
    if (lines[l].ptdf.size() != node_count)
      out.push_back(where + ": ptdf row has " + std::to_string(lines[l].ptdf.size()) +
                    " entries, expected " + std::to_string(node_count));
    if (!(lines[l].capacity >= 0.0)) out.push_back(where + ": negative capacity");
  }
  for (std::size_t k = 0; k < extra_constraints.size(); ++k) {
    const auto& c = extra_constraints[k];
    const std::string where = "iso_constraints[" + std::to_string(k) + "]";
    if (c.generation.size() != node_count || c.demand.size() != node_count)
      out.push_back(where + ": coefficient vectors must have one entry per node");
  }
  return out;
}

namespace {

struct Variable {
  std::size_t node;
  double start;
  double width;  // may be infinite
};

}  // namespace

struct DemandModel::Impl {
  std::size_t nodes = 0;
  std::vector<Variable> vars;
  detail::QuadraticProgram base;  // rhs filled per call
  Eigen::MatrixXd rhs_sensitivity;  // d rhs / d q
  Eigen::VectorXd rhs_constant;
  std::vector<std::string> row_names;
  std::vector<int> physical_rows;  // balance, lines, extras
  std::vector<Eigen::VectorXd> node_selectors;

  detail::QuadraticProgram program(std::span<const double> q) const {
    detail::QuadraticProgram qp = base;
    Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
    qp.rhs = rhs_constant + rhs_sensitivity * qv;
    return qp;
  }

  Eigen::VectorXd initial_point(std::span<const PiecewiseCurve> utilities,
                                std::span<const double> q) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vars.size()));
    std::vector<double> left(q.begin(), q.end());
    for (std::size_t v = 0; v < vars.size(); ++v) {
      const auto n = vars[v].node;
      const double take = std::min(left[n], vars[v].width);
      x(static_cast<Eigen::Index>(v)) = std::max(0.0, take);
      left[n] -= x(static_cast<Eigen::Index>(v));
    }
    (void)utilities;
    return x;
  }
};

DemandModel::DemandModel(Grid grid, std::vector<PiecewiseCurve> utilities)
    : grid_(std::move(grid)), utilities_(std::move(utilities)), impl_(std::make_unique<Impl>()) {
  const auto probs = grid_.problems();
  if (!probs.empty()) throw ValidationError("invalid grid: " + probs.front(), probs);
  if (utilities_.size() != grid_.node_count)
    throw ValidationError("one utility per node required", {"utility count mismatch"});
  Impl& m = *impl_;
  m.nodes = grid_.node_count;
  const auto nodes = static_cast<Eigen::Index>(m.nodes);

  std::vector<double> hess, lin;
  for (std::size_t n = 0; n < m.nodes; ++n) {
    const auto& u = utilities_[n];
    if (u.curvature() != Curvature::Concave)
      throw CurveError("utility at node " + std::to_string(n + 1) + " must be concave");
    const auto pieces = u.pieces();
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      const double s = pieces[k].start;
      const double end = k + 1 < pieces.size() ? pieces[k + 1].start : u.domain_end();
      m.vars.push_back({n, s, end - s});
      hess.push_back(-2.0 * pieces[k].quadratic);
      lin.push_back(-pieces[k].slope(s));
    }
  }
  const auto nv = static_cast<Eigen::Index>(m.vars.size());

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> consts;
  std::vector<Eigen::VectorXd> sens;
  std::vector<char> eq;

  auto demand_row = [&](const std::vector<double>& per_node) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    for (Eigen::Index v = 0; v < nv; ++v) r(v) = per_node[m.vars[static_cast<std::size_t>(v)].node];
    return r;
  };
  auto add = [&](Eigen::VectorXd row, double c, Eigen::VectorXd s, bool equality,
                 std::string name, bool physical) {
    if (physical) m.physical_rows.push_back(static_cast<int>(rows.size()));
    rows.push_back(std::move(row));
    consts.push_back(c);
    sens.push_back(std::move(s));
    eq.push_back(equality ? 1 : 0);
    m.row_names.push_back(std::move(name));
  };

  add(demand_row(std::vector<double>(m.nodes, 1.0)), 0.0, Eigen::VectorXd::Ones(nodes), true,
      "balance", true);
  for (std::size_t l = 0; l < grid_.lines.size(); ++l) {
    const auto& line = grid_.lines[l];
    Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(line.ptdf.data(), nodes);
    // flow = H(q - d) <= f  and  -flow <= f
    add(-demand_row(line.ptdf), line.capacity, -h, false,
        "line[" + std::to_string(l + 1) + "] upper", true);
    add(demand_row(line.ptdf), line.capacity, h, false,
        "line[" + std::to_string(l + 1) + "] lower", true);
  }
  for (std::size_t k = 0; k < grid_.extra_constraints.size(); ++k) {
    const auto& c = grid_.extra_constraints[k];
    Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(c.generation.data(), nodes);
    add(demand_row(c.demand), c.rhs, -g, false, "iso[" + std::to_string(k + 1) + "]", true);
  }
  for (Eigen::Index v = 0; v < nv; ++v) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nv);
    r(v) = -1.0;
    add(r, 0.0, Eigen::VectorXd::Zero(nodes), false,
        "demand[" + std::to_string(m.vars[static_cast<std::size_t>(v)].node + 1) + "] >= 0",
        false);
    if (std::isfinite(m.vars[static_cast<std::size_t>(v)].width)) {
      r(v) = 1.0;
      add(r, m.vars[static_cast<std::size_t>(v)].width, Eigen::VectorXd::Zero(nodes), false,
          "utility piece bound", false);
    }
  }

  const auto nr = static_cast<Eigen::Index>(rows.size());
  m.base.hessian = Eigen::Map<Eigen::VectorXd>(hess.data(), nv);
  m.base.linear = Eigen::Map<Eigen::VectorXd>(lin.data(), nv);
  m.base.rows.resize(nr, nv);
  m.base.equality = eq;
  m.rhs_constant.resize(nr);
  m.rhs_sensitivity.resize(nr, nodes);
  for (Eigen::Index r = 0; r < nr; ++r) {
    m.base.rows.row(r) = rows[static_cast<std::size_t>(r)].transpose();
    m.rhs_constant(r) = consts[static_cast<std::size_t>(r)];
    m.rhs_sensitivity.row(r) = sens[static_cast<std::size_t>(r)].transpose();
  }
  for (std::size_t n = 0; n < m.nodes; ++n) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nv);
    for (Eigen::Index v = 0; v < nv; ++v)
      if (m.vars[static_cast<std::size_t>(v)].node == n) g(v) = 1.0;
    m.node_selectors.push_back(g);
  }
}

DemandModel::~DemandModel() = default;
DemandModel::DemandModel(const DemandModel& o)
    : grid_(o.grid_), utilities_(o.utilities_), impl_(std::make_unique<Impl>(*o.impl_)) {}
DemandModel& DemandModel::operator=(const DemandModel& o) {
  if (this != &o) {
    grid_ = o.grid_;
    utilities_ = o.utilities_;
    impl_ = std::make_unique<Impl>(*o.impl_);
  }
  return *this;
}

namespace {

void check_quantities(std::span<const double> q, std::size_t nodes) {
  if (q.size() != nodes) throw DomainError("quantity vector must have one entry per node");
  for (double v : q)
    if (!(v >= -PiecewiseCurve::kTolerance) || !std::isfinite(v))
      throw DomainError("nodal quantities must be finite and nonnegative");
}

}  // namespace

namespace {

struct Solved {
  detail::QuadraticProgram qp;
  detail::QpSolution sol;
};

Solved solve_at(const DemandModel::Impl& m, std::span<const PiecewiseCurve> utilities,
                std::span<const double> q) {
  Solved s{m.program(q), {}};
  try {
    s.sol = detail::solve_qp(s.qp, m.initial_point(utilities, q));
  } catch (const detail::QpInfeasible& e) {
    std::vector<std::string> names;
    for (int r : e.rows) names.push_back(m.row_names[static_cast<std::size_t>(r)]);
    std::string what = "demand allocation infeasible";
    if (!names.empty()) what += " (" + names.front() + (names.size() > 1 ? ", ..." : "") + ")";
    throw InfeasibleError(what, names);
  } catch (const detail::QpUnbounded&) {
    throw InfeasibleError("demand allocation unbounded", {});
  }
  return s;
}

}  // namespace

DemandAllocation DemandModel::allocate(std::span<const double> q) const {
  check_quantities(q, node_count());
  const Impl& m = *impl_;
  Solved s = solve_at(m, utilities_, q);
  Eigen::VectorXd x = detail::lexicographic_refine(s.qp, s.sol, m.node_selectors);

  DemandAllocation out;
  out.demand.assign(m.nodes, 0.0);
  for (std::size_t v = 0; v < m.vars.size(); ++v)
    out.demand[m.vars[v].node] += std::max(0.0, x(static_cast<Eigen::Index>(v)));
  for (std::size_t n = 0; n < m.nodes; ++n) {
    out.demand[n] = std::min(out.demand[n], utilities_[n].domain_end());
    out.utility_value += utilities_[n].eval(out.demand[n]);
  }
  for (const auto& line : grid_.lines) {
    double f = 0.0;
    for (std::size_t n = 0; n < m.nodes; ++n) f += line.ptdf[n] * (q[n] - out.demand[n]);
    out.flows.push_back(f);
  }
  const double tol = 1e-9 * std::max(1.0, s.qp.rhs.lpNorm<Eigen::Infinity>());
  for (int r : m.physical_rows) {
    const double slack = s.qp.rhs(r) - s.qp.rows.row(r).dot(x);
    if (s.qp.equality[static_cast<std::size_t>(r)] || std::abs(slack) <= tol)
      out.binding_set.push_back(m.row_names[static_cast<std::size_t>(r)]);
  }
  for (std::size_t n = 0; n < m.nodes; ++n)
    if (out.demand[n] <= tol) out.binding_set.push_back("demand[" + std::to_string(n + 1) + "] >= 0");
  return out;
}

double DemandModel::value(std::span<const double> q) const {
  check_quantities(q, node_count());
  const Impl& m = *impl_;
  Solved s = solve_at(m, utilities_, q);
  std::vector<double> d(m.nodes, 0.0);
  for (std::size_t v = 0; v < m.vars.size(); ++v)
    d[m.vars[v].node] += std::max(0.0, s.sol.x(static_cast<Eigen::Index>(v)));
  double u = 0.0;
  for (std::size_t n = 0; n < m.nodes; ++n)
    u += utilities_[n].eval(std::min(d[n], utilities_[n].domain_end()));
  return u;
}

namespace {

double directional_step(double qn) { return 1e-7 * (1.0 + std::abs(qn)); }

// Side::Left only makes sense away from q_n = 0.
Side effective_side(Side side, double qn) {
  return side == Side::Left && qn > 2e-6 * (1.0 + std::abs(qn)) ? Side::Left : Side::Right;
}

// Working set valid on the segment (q, q + h e_n] (or [q - h e_n, q) on the left).
std::vector<int> cell(const DemandModel::Impl& m, std::span<const PiecewiseCurve> utilities,
                      std::span<const double> q, std::size_t n, Side side) {
  std::vector<double> qp(q.begin(), q.end());
  qp[n] += (side == Side::Right ? 1.0 : -1.0) * directional_step(q[n]);
  return solve_at(m, utilities, qp).sol.working_set;
}

}  // namespace

std::vector<double> DemandModel::prices(std::span<const double> q, Side side) const {
  check_quantities(q, node_count());
  const Impl& m = *impl_;
  const auto here = m.program(q);
  std::vector<double> out(m.nodes, 0.0);
  for (std::size_t n = 0; n < m.nodes; ++n) {
    const auto ws = cell(m, utilities_, q, n, effective_side(side, q[n]));
    const Eigen::VectorXd lam = detail::working_set_multipliers(here, ws);
    double p = lam.dot(m.rhs_sensitivity.col(static_cast<Eigen::Index>(n)));
    if (p < 0.0 && p > -1e-9) p = 0.0;
    out[n] = p;
  }
  return out;
}

Eigen::MatrixXd DemandModel::jacobian(std::span<const double> q, Side side) const {
  check_quantities(q, node_count());
  const Impl& m = *impl_;
  const auto nodes = static_cast<Eigen::Index>(m.nodes);
  const auto here = m.program(q);
  Eigen::MatrixXd j(nodes, nodes);
  constexpr double kStep = 1e-6;
  std::vector<double> base;
  for (Eigen::Index b = 0; b < nodes; ++b) {
    const auto bs = static_cast<std::size_t>(b);
    const Side sd = effective_side(side, q[bs]);
    // analytic: multipliers are affine in q inside the cell along e_b
    const auto ws = cell(m, utilities_, q, bs, sd);
    const auto nv = here.variables();
    const auto w = static_cast<Eigen::Index>(ws.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nv + w, nv + w);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nv + w);
    k.topLeftCorner(nv, nv) = here.hessian.asDiagonal();
    for (Eigen::Index c = 0; c < w; ++c) {
      const int r = ws[static_cast<std::size_t>(c)];
      k.block(0, nv + c, nv, 1) = here.rows.row(r).transpose();
      k.block(nv + c, 0, 1, nv) = here.rows.row(r);
      rhs(nv + c) = m.rhs_sensitivity(r, b);
    }
    const Eigen::VectorXd sol = k.completeOrthogonalDecomposition().solve(rhs);
    Eigen::VectorXd dlam = Eigen::VectorXd::Zero(here.constraints());
    for (Eigen::Index c = 0; c < w; ++c) dlam(ws[static_cast<std::size_t>(c)]) = sol(nv + c);

    // finite-difference check from two points on the same side
    std::vector<double> near(q.begin(), q.end()), far(q.begin(), q.end());
    std::vector<double> p0, p1;
    if (sd == Side::Right) {
      near[bs] += kStep;
      if (base.empty()) base = prices(q);
      p0 = base;
      p1 = prices(near);
    } else {
      near[bs] -= kStep;
      far[bs] -= 2.0 * kStep;
      p0 = prices(far);
      p1 = prices(near);
    }
    for (Eigen::Index a = 0; a < nodes; ++a) {
      const auto as = static_cast<std::size_t>(a);
      const double analytic = dlam.dot(m.rhs_sensitivity.col(a));
      const double fd = (p1[as] - p0[as]) / kStep;
      // the other direction may sit on a cell boundary; trust the difference then
      j(a, b) = std::abs(analytic - fd) <= 1e-5 * (1.0 + std::abs(fd)) ? analytic : fd;
    }
  }
  return j;
}

DemandAllocation allocate_demand(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                 std::span<const double> q) {
  return DemandModel(grid, {utilities.begin(), utilities.end()}).allocate(q);
}

double utility_value(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                     std::span<const double> q) {
  return DemandModel(grid, {utilities.begin(), utilities.end()}).value(q);
}

std::vector<double> nodal_price(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                                std::span<const double> q) {
  return DemandModel(grid, {utilities.begin(), utilities.end()}).prices(q);
}

Eigen::MatrixXd price_jacobian(const Grid& grid, std::span<const PiecewiseCurve> utilities,
                               std::span<const double> q) {
  return DemandModel(grid, {utilities.begin(), utilities.end()}).jacobian(q);
}

}  // namespace spotmarket
