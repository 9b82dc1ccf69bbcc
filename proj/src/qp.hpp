#pragma once

// Small dense convex QP with diagonal PSD Hessian:
//   min 0.5 x'Gx + c'x   s.t.  A x <= b  (rows flagged equal are A x = b)
// Primal active-set with null-space steps; zero-curvature directions are
// followed as rays, so G may be singular (LPs included).

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace spotmarket::detail {

struct QuadraticProgram {
  Eigen::VectorXd hessian;  // diagonal, >= 0
  Eigen::VectorXd linear;
  Eigen::MatrixXd rows;
  Eigen::VectorXd rhs;
  std::vector<char> equality;

  int variables() const { return static_cast<int>(linear.size()); }
  int constraints() const { return static_cast<int>(rhs.size()); }
  double objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(hessian.cwiseProduct(x)) + linear.dot(x);
  }
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd multipliers;  // one per row, zero off the working set
  std::vector<int> working_set;
  bool unique = true;
};

struct QpInfeasible {
  std::vector<int> rows;
};

struct QpUnbounded {};

// Throws QpInfeasible / QpUnbounded.  `start` need not be feasible.
QpSolution solve_qp(const QuadraticProgram& qp, const Eigen::VectorXd& start);

// Among optimal points of a solved program, the lexicographically smallest
// value of (g_0'x, g_1'x, ...).
Eigen::VectorXd lexicographic_refine(const QuadraticProgram& qp, const QpSolution& sol,
                                     const std::vector<Eigen::VectorXd>& order);

// Multipliers of the equality-constrained subproblem on `working` at the
// program's current rhs.
Eigen::VectorXd working_set_multipliers(const QuadraticProgram& qp,
                                        const std::vector<int>& working);

}  // namespace spotmarket::detail
