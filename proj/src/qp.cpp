#include "qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spotmarket::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double feasibility_tolerance(const QuadraticProgram& qp) {
  return 1e-9 * std::max(1.0, qp.rhs.size() ? qp.rhs.lpNorm<Eigen::Infinity>() : 0.0);
}

double max_violation(const QuadraticProgram& qp, const Eigen::VectorXd& x, int* worst = nullptr) {
  double v = 0.0;
  for (int r = 0; r < qp.constraints(); ++r) {
    const double d = qp.rows.row(r).dot(x) - qp.rhs(r);
    const double viol = qp.equality[r] ? std::abs(d) : std::max(0.0, d);
    if (viol > v) {
      v = viol;
      if (worst) *worst = r;
    }
  }
  return v;
}

// Greedy independent subset of the given rows.
std::vector<int> independent_rows(const Eigen::MatrixXd& rows, const std::vector<int>& candidates) {
  std::vector<int> kept;
  Eigen::MatrixXd basis(0, rows.cols());
  for (int r : candidates) {
    Eigen::MatrixXd trial(basis.rows() + 1, rows.cols());
    trial << basis, rows.row(r);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
    lu.setThreshold(1e-10);
    if (lu.rank() == trial.rows()) {
      basis = trial;
      kept.push_back(r);
    }
  }
  return kept;
}

QpSolution active_set(const QuadraticProgram& qp, Eigen::VectorXd x, std::vector<int> work) {
  const int n = qp.variables();
  const int m = qp.constraints();
  std::vector<char> in(m, 0);
  for (int w : work) in[w] = 1;
  const double gscale = 1.0 + (n ? qp.linear.lpNorm<Eigen::Infinity>() : 0.0) +
                        (n ? qp.hessian.lpNorm<Eigen::Infinity>() : 0.0) *
                            (1.0 + (n ? x.lpNorm<Eigen::Infinity>() : 0.0));
  const double gtol = 1e-11 * gscale;
  const int max_iter = 60 * (n + m) + 200;
  int zero_steps = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    const int w = static_cast<int>(work.size());
    Eigen::MatrixXd aw(w, n);
    for (int k = 0; k < w; ++k) aw.row(k) = qp.rows.row(work[k]);
    const Eigen::VectorXd grad = qp.hessian.cwiseProduct(x) + qp.linear;

    Eigen::HouseholderQR<Eigen::MatrixXd> qr;
    Eigen::MatrixXd z;
    if (w == 0) {
      z = Eigen::MatrixXd::Identity(n, n);
    } else {
      qr.compute(aw.transpose());
      const Eigen::MatrixXd q = qr.householderQ();
      z = q.rightCols(n - w);
    }

    Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
    bool ray = false;
    bool flat_face = false;
    if (z.cols() > 0) {
      const Eigen::MatrixXd h = z.transpose() * qp.hessian.asDiagonal() * z;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
      const Eigen::VectorXd& ev = es.eigenvalues();
      const Eigen::MatrixXd& v = es.eigenvectors();
      const Eigen::VectorXd coef = v.transpose() * (z.transpose() * grad);
      const double etol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
      Eigen::VectorXd nul = Eigen::VectorXd::Zero(coef.size());
      Eigen::VectorXd newton = Eigen::VectorXd::Zero(coef.size());
      for (int k = 0; k < coef.size(); ++k) {
        if (ev(k) <= etol) {
          nul(k) = coef(k);
          flat_face = true;
        } else {
          newton(k) = coef(k) / ev(k);
        }
      }
      if (nul.lpNorm<Eigen::Infinity>() > gtol) {
        p = -z * (v * nul);
        ray = true;
      } else {
        p = -z * (v * newton);
      }
    }

    const double xscale = 1.0 + (n ? x.lpNorm<Eigen::Infinity>() : 0.0);
    if (p.lpNorm<Eigen::Infinity>() <= 1e-12 * xscale) {
      Eigen::VectorXd lam = Eigen::VectorXd::Zero(w);
      if (w > 0) lam = qr.solve(-grad);
      int drop = -1;
      double worst = -gtol;
      const bool bland = zero_steps > 2 * (n + m);
      for (int k = 0; k < w; ++k) {
        if (qp.equality[work[k]]) continue;
        if (lam(k) < worst) {
          drop = k;
          if (bland) break;
          worst = lam(k);
        }
      }
      if (drop < 0) {
        QpSolution sol;
        sol.x = x;
        sol.multipliers = Eigen::VectorXd::Zero(m);
        bool strict = true;
        for (int k = 0; k < w; ++k) {
          sol.multipliers(work[k]) = lam(k);
          if (!qp.equality[work[k]] && lam(k) <= gtol) strict = false;
        }
        sol.working_set = work;
        sol.unique = strict && !flat_face;
        return sol;
      }
      in[work[drop]] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    double alpha = ray ? kInf : 1.0;
    int block = -1;
    const double pnorm = p.norm();
    for (int r = 0; r < m; ++r) {
      if (in[r]) continue;
      const double ap = qp.rows.row(r).dot(p);
      if (ap <= 1e-12 * qp.rows.row(r).norm() * pnorm) continue;
      const double slack = qp.rhs(r) - qp.rows.row(r).dot(x);
      const double t = std::max(0.0, slack) / ap;
      if (t < alpha) {
        alpha = t;
        block = r;
      }
    }
    if (!std::isfinite(alpha)) throw QpUnbounded{};
    zero_steps = alpha == 0.0 ? zero_steps + 1 : 0;
    x += alpha * p;
    if (block >= 0) {
      in[block] = 1;
      work.push_back(block);
    }
  }
  throw std::runtime_error("active-set iteration limit reached");
}

std::vector<int> equality_rows(const QuadraticProgram& qp) {
  std::vector<int> eq;
  for (int r = 0; r < qp.constraints(); ++r)
    if (qp.equality[r]) eq.push_back(r);
  return independent_rows(qp.rows, eq);
}

Eigen::VectorXd phase_one(const QuadraticProgram& qp, const Eigen::VectorXd& start) {
  const int n = qp.variables();
  const int m = qp.constraints();
  int extra = 0;
  for (int r = 0; r < m; ++r) extra += qp.equality[r] ? 2 : 1;
  QuadraticProgram aux;
  const int na = n + extra;
  aux.hessian = Eigen::VectorXd::Zero(na);
  aux.linear = Eigen::VectorXd::Zero(na);
  aux.linear.tail(extra).setOnes();
  aux.rows = Eigen::MatrixXd::Zero(m + extra, na);
  aux.rhs = Eigen::VectorXd::Zero(m + extra);
  aux.equality.assign(m + extra, 0);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(na);
  x0.head(n) = start;
  int col = n;
  for (int r = 0; r < m; ++r) {
    aux.rows.row(r).head(n) = qp.rows.row(r);
    aux.rhs(r) = qp.rhs(r);
    const double d = qp.rows.row(r).dot(start) - qp.rhs(r);
    if (qp.equality[r]) {
      aux.equality[r] = 1;
      aux.rows(r, col) = 1.0;
      aux.rows(r, col + 1) = -1.0;
      x0(col) = std::max(0.0, -d);
      x0(col + 1) = std::max(0.0, d);
      aux.rows(m + col - n, col) = -1.0;
      aux.rows(m + col - n + 1, col + 1) = -1.0;
      col += 2;
    } else {
      aux.rows(r, col) = -1.0;
      x0(col) = std::max(0.0, d);
      aux.rows(m + col - n, col) = -1.0;
      col += 1;
    }
  }
  const QpSolution s = active_set(aux, x0, equality_rows(aux));
  const double tol = feasibility_tolerance(qp);
  if (aux.objective(s.x) > tol) {
    QpInfeasible err;
    col = n;
    for (int r = 0; r < m; ++r) {
      const int width = qp.equality[r] ? 2 : 1;
      double slack = 0.0;
      for (int k = 0; k < width; ++k) slack += s.x(col + k);
      if (slack > tol) err.rows.push_back(r);
      col += width;
    }
    throw err;
  }
  return s.x.head(n);
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& qp, const Eigen::VectorXd& start) {
  Eigen::VectorXd x = start;
  if (max_violation(qp, x) > feasibility_tolerance(qp)) x = phase_one(qp, start);
  return active_set(qp, x, equality_rows(qp));
}

Eigen::VectorXd lexicographic_refine(const QuadraticProgram& qp, const QpSolution& sol,
                                     const std::vector<Eigen::VectorXd>& order) {
  if (sol.unique) return sol.x;
  const int n = qp.variables();
  const int m = qp.constraints();
  std::vector<Eigen::VectorXd> extra_rows;
  std::vector<double> extra_rhs;
  std::vector<char> extra_eq;
  for (int i = 0; i < n; ++i) {
    if (qp.hessian(i) > 0.0) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e(i) = 1.0;
      extra_rows.push_back(e);
      extra_rhs.push_back(sol.x(i));
      extra_eq.push_back(1);
    }
  }
  const double lin_tol = 1e-10 * std::max(1.0, std::abs(qp.linear.dot(sol.x)));
  extra_rows.push_back(qp.linear);
  extra_rhs.push_back(qp.linear.dot(sol.x) + lin_tol);
  extra_eq.push_back(0);

  Eigen::VectorXd x = sol.x;
  for (const auto& g : order) {
    QuadraticProgram lp;
    const int rows = m + static_cast<int>(extra_rows.size());
    lp.hessian = Eigen::VectorXd::Zero(n);
    lp.linear = g;
    lp.rows.resize(rows, n);
    lp.rhs.resize(rows);
    lp.rows.topRows(m) = qp.rows;
    lp.rhs.head(m) = qp.rhs;
    lp.equality = qp.equality;
    for (std::size_t k = 0; k < extra_rows.size(); ++k) {
      lp.rows.row(m + static_cast<int>(k)) = extra_rows[k].transpose();
      lp.rhs(m + static_cast<int>(k)) = extra_rhs[k];
      lp.equality.push_back(extra_eq[k]);
    }
    QpSolution s;
    try {
      s = solve_qp(lp, x);
    } catch (const QpInfeasible&) {
      break;  // numerical slack exhausted; keep the best point so far
    }
    x = s.x;
    const double v = g.dot(x);
    extra_rows.push_back(g);
    extra_rhs.push_back(v + 1e-12 * std::max(1.0, std::abs(v)));
    extra_eq.push_back(0);
  }
  return x;
}

Eigen::VectorXd working_set_multipliers(const QuadraticProgram& qp,
                                        const std::vector<int>& working) {
  const int n = qp.variables();
  const int w = static_cast<int>(working.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + w, n + w);
  Eigen::VectorXd rhs(n + w);
  k.topLeftCorner(n, n) = qp.hessian.asDiagonal();
  for (int j = 0; j < w; ++j) {
    k.block(0, n + j, n, 1) = qp.rows.row(working[j]).transpose();
    k.block(n + j, 0, 1, n) = qp.rows.row(working[j]);
    rhs(n + j) = qp.rhs(working[j]);
  }
  rhs.head(n) = -qp.linear;
  const Eigen::VectorXd sol = k.completeOrthogonalDecomposition().solve(rhs);
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(qp.constraints());
  for (int j = 0; j < w; ++j) lam(working[j]) = sol(n + j);
  return lam;
}

}  // namespace spotmarket::detail
