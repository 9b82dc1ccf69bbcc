#pragma once

// Independent test-side references.  Nothing here calls the library's
// solvers; closed forms and grids only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace oracle {

// Worked two-node example: U1(d) = -d^2 + 44d up to 22 then 484, U2(d) = 6d,
// one line with ptdf (1, 0) and capacity 5.
inline double u1(double d) { return d <= 22.0 ? -d * d + 44.0 * d : 484.0; }
inline double u2(double d) { return 6.0 * d; }

inline double example_best_d1(double q1, double q2) {
  const double total = q1 + q2;
  const double lo = std::max(0.0, q1 - 5.0);
  const double hi = std::min(total, q1 + 5.0);
  return std::clamp(19.0, lo, hi);  // U1' = 6 at d1 = 19
}

inline double example_utility(double q1, double q2) {
  const double d1 = example_best_d1(q1, q2);
  return u1(d1) + u2(q1 + q2 - d1);
}

// Demand-grid maximum for the same example.
inline double example_utility_grid(double q1, double q2, double step) {
  const double total = q1 + q2;
  double best = -std::numeric_limits<double>::infinity();
  for (double d1 = 0.0; d1 <= total + 1e-12; d1 += step) {
    const double flow = q1 - d1;
    if (std::abs(flow) > 5.0 + 1e-12) continue;
    best = std::max(best, u1(d1) + u2(total - d1));
  }
  return best;
}

// Golden-section maximum of a concave function on [lo, hi].
inline double concave_max(const std::function<double(double)>& f, double lo, double hi,
                          double* arg = nullptr) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-12; ++i) {
    if (fc < fd) {
      a = c; c = d; fc = fd; d = a + r * (b - a); fd = f(d);
    } else {
      b = d; d = c; fd = fc; c = b - r * (b - a); fc = f(c);
    }
  }
  double x = 0.5 * (a + b);
  double best = f(x);
  for (double e : {lo, hi})
    if (f(e) > best) { best = f(e); x = e; }
  if (arg) *arg = x;
  return best;
}

// Single node, U = -a d^2 + b d (flat past b/2a), units with marginal
// c_k + s_k q on [0, cap_k] (c_k already carrying any damage).  Finds the
// clearing price by bisection and returns unit outputs.
struct AffineMarginal {
  double c, s, cap;
};

inline std::vector<double> water_fill(double a, double b, const std::vector<AffineMarginal>& units) {
  auto supply = [&](double p) {
    double q = 0.0;
    for (const auto& u : units) q += std::clamp((p - u.c) / u.s, 0.0, u.cap);
    return q;
  };
  auto demand = [&](double p) { return std::max(0.0, (b - p) / (2.0 * a)); };
  double lo = 0.0, hi = b;
  if (supply(0.0) >= demand(0.0)) hi = 0.0;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (supply(mid) < demand(mid)) lo = mid;
    else hi = mid;
  }
  std::vector<double> q;
  for (const auto& u : units) q.push_back(std::clamp((hi - u.c) / u.s, 0.0, u.cap));
  return q;
}

inline double quad_utility(double a, double b, double d) {
  const double sat = b / (2.0 * a);
  const double x = std::min(d, sat);
  return -a * x * x + b * x;
}

// Exhaustive maximum of f over the product grid {0, step, ..} x .. within caps.
inline double grid_max(const std::vector<double>& caps, double step,
                       const std::function<double(const std::vector<double>&)>& f,
                       std::vector<double>* arg = nullptr) {
  std::vector<int> n;
  for (double c : caps) n.push_back(static_cast<int>(std::floor(c / step + 1e-9)));
  std::vector<int> idx(caps.size(), 0);
  std::vector<double> q(caps.size());
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::min(caps[k], idx[k] * step);
    const double v = f(q);
    if (v > best) {
      best = v;
      if (arg) *arg = q;
    }
    std::size_t k = 0;
    for (; k < idx.size(); ++k) {
      if (idx[k] < n[k]) {
        ++idx[k];
        break;
      }
      idx[k] = 0;
    }
    if (k == idx.size()) break;
  }
  return best;
}

// Two nodes joined by one line (ptdf (1, 0), limit L): best demand split.
inline double two_node_utility(const std::function<double(double)>& u1,
                               const std::function<double(double)>& u2, double L, double q1,
                               double q2) {
  const double total = q1 + q2;
  const double lo = std::max(0.0, q1 - L), hi = std::min(total, q1 + L);
  return concave_max([&](double d1) { return u1(d1) + u2(total - d1); }, lo, hi);
}

}  // namespace oracle
