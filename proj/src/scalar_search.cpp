#include "scalar_search.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace spotmarket::detail {

namespace {

constexpr double kSlopeTol = 1e-9;
constexpr int kGrid = 16;

// sup{x in [a, b] : slope(x) >= -tol} given slope(a) >= -tol > slope(b)
double refine(const std::function<double(double)>& slope, double a, double fa, double b,
              double fb) {
  for (int it = 0; it < 300; ++it) {
    if (b - a <= 1e-14 * std::max(1.0, std::abs(b))) return b;
    const double r = a + fa / (fa - fb) * (b - a);
    if (r > a && r < b) {
      const double fr = slope(r);
      if (std::abs(fr) <= kSlopeTol) {
        const double probe = r + std::max(1e-6 * (b - r), 1e-13 * std::max(1.0, std::abs(r)));
        if (probe >= b) return r;
        const double fp = slope(probe);
        if (fp < -kSlopeTol) return r;
        a = probe;
        fa = fp;
        continue;
      }
      if (fr > 0.0) {
        a = r;
        fa = fr;
      } else {
        b = r;
        fb = fr;
      }
    }
    const double m = 0.5 * (a + b);
    const double fm = slope(m);
    if (fm >= -kSlopeTol) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  return b;
}

}  // namespace

double maximize_scalar(const ScalarObjective& f, double lo, double hi,
                       std::span<const double> hints, bool concave) {
  if (!(hi > lo)) return lo;
  std::vector<double> pts{lo, hi};
  for (double h : hints)
    if (h > lo && h < hi) pts.push_back(h);
  if (!concave)
    for (int k = 1; k < kGrid; ++k) pts.push_back(lo + (hi - lo) * k / kGrid);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  // slope just left of hi stands in for the (undefined) right-derivative there
  const double edge = hi - std::max(1e-10 * (hi - lo), 1e-13 * std::max(1.0, std::abs(hi)));
  std::vector<double> slopes(pts.size());
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) slopes[k] = f.slope(pts[k]);
  slopes.back() = f.slope(std::max(edge, pts[pts.size() - 2]));

  if (concave) {
    if (slopes[0] < -kSlopeTol) return lo;
    for (std::size_t k = 1; k < pts.size(); ++k)
      if (slopes[k] < -kSlopeTol) return refine(f.slope, pts[k - 1], slopes[k - 1], pts[k], slopes[k]);
    return hi;
  }

  std::vector<double> candidates{lo};
  for (std::size_t k = 1; k < pts.size(); ++k)
    if (slopes[k - 1] >= -kSlopeTol && slopes[k] < -kSlopeTol)
      candidates.push_back(refine(f.slope, pts[k - 1], slopes[k - 1], pts[k], slopes[k]));
  if (slopes.back() >= -kSlopeTol) candidates.push_back(hi);

  double best_x = lo;
  double best = f.value(lo);
  for (double x : candidates) {
    const double v = f.value(x);
    const double tie = 1e-10 * std::max(1.0, std::abs(best));
    if (v > best + tie || (std::abs(v - best) <= tie && x > best_x)) {
      best = v;
      best_x = x;
    }
  }
  return best_x;
}

}  // namespace spotmarket::detail
