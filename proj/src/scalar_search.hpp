#pragma once

#include <functional>
#include <span>

namespace spotmarket::detail {

struct ScalarObjective {
  std::function<double(double)> slope;  // right-derivative of the objective
  std::function<double(double)> value;  // only needed when not concave
};

// Largest maximizer of a piecewise-smooth objective on [lo, hi].  Slopes are
// evaluated at hints (known kinks) and, for non-concave objectives, on a
// uniform grid; sign changes are refined by secant steps on the affine
// piece with bisection as a safeguard.
double maximize_scalar(const ScalarObjective& f, double lo, double hi,
                       std::span<const double> hints, bool concave);

}  // namespace spotmarket::detail
