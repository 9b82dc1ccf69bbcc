#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace spotmarket {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Unconstrained is only produced for diagnostic curves (declared costs whose
// markup drops across network branches); inputs are always convex or concave.
enum class Curvature { Convex, Concave, Unconstrained };

// value(x) = quadratic*x^2 + linear*x + constant on [start, next start)
struct Piece {
  double start = 0.0;
  double quadratic = 0.0;
  double linear = 0.0;
  double constant = 0.0;

  double value(double x) const { return (quadratic * x + linear) * x + constant; }
  double slope(double x) const { return 2.0 * quadratic * x + linear; }
  bool operator==(const Piece&) const = default;
};

// Marginal description of a piece: marginal(x) = marginal + marginal_slope*(x - start).
struct MarginalSegment {
  double start = 0.0;
  double marginal = 0.0;
  double marginal_slope = 0.0;
};

class PiecewiseCurve {
 public:
  static constexpr double kTolerance = 1e-9;

  PiecewiseCurve(std::vector<Piece> pieces, double domain_end, Curvature curvature);

  static PiecewiseCurve zero(double domain_end = kInfinity,
                             Curvature curvature = Curvature::Convex);
  static PiecewiseCurve linear(double slope, double domain_end,
                               Curvature curvature = Curvature::Convex);
  static PiecewiseCurve from_marginals(std::span<const MarginalSegment> segments,
                                       double domain_end, Curvature curvature,
                                       double value_at_zero = 0.0);
  // -a d^2 + b d up to the saturation point, flat afterwards.  Saturation
  // defaults to b/(2a), where the marginal reaches zero.
  static PiecewiseCurve capped_quadratic_utility(double a, double b, double saturation = -1.0);

  double eval(double x) const;
  double operator()(double x) const { return eval(x); }
  double right_derivative(double x) const;
  double left_derivative(double x) const;

  double domain_end() const { return domain_end_; }
  bool bounded() const { return domain_end_ < kInfinity; }
  Curvature curvature() const { return curvature_; }
  std::span<const Piece> pieces() const { return pieces_; }
  std::vector<double> breakpoints() const;  // interior piece starts
  std::vector<MarginalSegment> marginal_segments() const;

  PiecewiseCurve restricted(double new_end) const;
  PiecewiseCurve plus(const PiecewiseCurve& other) const;
  PiecewiseCurve plus_linear(double slope) const;
  PiecewiseCurve scaled(double factor) const;

  // sup{x : right_derivative(x) <= price}; 0 when the marginal at 0 is
  // already above the price, domain_end when it never is.
  double max_quantity_at_marginal(double price) const;
  // inf{x : right_derivative(x) >= price}; domain_end when never reached.
  double min_quantity_at_marginal(double price) const;

  bool is_convex() const;
  bool is_concave() const;

  bool operator==(const PiecewiseCurve&) const = default;

 private:
  std::size_t locate(double x) const;
  double clamp_argument(double x) const;
  void normalize();

  std::vector<Piece> pieces_;
  double domain_end_;
  Curvature curvature_;
};

PiecewiseCurve add_marginal_offset(const PiecewiseCurve& curve, double offset);

struct MeritComponent {
  PiecewiseCurve curve;
  double capacity = 0.0;
};

class MeritSplit {
 public:
  const PiecewiseCurve& aggregate() const { return aggregate_; }
  std::size_t component_count() const { return capacities_.size(); }
  double capacity() const { return aggregate_.domain_end(); }
  std::span<const double> component_capacities() const { return capacities_; }
  std::vector<double> disaggregate(double total) const;

 private:
  friend MeritSplit merit_merge(std::span<const MeritComponent> components);

  struct Segment {
    double start = 0.0;
    double end = 0.0;
    std::vector<double> base;
    std::vector<double> rate;
  };

  MeritSplit(PiecewiseCurve aggregate, std::vector<Segment> segments,
             std::vector<double> capacities)
      : aggregate_(std::move(aggregate)),
        segments_(std::move(segments)),
        capacities_(std::move(capacities)) {}

  PiecewiseCurve aggregate_;
  std::vector<Segment> segments_;
  std::vector<double> capacities_;
};

// Infimal convolution under capacity boxes.  Equal marginals are dispatched
// in component order, so callers list components by (producer, unit).
MeritSplit merit_merge(std::span<const MeritComponent> components);
std::vector<double> disaggregate(const MeritSplit& split, double total);

}  // namespace spotmarket
