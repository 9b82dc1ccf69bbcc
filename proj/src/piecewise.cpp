#include "spotmarket/piecewise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spotmarket/errors.hpp"

namespace spotmarket {

namespace {

constexpr double kTol = PiecewiseCurve::kTolerance;

bool near(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

std::string describe(double x) {
  std::ostringstream out;
  out << x;
  return out.str();
}

}  // namespace

PiecewiseCurve::PiecewiseCurve(std::vector<Piece> pieces, double domain_end, Curvature curvature)
    : pieces_(std::move(pieces)), domain_end_(domain_end), curvature_(curvature) {
  if (pieces_.empty()) throw CurveError("curve needs at least one piece");
  if (!(domain_end_ >= 0.0)) throw CurveError("domain end must be nonnegative");
  if (std::abs(pieces_.front().start) > kTol)
    throw CurveError("first piece must start at 0, got " + describe(pieces_.front().start));
  pieces_.front().start = 0.0;
  for (const auto& p : pieces_) {
    if (!std::isfinite(p.start) || !std::isfinite(p.quadratic) || !std::isfinite(p.linear) ||
        !std::isfinite(p.constant))
      throw CurveError("non-finite piece coefficient");
  }
  for (std::size_t k = 1; k < pieces_.size(); ++k) {
    const double s = pieces_[k].start;
    if (!(s > pieces_[k - 1].start + kTol))
      throw CurveError("breakpoints must be strictly increasing at " + describe(s));
    const double left = pieces_[k - 1].value(s);
    const double right = pieces_[k].value(s);
    if (!near(left, right, kTol))
      throw CurveError("discontinuity at breakpoint " + describe(s) + ": " + describe(left) +
                       " vs " + describe(right));
  }
  if (pieces_.back().start >= domain_end_ && !(domain_end_ == 0.0 && pieces_.size() == 1))
    throw CurveError("last piece starts at or beyond the domain end");
  if (curvature_ == Curvature::Convex && !is_convex())
    throw CurveError("curve tagged convex has a decreasing marginal");
  if (curvature_ == Curvature::Concave && !is_concave())
    throw CurveError("curve tagged concave has an increasing marginal");
  normalize();
}

void PiecewiseCurve::normalize() {
  std::vector<Piece> merged;
  merged.reserve(pieces_.size());
  for (const auto& p : pieces_) {
    if (!merged.empty() && merged.back().quadratic == p.quadratic &&
        merged.back().linear == p.linear && merged.back().constant == p.constant)
      continue;
    merged.push_back(p);
  }
  pieces_ = std::move(merged);
}

bool PiecewiseCurve::is_convex() const {
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    if (pieces_[k].quadratic < -kTol) return false;
    if (k > 0) {
      const double s = pieces_[k].start;
      if (pieces_[k].slope(s) < pieces_[k - 1].slope(s) - kTol) return false;
    }
  }
  return true;
}

bool PiecewiseCurve::is_concave() const {
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    if (pieces_[k].quadratic > kTol) return false;
    if (k > 0) {
      const double s = pieces_[k].start;
      if (pieces_[k].slope(s) > pieces_[k - 1].slope(s) + kTol) return false;
    }
  }
  return true;
}

PiecewiseCurve PiecewiseCurve::zero(double domain_end, Curvature curvature) {
  return PiecewiseCurve({Piece{}}, domain_end, curvature);
}

PiecewiseCurve PiecewiseCurve::linear(double slope, double domain_end, Curvature curvature) {
  return PiecewiseCurve({Piece{0.0, 0.0, slope, 0.0}}, domain_end, curvature);
}

PiecewiseCurve PiecewiseCurve::from_marginals(std::span<const MarginalSegment> segments,
                                              double domain_end, Curvature curvature,
                                              double value_at_zero) {
  if (segments.empty()) throw CurveError("no marginal segments given");
  std::vector<Piece> pieces;
  pieces.reserve(segments.size());
  double value = value_at_zero;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& g = segments[k];
    const double s = g.start;
    Piece p;
    p.start = s;
    p.quadratic = 0.5 * g.marginal_slope;
    p.linear = g.marginal - g.marginal_slope * s;
    p.constant = value - g.marginal * s + 0.5 * g.marginal_slope * s * s;
    pieces.push_back(p);
    if (k + 1 < segments.size()) {
      const double len = segments[k + 1].start - s;
      value += g.marginal * len + 0.5 * g.marginal_slope * len * len;
    }
  }
  return PiecewiseCurve(std::move(pieces), domain_end, curvature);
}

PiecewiseCurve PiecewiseCurve::capped_quadratic_utility(double a, double b, double saturation) {
  if (a < 0.0) throw CurveError("utility curvature coefficient must be nonnegative");
  if (a == 0.0) {
    if (saturation > 0.0) {
      return PiecewiseCurve({Piece{0.0, 0.0, b, 0.0}, Piece{saturation, 0.0, 0.0, b * saturation}},
                            kInfinity, Curvature::Concave);
    }
    return PiecewiseCurve({Piece{0.0, 0.0, b, 0.0}}, kInfinity, Curvature::Concave);
  }
  const double sat = saturation < 0.0 ? b / (2.0 * a) : saturation;
  if (sat <= 0.0) return zero(kInfinity, Curvature::Concave);
  const double top = -a * sat * sat + b * sat;
  return PiecewiseCurve({Piece{0.0, -a, b, 0.0}, Piece{sat, 0.0, 0.0, top}}, kInfinity,
                        Curvature::Concave);
}

double PiecewiseCurve::clamp_argument(double x) const {
  if (std::isnan(x) || x < -kTol || x > domain_end_ + kTol * std::max(1.0, domain_end_))
    throw DomainError("argument " + describe(x) + " outside [0, " + describe(domain_end_) + "]");
  return std::clamp(x, 0.0, domain_end_);
}

std::size_t PiecewiseCurve::locate(double x) const {
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x,
                             [](double v, const Piece& p) { return v < p.start; });
  return static_cast<std::size_t>(std::distance(pieces_.begin(), it)) - 1;
}

double PiecewiseCurve::eval(double x) const {
  x = clamp_argument(x);
  return pieces_[locate(x)].value(x);
}

double PiecewiseCurve::right_derivative(double x) const {
  x = clamp_argument(x);
  return pieces_[locate(x)].slope(x);
}

double PiecewiseCurve::left_derivative(double x) const {
  x = clamp_argument(x);
  if (x == 0.0) return pieces_.front().slope(0.0);
  auto it = std::lower_bound(pieces_.begin(), pieces_.end(), x,
                             [](const Piece& p, double v) { return p.start < v; });
  return std::prev(it)->slope(x);
}

std::vector<double> PiecewiseCurve::breakpoints() const {
  std::vector<double> out;
  for (std::size_t k = 1; k < pieces_.size(); ++k) out.push_back(pieces_[k].start);
  return out;
}

std::vector<MarginalSegment> PiecewiseCurve::marginal_segments() const {
  std::vector<MarginalSegment> out;
  out.reserve(pieces_.size());
  for (const auto& p : pieces_) out.push_back({p.start, p.slope(p.start), 2.0 * p.quadratic});
  return out;
}

PiecewiseCurve PiecewiseCurve::restricted(double new_end) const {
  if (new_end > domain_end_ + kTol) throw DomainError("cannot extend a curve's domain");
  new_end = std::min(new_end, domain_end_);
  std::vector<Piece> kept;
  for (const auto& p : pieces_) {
    if (kept.empty() || p.start < new_end) kept.push_back(p);
  }
  return PiecewiseCurve(std::move(kept), new_end, curvature_);
}

PiecewiseCurve PiecewiseCurve::plus(const PiecewiseCurve& other) const {
  const double end = std::min(domain_end_, other.domain_end_);
  std::vector<double> starts;
  for (const auto& p : pieces_)
    if (p.start < end || p.start == 0.0) starts.push_back(p.start);
  for (const auto& p : other.pieces_)
    if (p.start < end || p.start == 0.0) starts.push_back(p.start);
  std::sort(starts.begin(), starts.end());
  std::vector<double> unique;
  for (double s : starts)
    if (unique.empty() || s > unique.back() + kTol) unique.push_back(s);
  std::vector<Piece> pieces;
  for (double s : unique) {
    const Piece& a = pieces_[locate(s)];
    const Piece& b = other.pieces_[other.locate(s)];
    pieces.push_back({s, a.quadratic + b.quadratic, a.linear + b.linear, a.constant + b.constant});
  }
  const Curvature c = curvature_ == other.curvature_ ? curvature_ : Curvature::Unconstrained;
  return PiecewiseCurve(std::move(pieces), end, c);
}

PiecewiseCurve PiecewiseCurve::plus_linear(double slope) const {
  auto pieces = pieces_;
  for (auto& p : pieces) p.linear += slope;
  return PiecewiseCurve(std::move(pieces), domain_end_, curvature_);
}

PiecewiseCurve PiecewiseCurve::scaled(double factor) const {
  auto pieces = pieces_;
  for (auto& p : pieces) {
    p.quadratic *= factor;
    p.linear *= factor;
    p.constant *= factor;
  }
  Curvature c = curvature_;
  if (factor < 0.0 && c == Curvature::Convex) c = Curvature::Concave;
  else if (factor < 0.0 && c == Curvature::Concave) c = Curvature::Convex;
  return PiecewiseCurve(std::move(pieces), domain_end_, c);
}

double PiecewiseCurve::max_quantity_at_marginal(double price) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(price));
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const Piece& p = pieces_[k];
    const double end = k + 1 < pieces_.size() ? pieces_[k + 1].start : domain_end_;
    if (p.slope(p.start) > price + slack) return p.start;
    if (p.quadratic > 0.0) {
      const double x = (price - p.linear) / (2.0 * p.quadratic);
      if (x < end) return std::max(x, p.start);
    }
  }
  return domain_end_;
}

double PiecewiseCurve::min_quantity_at_marginal(double price) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(price));
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    const Piece& p = pieces_[k];
    const double end = k + 1 < pieces_.size() ? pieces_[k + 1].start : domain_end_;
    if (p.slope(p.start) >= price - slack) return p.start;
    if (p.quadratic > 0.0) {
      const double x = (price - p.linear) / (2.0 * p.quadratic);
      if (x < end) return std::max(x, p.start);
    }
  }
  return domain_end_;
}

PiecewiseCurve add_marginal_offset(const PiecewiseCurve& curve, double offset) {
  if (offset < 0.0) throw std::invalid_argument("marginal offset must be nonnegative");
  if (offset == 0.0) return curve;
  return curve.plus_linear(offset);
}

// ---------------------------------------------------------------------------
// merit order

namespace {

struct Segment {
  double x0, x1, m0, slope;
  double m1() const { return m0 + slope * (x1 - x0); }
  bool flat() const { return slope <= 0.0; }
};

}  // namespace

MeritSplit merit_merge(std::span<const MeritComponent> components) {
  const std::size_t count = components.size();
  std::vector<std::vector<Segment>> segs(count);
  std::vector<double> caps(count, 0.0);
  double value_at_zero = 0.0;
  std::vector<double> crit;

  for (std::size_t c = 0; c < count; ++c) {
    const auto& comp = components[c];
    if (comp.curve.curvature() != Curvature::Convex)
      throw CurveError("merit merge needs convex components");
    if (!(comp.capacity >= 0.0) || !std::isfinite(comp.capacity))
      throw CurveError("merit merge needs finite nonnegative capacities");
    caps[c] = std::min(comp.capacity, comp.curve.domain_end());
    value_at_zero += comp.curve.eval(0.0);
    const auto pieces = comp.curve.pieces();
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      const double x0 = pieces[k].start;
      if (x0 >= caps[c]) break;
      const double x1 = k + 1 < pieces.size() ? std::min(pieces[k + 1].start, caps[c]) : caps[c];
      Segment s{x0, x1, pieces[k].slope(x0), 2.0 * pieces[k].quadratic};
      if (s.slope < 1e-15) s.slope = 0.0;
      segs[c].push_back(s);
      crit.push_back(s.m0);
      crit.push_back(s.m1());
    }
  }

  std::sort(crit.begin(), crit.end());
  std::vector<double> levels;
  for (double v : crit)
    if (levels.empty() || !near(v, levels.back(), 1e-12)) levels.push_back(v);

  auto same = [](double a, double b) { return near(a, b, 1e-12); };

  std::vector<MarginalSegment> agg;
  std::vector<MeritSplit::Segment> table;
  std::vector<double> alloc(count, 0.0);
  double total = 0.0;

  auto push_marginal = [&](double start, double marginal, double slope) {
    if (!agg.empty()) {
      const auto& b = agg.back();
      if (b.marginal_slope == slope &&
          same(b.marginal + b.marginal_slope * (start - b.start), marginal))
        return;
    }
    agg.push_back({start, marginal, slope});
  };

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const double lambda = levels[li];
    for (std::size_t c = 0; c < count; ++c) {
      for (const auto& s : segs[c]) {
        if (!s.flat() || !same(s.m0, lambda) || s.x1 <= s.x0) continue;
        const double len = s.x1 - s.x0;
        MeritSplit::Segment row{total, total + len, alloc, std::vector<double>(count, 0.0)};
        row.rate[c] = 1.0;
        table.push_back(std::move(row));
        push_marginal(total, lambda, 0.0);
        alloc[c] = s.x1;
        total += len;
      }
    }
    if (li + 1 == levels.size()) break;
    const double next = levels[li + 1];
    double r = 0.0;
    std::vector<double> speed(count, 0.0);
    for (std::size_t c = 0; c < count; ++c) {
      for (const auto& s : segs[c]) {
        if (s.flat()) continue;
        if (s.m0 <= lambda + 1e-12 * std::max(1.0, std::abs(lambda)) &&
            s.m1() >= next - 1e-12 * std::max(1.0, std::abs(next))) {
          speed[c] = 1.0 / s.slope;
          r += speed[c];
          break;
        }
      }
    }
    if (r <= 0.0) continue;
    const double len = r * (next - lambda);
    MeritSplit::Segment row{total, total + len, alloc, std::vector<double>(count, 0.0)};
    for (std::size_t c = 0; c < count; ++c) {
      row.rate[c] = speed[c] / r;
      alloc[c] += speed[c] * (next - lambda);
    }
    table.push_back(std::move(row));
    push_marginal(total, lambda, 1.0 / r);
    total += len;
  }

  if (agg.empty()) agg.push_back({0.0, levels.empty() ? 0.0 : levels.front(), 0.0});
  PiecewiseCurve aggregate =
      PiecewiseCurve::from_marginals(agg, total, Curvature::Convex, value_at_zero);
  return MeritSplit(std::move(aggregate), std::move(table), std::move(caps));
}

std::vector<double> MeritSplit::disaggregate(double total) const {
  const double cap = capacity();
  if (std::isnan(total) || total < -PiecewiseCurve::kTolerance ||
      total > cap + PiecewiseCurve::kTolerance * std::max(1.0, cap))
    throw DomainError("total " + describe(total) + " outside merged capacity " + describe(cap));
  total = std::clamp(total, 0.0, cap);
  std::vector<double> out(capacities_.size(), 0.0);
  if (segments_.empty()) return out;
  auto it = std::upper_bound(segments_.begin(), segments_.end(), total,
                             [](double v, const Segment& s) { return v < s.end; });
  const Segment& s = it == segments_.end() ? segments_.back() : *it;
  const double t = std::min(total, s.end) - s.start;
  for (std::size_t c = 0; c < out.size(); ++c)
    out[c] = std::clamp(s.base[c] + s.rate[c] * t, 0.0, capacities_[c]);
  return out;
}

std::vector<double> disaggregate(const MeritSplit& split, double total) {
  return split.disaggregate(total);
}

}  // namespace spotmarket
