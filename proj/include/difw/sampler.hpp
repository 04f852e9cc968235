#pragma once

#include <span>
#include <vector>

namespace difw {

/// Piecewise-linear function through (x_i, y_i); x strictly increasing, n >= 2.
struct SampledFunction {
  std::vector<double> x;
  std::vector<double> y;

  SampledFunction() = default;
  SampledFunction(std::vector<double> xs, std::vector<double> ys);

  std::size_t size() const { return x.size(); }
};

/// Throws InvalidArgument unless `x` has at least two strictly increasing entries.
void check_knots(std::span<const double> x);

/// Segment of a query: value = w_lo * y[lo] + w_hi * y[lo + 1]. Queries on a knot
/// use the segment to their right (the last knot uses the last segment);
/// queries outside the knot range clamp to the end value with zero slope.
struct Segment {
  int lo = 0;
  double w_lo = 1.0;
  double w_hi = 0.0;
  bool clamped = false;
};

Segment locate(std::span<const double> x, double q);

/// Sparse derivatives of one interpolated value. The y- and x-rows have their
/// nonzeros at indices lo and lo + 1.
struct InterpGrad {
  int lo = 0;
  double d_y_lo = 0.0;
  double d_y_hi = 0.0;
  double d_query = 0.0;
  double d_x_lo = 0.0;
  double d_x_hi = 0.0;
};

double interp(std::span<const double> x, std::span<const double> y, double q);
double interp(const SampledFunction& f, double q);
InterpGrad interp_grad(std::span<const double> x, std::span<const double> y, double q);
InterpGrad interp_grad(const SampledFunction& f, double q);

/// Samples `signal` at the warped positions phi (one per knot of the signal):
/// out.y[j] = interp(signal, phi[j]) on the signal's own x grid.
SampledFunction warp_signal(const SampledFunction& signal, std::span<const double> phi);

/// One self-composition w o w of a sampled map w on `grid`, together with what
/// is needed to push derivatives through it: for any parameter p,
///   d(out[k])/dp = w_lo * dw[lo]/dp + w_hi * dw[lo + 1]/dp + slope * dw[k]/dp.
struct Composition {
  std::vector<double> values;
  std::vector<Segment> segments;
  std::vector<double> slopes;
};

Composition self_compose(std::span<const double> grid, std::span<const double> warp);

}  // namespace difw
