#include "difw/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "difw/error.hpp"

namespace difw {

SampledFunction::SampledFunction(std::vector<double> xs, std::vector<double> ys)
    : x(std::move(xs)), y(std::move(ys)) {
  check_knots(x);
  if (x.size() != y.size()) {
    throw InvalidArgument("sampled function has " + std::to_string(x.size()) + " inputs but " +
                          std::to_string(y.size()) + " outputs");
  }
}

void check_knots(std::span<const double> x) {
  if (x.size() < 2) throw InvalidArgument("interpolation needs at least two knots");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) {
      throw InvalidArgument("knots must be strictly increasing (index " + std::to_string(i) + ")");
    }
  }
}

Segment locate(std::span<const double> x, double q) {
  const int n = static_cast<int>(x.size());
  Segment s;
  if (std::isnan(q)) throw NumericError("interpolation query is NaN");
  if (q < x[0]) {
    s.clamped = true;
    return s;
  }
  if (q > x[n - 1]) {
    s.lo = n - 2;
    s.w_lo = 0.0;
    s.w_hi = 1.0;
    s.clamped = true;
    return s;
  }
  // Guess from the mean spacing (exact for regular grids), then fix up.
  int lo = static_cast<int>((q - x[0]) / (x[n - 1] - x[0]) * (n - 1));
  lo = std::clamp(lo, 0, n - 2);
  int steps = 0;
  while (lo > 0 && q < x[lo] && steps < 2) --lo, ++steps;
  while (lo < n - 2 && q >= x[lo + 1] && steps < 4) ++lo, ++steps;
  if (q < x[lo] || (lo < n - 2 && q >= x[lo + 1])) {
    lo = static_cast<int>(std::upper_bound(x.begin(), x.end(), q) - x.begin()) - 1;
    lo = std::clamp(lo, 0, n - 2);
  }
  const double width = x[lo + 1] - x[lo];
  s.lo = lo;
  s.w_hi = (q - x[lo]) / width;
  s.w_lo = (x[lo + 1] - q) / width;
  return s;
}

double interp(std::span<const double> x, std::span<const double> y, double q) {
  const Segment s = locate(x, q);
  return s.w_lo * y[s.lo] + s.w_hi * y[s.lo + 1];
}

double interp(const SampledFunction& f, double q) { return interp(f.x, f.y, q); }

InterpGrad interp_grad(std::span<const double> x, std::span<const double> y, double q) {
  const Segment s = locate(x, q);
  InterpGrad g;
  g.lo = s.lo;
  g.d_y_lo = s.w_lo;
  g.d_y_hi = s.w_hi;
  if (s.clamped) return g;
  const double x_lo = x[s.lo];
  const double x_hi = x[s.lo + 1];
  const double width = x_hi - x_lo;
  const double dy = y[s.lo + 1] - y[s.lo];
  g.d_query = dy / width;
  g.d_x_lo = -dy * (x_hi - q) / (width * width);
  g.d_x_hi = -dy * (q - x_lo) / (width * width);
  return g;
}

InterpGrad interp_grad(const SampledFunction& f, double q) { return interp_grad(f.x, f.y, q); }

SampledFunction warp_signal(const SampledFunction& signal, std::span<const double> phi) {
  if (phi.size() != signal.size()) {
    throw InvalidArgument("warp has " + std::to_string(phi.size()) + " points, signal has " +
                          std::to_string(signal.size()));
  }
  SampledFunction out;
  out.x = signal.x;
  out.y.resize(phi.size());
  for (std::size_t j = 0; j < phi.size(); ++j) out.y[j] = interp(signal, phi[j]);
  return out;
}

Composition self_compose(std::span<const double> grid, std::span<const double> warp) {
  check_knots(grid);
  if (warp.size() != grid.size()) {
    throw InvalidArgument("warp has " + std::to_string(warp.size()) + " values, grid has " +
                          std::to_string(grid.size()));
  }
  for (std::size_t k = 1; k < warp.size(); ++k) {
    if (warp[k] < warp[k - 1]) {
      throw InvalidArgument("self-composition needs a monotone warp (decreases at index " +
                            std::to_string(k) + ")");
    }
  }
  Composition out;
  const std::size_t n = grid.size();
  out.values.resize(n);
  out.segments.resize(n);
  out.slopes.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Segment s = locate(grid, warp[k]);
    out.segments[k] = s;
    out.slopes[k] = s.clamped ? 0.0
                              : (warp[s.lo + 1] - warp[s.lo]) / (grid[s.lo + 1] - grid[s.lo]);
    out.values[k] = s.w_lo * warp[s.lo] + s.w_hi * warp[s.lo + 1];
  }
  return out;
}

}  // namespace difw
