#pragma once

// Numerically stable pieces of the per-cell affine flow
//   psi(x, t) = x e^{ta} + (e^{ta} - 1) b / a
// and its hitting time, shared by the integrator and the gradient.

#include <cmath>
#include <limits>

#include "difw/integrator.hpp"

namespace difw::detail {

/// Slopes at or below the threshold are treated as exactly zero.
inline double effective_slope(double a) { return std::abs(a) <= kSlopeThreshold ? 0.0 : a; }

/// Below this |z| exprel uses its Taylor polynomial.
inline constexpr double kExprelSeries = 1e-5;

inline double exprel_series(double z) { return 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)); }

/// (e^z - 1) / z, equal to 1 at z = 0.
inline double exprel(double z) {
  if (std::abs(z) < kExprelSeries) return exprel_series(z);
  return std::expm1(z) / z;
}

/// d/dz exprel(z) = (z e^z - e^z + 1) / z^2, equal to 1/2 at z = 0.
inline double exprel_derivative(double z) {
  if (std::abs(z) < 0.5) {
    // sum_{n>=0} z^n (n + 1) / (n + 2)!
    double term = 0.5;  // (n + 1) / (n + 2)! at n = 0
    double factorial = 2.0;
    double power = 1.0;
    double sum = 0.0;
    for (int n = 0; n < 30; ++n) {
      term = (n + 1) / factorial;
      const double add = term * power;
      sum += add;
      if (std::abs(add) < 1e-18 * std::abs(sum)) break;
      power *= z;
      factorial *= n + 3;
    }
    return sum;
  }
  return (z * std::exp(z) - std::expm1(z)) / (z * z);
}

/// (r / (1 + r) - log1p(r)) / r^2, equal to -1/2 at r = 0.
inline double log_ratio_curvature(double r) {
  if (std::abs(r) < 0.1) {
    // sum_{n>=0} (-1)^{n+1} (n + 1) / (n + 2) r^n
    double sum = 0.0;
    double power = 1.0;
    for (int n = 0; n < 60; ++n) {
      const double add = ((n % 2 == 0) ? -1.0 : 1.0) * (n + 1.0) / (n + 2.0) * power;
      sum += add;
      if (std::abs(add) < 1e-18) break;
      power *= r;
    }
    return sum;
  }
  return (r / (1.0 + r) - std::log1p(r)) / (r * r);
}

/// Closed-form flow inside one cell; `a` must already be an effective slope.
inline double cell_flow(double a, double b, double x, double t) {
  const double v = a * x + b;
  if (a == 0.0) return x + t * b;
  return x + v * t * exprel(t * a);
}

/// Time for the in-cell flow from x to reach x_c; +inf if it never does.
/// `a` must already be an effective slope.
inline double cell_hitting_time(double a, double b, double x, double xc) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double v = a * x + b;
  const double u = xc - x;
  if (v == 0.0) return u == 0.0 ? 0.0 : inf;
  if (u == 0.0) return 0.0;
  if ((u > 0.0) != (v > 0.0)) return inf;
  if (a == 0.0) return u / b;
  const double r = a * u / v;  // (a x_c + b) / (a x + b) - 1
  if (r <= -1.0) return inf;
  return std::log1p(r) / a;
}

struct HitTimePartials {
  double d_slope = 0.0;
  double d_intercept = 0.0;
};

/// d t_hit / d a and d t_hit / d b, written in terms of u = x_c - x and the
/// velocities at both ends so that the a -> 0 limit is approached smoothly.
inline HitTimePartials cell_hitting_time_partials(double a, double b, double x, double xc) {
  const double u = xc - x;
  if (u == 0.0) return {};
  const double v = a * x + b;
  const double vc = a * xc + b;
  const double r = a == 0.0 ? 0.0 : a * u / v;
  HitTimePartials p;
  p.d_intercept = -u / (v * vc);
  p.d_slope = log_ratio_curvature(r) * (u / v) * (u / v) - x * u / (v * vc);
  return p;
}

}  // namespace difw::detail
