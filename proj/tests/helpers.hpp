#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "difw/basis.hpp"
#include "difw/tessellation.hpp"

namespace difw::testing {

/// Two cells on [0, 1] with (a, b) = (1, 0) and (-1, 1): the zero-boundary
/// basis vector at theta = [1].
inline AffineField tent_field() { return AffineField(std::vector<double>{1.0, 0.0, -1.0, 1.0}); }

inline std::vector<double> random_theta(int d, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> theta(d);
  for (double& v : theta) v = normal(rng);
  return theta;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  if (n > 1) out.back() = b;
  return out;
}

}  // namespace difw::testing
