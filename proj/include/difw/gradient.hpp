#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "difw/basis.hpp"
#include "difw/integrator.hpp"

namespace difw {

/// Row p holds d phi(x_p, t) / d theta.
using GradientMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact d phi / d theta for one point from its traversal trace.
std::vector<double> grad_point(const CpaBasis& basis, const AffineField& field,
                               const TraversalTrace& trace);

GradientMatrix grad_grid(const CpaBasis& basis, const AffineField& field, const WarpResult& result,
                         int threads = 1);

struct SquaredWarp {
  std::vector<double> values;
  GradientMatrix jacobian;
};

/// scaling_squaring together with the gradient of the squared map.
SquaredWarp scaling_squaring_with_grad(const CpaBasis& basis, const AffineField& field,
                                       std::span<const double> grid, double t, int n_squarings,
                                       int threads = 1);

GradientMatrix grad_scaling_squaring(const CpaBasis& basis, const AffineField& field,
                                     std::span<const double> grid, double t, int n_squarings,
                                     int threads = 1);

}  // namespace difw
