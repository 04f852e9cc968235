#include "difw/gradient.hpp"

#include <cmath>
#include <string>

#include "difw/error.hpp"
#include "difw/parallel.hpp"
#include "difw/sampler.hpp"
#include "flow_math.hpp"

namespace difw {

namespace {

void check_trace(const CpaBasis& basis, const AffineField& field, const TraversalTrace& trace) {
  const int n = basis.n_cells();
  if (field.n_cells() != n) {
    throw InvalidArgument("field has " + std::to_string(field.n_cells()) + " cells, basis has " +
                          std::to_string(n));
  }
  if (trace.first_cell < 0 || trace.first_cell >= n || trace.final_cell() < 0 ||
      trace.final_cell() >= n) {
    throw InvalidArgument("trace visits cells outside the tessellation");
  }
}

// Writes the gradient row using Bt = B^T (column 2c holds d a_c / d theta).
void grad_row(const Eigen::MatrixXd& bt, const Tessellation& tess, const AffineField& field,
              const TraversalTrace& trace, double* out) {
  const int d = static_cast<int>(bt.rows());
  Eigen::Map<Eigen::VectorXd> row(out, d);
  row.setZero();
  if (trace.pinned) return;

  const int cm = trace.final_cell();
  const double a = detail::effective_slope(field.slope(cm));
  const double b = field.intercept(cm);
  const double x = trace.x_final;
  const double t = trace.t_final;
  const double z = t * a;
  const double ez = std::exp(z);
  const double d_slope = t * ez * x + b * t * t * detail::exprel_derivative(z);
  const double d_intercept = t * detail::exprel(z);
  const double d_time = ez * (a * x + b);

  row.noalias() += d_slope * bt.col(2 * cm) + d_intercept * bt.col(2 * cm + 1);

  // Each crossed cell shortens the remaining time by its hitting time.
  const int n_hits = static_cast<int>(trace.hit_times.size());
  for (int i = 0; i < n_hits; ++i) {
    const int c = trace.visited_cell(i);
    const double ac = detail::effective_slope(field.slope(c));
    const double bc = field.intercept(c);
    const double xi = trace.entry_point(tess, i);
    const double xc = trace.direction > 0 ? tess.upper(c) : tess.lower(c);
    const detail::HitTimePartials p = detail::cell_hitting_time_partials(ac, bc, xi, xc);
    row.noalias() -= d_time * (p.d_slope * bt.col(2 * c) + p.d_intercept * bt.col(2 * c + 1));
  }
}

}  // namespace

std::vector<double> grad_point(const CpaBasis& basis, const AffineField& field,
                               const TraversalTrace& trace) {
  check_trace(basis, field, trace);
  const Eigen::MatrixXd bt = basis.matrix().transpose();
  std::vector<double> row(basis.dim());
  grad_row(bt, basis.tessellation(), field, trace, row.data());
  return row;
}

GradientMatrix grad_grid(const CpaBasis& basis, const AffineField& field, const WarpResult& result,
                         int threads) {
  const Eigen::MatrixXd bt = basis.matrix().transpose();
  GradientMatrix g(static_cast<Eigen::Index>(result.traces.size()), basis.dim());
  parallel_for(result.traces.size(), threads, [&](std::size_t p) {
    check_trace(basis, field, result.traces[p]);
    grad_row(bt, basis.tessellation(), field, result.traces[p],
             g.data() + p * static_cast<std::size_t>(basis.dim()));
  });
  return g;
}

SquaredWarp scaling_squaring_with_grad(const CpaBasis& basis, const AffineField& field,
                                       std::span<const double> grid, double t, int n_squarings,
                                       int threads) {
  if (grid.empty()) throw InvalidArgument("scaling and squaring needs a nonempty grid");
  if (n_squarings < 0) throw InvalidArgument("number of squarings must be nonnegative");
  const WarpResult base = integrate_grid(basis.tessellation(), field, grid,
                                         std::ldexp(t, -n_squarings), threads);
  SquaredWarp out{base.phi, grad_grid(basis, field, base, threads)};
  GradientMatrix next(out.jacobian.rows(), out.jacobian.cols());
  for (int i = 0; i < n_squarings; ++i) {
    const Composition comp = self_compose(grid, out.values);
    for (Eigen::Index k = 0; k < next.rows(); ++k) {
      const Segment& s = comp.segments[k];
      next.row(k) = s.w_lo * out.jacobian.row(s.lo) + s.w_hi * out.jacobian.row(s.lo + 1) +
                    comp.slopes[k] * out.jacobian.row(k);
    }
    out.jacobian.swap(next);
    out.values = comp.values;
  }
  return out;
}

GradientMatrix grad_scaling_squaring(const CpaBasis& basis, const AffineField& field,
                                     std::span<const double> grid, double t, int n_squarings,
                                     int threads) {
  return scaling_squaring_with_grad(basis, field, grid, t, n_squarings, threads).jacobian;
}

}  // namespace difw
