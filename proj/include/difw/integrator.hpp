#pragma once

#include <span>
#include <vector>

#include "difw/basis.hpp"
#include "difw/tessellation.hpp"

namespace difw {

/// Slopes with |a| at or below this value use the a -> 0 limit formulas.
inline constexpr double kSlopeThreshold = 1e-10;

/// Record of the cells crossed while integrating one point.
///
/// Cells are visited monotonically: visited_cell(i) = first_cell + i * direction.
/// hit_times[i] is the time spent crossing visited_cell(i); the flow then runs
/// for t_final inside the last visited cell starting from x_final.
struct TraversalTrace {
  int first_cell = 0;
  int direction = 0;  // +1, -1, or 0 for a point that never moves
  std::vector<double> hit_times;
  double x_start = 0.0;
  double t_start = 0.0;
  double x_final = 0.0;
  double t_final = 0.0;
  /// The trajectory reaches a domain edge with outward velocity while crossing
  /// the last visited cell, and stays on the edge.
  bool pinned = false;

  int n_visited() const { return static_cast<int>(hit_times.size()) + 1; }
  int visited_cell(int i) const { return first_cell + i * direction; }
  int final_cell() const { return visited_cell(n_visited() - 1); }
  /// Point at which the trajectory enters visited_cell(i).
  double entry_point(const Tessellation& tess, int i) const;
};

struct WarpResult {
  std::vector<double> phi;
  std::vector<TraversalTrace> traces;
};

/// a_c x + b_c with c = cell_index(x).
double velocity_at(const AffineField& field, const Tessellation& tess, double x);

/// Time for the affine flow dx/dt = a x + b started at x to reach x_c.
/// +inf when the velocity is zero or never carries x to x_c.
double hitting_time(double a, double b, double x, double x_c);

/// Flow of the CPA field from x for time t (t >= 0).
double integrate(const Tessellation& tess, const AffineField& field, double x, double t);
double integrate(const Tessellation& tess, const AffineField& field, double x, double t,
                 TraversalTrace& trace);

/// Pointwise integrate over `points`, keeping the traces for the gradient.
WarpResult integrate_grid(const Tessellation& tess, const AffineField& field,
                          std::span<const double> points, double t, int threads = 1);

/// Same values as integrate_grid without storing traces.
std::vector<double> transform_points(const Tessellation& tess, const AffineField& field,
                                     std::span<const double> points, double t, int threads = 1);

/// Integrates to t / 2^n_squarings on `grid`, then self-composes the sampled
/// map n_squarings times by linear interpolation on the same grid.
std::vector<double> scaling_squaring(const Tessellation& tess, const AffineField& field,
                                     std::span<const double> grid, double t, int n_squarings,
                                     int threads = 1);

}  // namespace difw
