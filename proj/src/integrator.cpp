#include "difw/integrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "difw/error.hpp"
#include "difw/parallel.hpp"
#include "difw/sampler.hpp"
#include "flow_math.hpp"
#include "vecmath.hpp"

namespace difw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_field(const Tessellation& tess, const AffineField& field) {
  if (field.n_cells() != tess.n_cells()) {
    throw InvalidArgument("field has " + std::to_string(field.n_cells()) +
                          " cells, tessellation has " + std::to_string(tess.n_cells()));
  }
}

void check_inputs(const Tessellation& tess, std::span<const double> points, double t) {
  if (!(t >= 0.0)) throw InvalidArgument("integration time must be nonnegative");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!tess.contains(points[i])) {
      throw OutOfDomain("point " + std::to_string(i) + ": " + std::to_string(points[i]) +
                        " outside domain [" + std::to_string(tess.domain().x_min) + ", " +
                        std::to_string(tess.domain().x_max) + "]");
    }
  }
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

// Logarithm argument r of the hitting time log1p(r) / a from x to x_c, or a
// finished time: +inf (never reached), 0 (already there) or u / b (flat cell).
struct HitSetup {
  bool needs_log;
  double value;
};

HitSetup hit_setup(double a, double b, double x, double xc) {
  const double v = a * x + b;
  const double u = xc - x;
  if (v == 0.0) return {false, u == 0.0 ? 0.0 : kInf};
  if (u == 0.0) return {false, 0.0};
  if ((u > 0.0) != (v > 0.0)) return {false, kInf};
  if (a == 0.0) return {false, u / b};
  const double r = a * u / v;
  if (r <= -1.0) return {false, kInf};
  return {true, r};
}

// Times to cross each cell from one vertex to the other. Every cell after the
// first is entered at a vertex, so these replace a logarithm per crossing.
struct CrossingTimes {
  std::vector<double> up;
  std::vector<double> down;

  CrossingTimes(const Tessellation& tess, const AffineField& field) {
    const int n = tess.n_cells();
    up.resize(n);
    down.resize(n);
    std::vector<double> args;
    std::vector<double*> slots;
    std::vector<double> slopes;
    for (int c = 0; c < n; ++c) {
      const double a = detail::effective_slope(field.slope(c));
      const double b = field.intercept(c);
      for (int dir : {1, -1}) {
        double& slot = dir > 0 ? up[c] : down[c];
        const double from = dir > 0 ? tess.lower(c) : tess.upper(c);
        const double to = dir > 0 ? tess.upper(c) : tess.lower(c);
        const HitSetup h = hit_setup(a, b, from, to);
        slot = h.value;
        if (h.needs_log) {
          args.push_back(h.value);
          slots.push_back(&slot);
          slopes.push_back(a);
        }
      }
    }
    std::vector<double> logs(args.size());
    detail::log1p_n(args.data(), logs.data(), args.size());
    for (std::size_t i = 0; i < args.size(); ++i) *slots[i] = logs[i] / slopes[i];
  }
};

constexpr std::size_t kBlock = 256;

// Integrates a block of at most kBlock points in three passes: first-cell
// hitting times (batched logarithms), the walk across whole cells (table
// lookups), then the in-cell flow of the last cell (batched exponentials).
// Each value only depends on its own point.
void flow_block(const Tessellation& tess, const AffineField& field, const CrossingTimes& crossing,
                const double* xs, std::size_t n, double t0, double* phi, TraversalTrace* traces) {
  const int n_cells = tess.n_cells();
  std::array<int, kBlock> cell;
  std::array<int, kBlock> dir;
  std::array<double, kBlock> xm;
  std::array<double, kBlock> tm;
  std::array<bool, kBlock> finished;
  std::array<double, kBlock> args{};
  std::array<double, kBlock> res;
  std::array<int, kBlock> queue;

  auto finish = [&](std::size_t p, double value) {
    phi[p] = value;
    finished[p] = true;
    if (traces) {
      traces[p].x_final = xm[p];
      traces[p].t_final = tm[p];
    }
  };

  // Pass 1: first cell.
  std::size_t n_log = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const double x = xs[p];
    const int c = tess.cell_index(x);
    const double a = detail::effective_slope(field.slope(c));
    const double b = field.intercept(c);
    const double v = a * x + b;
    cell[p] = c;
    dir[p] = sign(v);
    xm[p] = x;
    tm[p] = t0;
    finished[p] = false;
    res[p] = kInf;
    if (traces) {
      TraversalTrace& tr = traces[p];
      tr.first_cell = c;
      tr.direction = dir[p];
      tr.hit_times.clear();
      tr.x_start = x;
      tr.t_start = t0;
      tr.pinned = false;
    }
    if (dir[p] == 0) {
      finish(p, x);
      continue;
    }
    const double xc = dir[p] > 0 ? tess.upper(c) : tess.lower(c);
    // Speed is monotone across an affine cell: skip the logarithm when the
    // exit is out of reach within t.
    if (std::abs(xc - x) > t0 * std::max(std::abs(v), std::abs(a * xc + b))) continue;
    const HitSetup h = hit_setup(a, b, x, xc);
    if (h.needs_log) {
      args[n_log] = h.value;
      queue[n_log++] = static_cast<int>(p);
    } else {
      res[p] = h.value;
    }
  }
  detail::log1p_n(args.data(), args.data(), n_log);
  for (std::size_t i = 0; i < n_log; ++i) {
    const int p = queue[i];
    res[p] = args[i] / detail::effective_slope(field.slope(cell[p]));
  }

  // Pass 2: whole-cell crossings.
  for (std::size_t p = 0; p < n; ++p) {
    if (finished[p]) continue;
    double th = res[p];
    int c = cell[p];
    const int d = dir[p];
    double x = xm[p];
    double t = tm[p];
    const int max_visits = std::max(cell[p] + 1, n_cells - cell[p]);
    for (int visits = 1; th <= t; ++visits) {
      if (visits > max_visits) {
        throw InternalError("traversal exceeded " + std::to_string(max_visits) + " cells");
      }
      const double xc = d > 0 ? tess.upper(c) : tess.lower(c);
      const int next = c + d;
      if (next < 0 || next >= n_cells) {
        // Reaches a domain edge moving outward and stays there.
        xm[p] = x;
        tm[p] = t;
        cell[p] = c;
        if (traces) traces[p].pinned = true;
        finish(p, xc);
        break;
      }
      t -= th;
      if (traces) traces[p].hit_times.push_back(th);
      x = xc;
      c = next;
      const double v = detail::effective_slope(field.slope(c)) * x + field.intercept(c);
      if (sign(v) != d) {
        // Stationary on the vertex, or stalled where v changes sign by roundoff.
        xm[p] = x;
        tm[p] = t;
        cell[p] = c;
        finish(p, x);
        break;
      }
      th = d > 0 ? crossing.up[c] : crossing.down[c];
    }
    if (!finished[p]) {
      cell[p] = c;
      xm[p] = x;
      tm[p] = t;
    }
  }

  // Pass 3: flow inside the last cell for the remaining time.
  std::size_t n_exp = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (finished[p]) continue;
    const double z = detail::effective_slope(field.slope(cell[p])) * tm[p];
    if (std::abs(z) < detail::kExprelSeries) {
      res[p] = detail::exprel_series(z);
    } else {
      args[n_exp] = z;
      queue[n_exp++] = static_cast<int>(p);
    }
  }
  detail::expm1_n(args.data(), args.data(), n_exp);
  for (std::size_t i = 0; i < n_exp; ++i) {
    const int p = queue[i];
    res[p] = args[i] / (detail::effective_slope(field.slope(cell[p])) * tm[p]);
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (finished[p]) continue;
    const int c = cell[p];
    const double v = detail::effective_slope(field.slope(c)) * xm[p] + field.intercept(c);
    const double psi = xm[p] + v * tm[p] * res[p];
    finish(p, std::clamp(psi, tess.lower(c), tess.upper(c)));
  }
}

void flow_points(const Tessellation& tess, const AffineField& field, std::span<const double> points,
                 double t, double* phi, TraversalTrace* traces, int threads) {
  check_field(tess, field);
  check_inputs(tess, points, t);
  const CrossingTimes crossing(tess, field);
  const std::size_t n_blocks = (points.size() + kBlock - 1) / kBlock;
  parallel_for(n_blocks, threads, [&](std::size_t blk) {
    const std::size_t begin = blk * kBlock;
    const std::size_t len = std::min(kBlock, points.size() - begin);
    flow_block(tess, field, crossing, points.data() + begin, len, t, phi + begin,
               traces ? traces + begin : nullptr);
  });
}

}  // namespace

double TraversalTrace::entry_point(const Tessellation& tess, int i) const {
  if (i == 0) return x_start;
  const int c = visited_cell(i);
  return direction > 0 ? tess.lower(c) : tess.upper(c);
}

double velocity_at(const AffineField& field, const Tessellation& tess, double x) {
  check_field(tess, field);
  return field.velocity(tess.cell_index(x), x);
}

double hitting_time(double a, double b, double x, double x_c) {
  return detail::cell_hitting_time(detail::effective_slope(a), b, x, x_c);
}

double integrate(const Tessellation& tess, const AffineField& field, double x, double t) {
  double phi;
  flow_points(tess, field, std::span<const double>(&x, 1), t, &phi, nullptr, 1);
  return phi;
}

double integrate(const Tessellation& tess, const AffineField& field, double x, double t,
                 TraversalTrace& trace) {
  double phi;
  flow_points(tess, field, std::span<const double>(&x, 1), t, &phi, &trace, 1);
  return phi;
}

WarpResult integrate_grid(const Tessellation& tess, const AffineField& field,
                          std::span<const double> points, double t, int threads) {
  WarpResult out;
  out.phi.resize(points.size());
  out.traces.resize(points.size());
  flow_points(tess, field, points, t, out.phi.data(), out.traces.data(), threads);
  return out;
}

std::vector<double> transform_points(const Tessellation& tess, const AffineField& field,
                                     std::span<const double> points, double t, int threads) {
  std::vector<double> phi(points.size());
  flow_points(tess, field, points, t, phi.data(), nullptr, threads);
  return phi;
}

std::vector<double> scaling_squaring(const Tessellation& tess, const AffineField& field,
                                     std::span<const double> grid, double t, int n_squarings,
                                     int threads) {
  if (grid.empty()) throw InvalidArgument("scaling and squaring needs a nonempty grid");
  if (n_squarings < 0) throw InvalidArgument("number of squarings must be nonnegative");
  std::vector<double> warp =
      transform_points(tess, field, grid, std::ldexp(t, -n_squarings), threads);
  for (int i = 0; i < n_squarings; ++i) warp = self_compose(grid, warp).values;
  return warp;
}

}  // namespace difw
