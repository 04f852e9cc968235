#include "difw/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "difw/error.hpp"
#include "difw/integrator.hpp"
#include "difw/parallel.hpp"

namespace difw {

std::string to_string(OdeMethod method) { return method == OdeMethod::Rk4 ? "rk4" : "euler"; }

OdeMethod parse_ode_method(std::string_view name) {
  if (name == "rk4") return OdeMethod::Rk4;
  if (name == "euler") return OdeMethod::Euler;
  throw InvalidArgument("unknown ODE method '" + std::string(name) + "' (expected rk4 or euler)");
}

namespace {

struct Steps {
  double h;
  double half;
  double sixth;
};

Steps make_steps(double t, int n_steps) {
  if (n_steps < 1) throw InvalidArgument("ODE solver needs at least one step");
  if (!(t >= 0.0)) throw InvalidArgument("integration time must be nonnegative");
  const double h = t / n_steps;
  return {h, 0.5 * h, h / 6.0};
}

double clamp_to(const Domain& dom, double x) { return std::clamp(x, dom.x_min, dom.x_max); }

double generic_velocity(const AffineField& field, const Tessellation& tess, double x) {
  const double s = clamp_to(tess.domain(), x);
  const int c = tess.cell_index(s);
  return field.slope(c) * s + field.intercept(c);
}

double generic_step(const AffineField& field, const Tessellation& tess, double x, const Steps& st,
                    OdeMethod method) {
  if (method == OdeMethod::Euler) {
    return clamp_to(tess.domain(), x + st.h * generic_velocity(field, tess, x));
  }
  const double k1 = generic_velocity(field, tess, x);
  const double k2 = generic_velocity(field, tess, x + st.half * k1);
  const double k3 = generic_velocity(field, tess, x + st.half * k2);
  const double k4 = generic_velocity(field, tess, x + st.h * k3);
  return clamp_to(tess.domain(), x + st.sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

// Per-point copy of the containing cell, as an open-closed interval (lo, hi]
// that matches min-rule membership (cell 0 also owns its lower vertex).
struct CellCache {
  std::vector<double> a, b, lo, hi;

  explicit CellCache(std::size_t n) : a(n), b(n), lo(n), hi(n) {}

  void load(const AffineField& field, const Tessellation& tess, std::size_t p, double x) {
    const int c = tess.cell_index(x);
    a[p] = field.slope(c);
    b[p] = field.intercept(c);
    lo[p] = c == 0 ? std::nextafter(tess.lower(0), -INFINITY) : tess.lower(c);
    hi[p] = tess.upper(c);
  }
};

// Lockstep stepping of a contiguous block. Steps whose stage points stay in the
// cached cell are evaluated in a tight loop with the same arithmetic as
// generic_step; the rest are redone by generic_step.
void solve_block(const AffineField& field, const Tessellation& tess, double* x, std::size_t n,
                 const Steps& st, int n_steps, OdeMethod method) {
  CellCache cache(n);
  for (std::size_t p = 0; p < n; ++p) {
    x[p] = clamp_to(tess.domain(), x[p]);
    cache.load(field, tess, p, x[p]);
  }
  const double x_min = tess.domain().x_min;
  const double x_max = tess.domain().x_max;
  std::vector<double> next(n);
  std::vector<int> redo(n);
  const double* a = cache.a.data();
  const double* b = cache.b.data();
  const double* lo = cache.lo.data();
  const double* hi = cache.hi.data();
  double* xn = next.data();
  int* flag = redo.data();

  for (int step = 0; step < n_steps; ++step) {
    int n_flagged = 0;
    if (method == OdeMethod::Rk4) {
      for (std::size_t p = 0; p < n; ++p) {
        const double xp = x[p];
        const double k1 = a[p] * xp + b[p];
        const double s2 = xp + st.half * k1;
        const double k2 = a[p] * s2 + b[p];
        const double s3 = xp + st.half * k2;
        const double k3 = a[p] * s3 + b[p];
        const double s4 = xp + st.h * k3;
        const double k4 = a[p] * s4 + b[p];
        const double y = std::min(std::max(xp + st.sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4), x_min), x_max);
        const int inside = (s2 > lo[p]) & (s2 <= hi[p]) & (s3 > lo[p]) & (s3 <= hi[p]) &
                           (s4 > lo[p]) & (s4 <= hi[p]) & (y > lo[p]) & (y <= hi[p]);
        xn[p] = y;
        flag[p] = 1 - inside;
        n_flagged += 1 - inside;
      }
    } else {
      for (std::size_t p = 0; p < n; ++p) {
        const double xp = x[p];
        const double y = std::min(std::max(xp + st.h * (a[p] * xp + b[p]), x_min), x_max);
        const int inside = (y > lo[p]) & (y <= hi[p]);
        xn[p] = y;
        flag[p] = 1 - inside;
        n_flagged += 1 - inside;
      }
    }
    if (n_flagged > 0) {
      for (std::size_t p = 0; p < n; ++p) {
        if (!flag[p]) continue;
        xn[p] = generic_step(field, tess, x[p], st, method);
        cache.load(field, tess, p, xn[p]);
      }
    }
    std::copy(xn, xn + n, x);
  }
}

}  // namespace

double ode_solve(const AffineField& field, const Tessellation& tess, double x, double t,
                 int n_steps, OdeMethod method) {
  const Steps st = make_steps(t, n_steps);
  tess.cell_index(x);  // throws OutOfDomain
  for (int i = 0; i < n_steps; ++i) x = generic_step(field, tess, x, st, method);
  return x;
}

std::vector<double> ode_solve_grid(const AffineField& field, const Tessellation& tess,
                                   std::span<const double> points, double t, int n_steps,
                                   OdeMethod method, int threads) {
  const Steps st = make_steps(t, n_steps);
  for (std::size_t p = 0; p < points.size(); ++p) {
    if (!tess.contains(points[p])) {
      rethrow_with_context(std::make_exception_ptr(OutOfDomain("outside the domain")),
                           "point " + std::to_string(p));
    }
  }
  std::vector<double> x(points.begin(), points.end());
  // Blocks of a fixed size keep the values independent of the worker count.
  constexpr std::size_t kBlock = 256;
  const std::size_t n_blocks = (x.size() + kBlock - 1) / kBlock;
  parallel_for(n_blocks, threads, [&](std::size_t blk) {
    const std::size_t begin = blk * kBlock;
    const std::size_t len = std::min(kBlock, x.size() - begin);
    solve_block(field, tess, x.data() + begin, len, st, n_steps, method);
  });
  return x;
}

std::vector<double> finite_diff_grad(const CpaBasis& basis, std::span<const double> theta, double x,
                                     double t, double h) {
  const GradientMatrix g = finite_diff_grid(basis, theta, std::span<const double>(&x, 1), t, h);
  return std::vector<double>(g.data(), g.data() + g.size());
}

GradientMatrix finite_diff_grid(const CpaBasis& basis, std::span<const double> theta,
                                std::span<const double> points, double t, double h, int threads) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  const Tessellation& tess = basis.tessellation();
  GradientMatrix g(static_cast<Eigen::Index>(points.size()), basis.dim());
  std::vector<double> shifted(theta.begin(), theta.end());
  for (int k = 0; k < basis.dim(); ++k) {
    shifted[k] = theta[k] + h;
    const std::vector<double> up = transform_points(tess, basis.theta_to_field(shifted), points, t, threads);
    shifted[k] = theta[k] - h;
    const std::vector<double> down = transform_points(tess, basis.theta_to_field(shifted), points, t, threads);
    shifted[k] = theta[k];
    for (std::size_t p = 0; p < points.size(); ++p) g(p, k) = (up[p] - down[p]) / (2.0 * h);
  }
  return g;
}

double relative_error(double g, double fd, double abs_floor) {
  const double diff = std::abs(g - fd);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max(std::abs(g), std::abs(fd));
}

namespace {

std::vector<double> uniform_points(const Domain& dom, int n) {
  std::vector<double> pts(n);
  for (int i = 0; i < n; ++i) {
    pts[i] = n == 1 ? dom.x_min : dom.x_min + dom.length() * i / (n - 1);
  }
  if (n > 1) pts.back() = dom.x_max;
  return pts;
}

double max_abs_diff(std::span<const double> u, std::span<const double> v) {
  double m = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) m = std::max(m, std::abs(u[i] - v[i]));
  return m;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double e : v) s += e;
  return s / v.size();
}

template <class Fn>
double seconds(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(ThetaDraw draw) { return draw == ThetaDraw::Prior ? "prior" : "normal"; }

ThetaDraw parse_theta_draw(std::string_view name) {
  if (name == "prior") return ThetaDraw::Prior;
  if (name == "normal") return ThetaDraw::StandardNormal;
  throw InvalidArgument("unknown parameter draw '" + std::string(name) +
                        "' (expected prior or normal)");
}

std::vector<double> draw_theta(const FieldSweep& sweep, const PriorCovariance& prior,
                               std::mt19937_64& rng) {
  if (sweep.draw == ThetaDraw::Prior) return prior.sample(rng);
  std::normal_distribution<double> normal;
  std::vector<double> theta(prior.dim());
  for (double& v : theta) v = normal(rng);
  return theta;
}

GradCheckReport grad_check(int n_fields, int n_points, const FieldSweep& sweep, double fd_step,
                           int threads) {
  if (n_fields < 1 || n_points < 1) throw InvalidArgument("field and point counts must be positive");
  if (!(fd_step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  GradCheckReport report;
  report.n_fields = n_fields;
  report.n_points = n_points;
  report.n_cells = sweep.n_cells;
  report.fd_step = fd_step;
  const Tessellation tess(Domain{}, sweep.n_cells);
  const CpaBasis basis(tess, sweep.method, sweep.zero_boundary);
  const PriorCovariance prior(basis, sweep.lambda_sigma, sweep.lambda_smooth);
  const std::vector<double> pts = uniform_points(tess.domain(), n_points);
  std::mt19937_64 rng(sweep.seed);
  double sum = 0.0;
  std::size_t count = 0;
  for (int f = 0; f < n_fields; ++f) {
    const std::vector<double> theta = draw_theta(sweep, prior, rng);
    const AffineField field = basis.theta_to_field(theta);
    const GradientMatrix g = grad_grid(basis, field, integrate_grid(tess, field, pts, 1.0, threads),
                                       threads);
    const GradientMatrix fd = finite_diff_grid(basis, theta, pts, 1.0, fd_step, threads);
    double worst = 0.0;
    for (Eigen::Index p = 0; p < g.rows(); ++p) {
      for (Eigen::Index k = 0; k < g.cols(); ++k) {
        const double e = relative_error(g(p, k), fd(p, k));
        worst = std::max(worst, e);
        report.max_abs_err = std::max(report.max_abs_err, std::abs(g(p, k) - fd(p, k)));
        sum += e;
        ++count;
      }
    }
    report.field_max_rel_err.push_back(worst);
    report.max_rel_err = std::max(report.max_rel_err, worst);
  }
  report.mean_rel_err = count ? sum / static_cast<double>(count) : 0.0;
  return report;
}

PrecisionReport precision_report(int n_fields, int n_points, const SolverConfig& solver,
                                 const FieldSweep& sweep, int threads) {
  if (n_fields < 0 || n_points < 0) throw InvalidArgument("field and point counts must be nonnegative");
  PrecisionReport report;
  report.n_fields = n_fields;
  report.n_points = n_points;
  report.solver = solver;
  if (n_fields == 0 || n_points == 0) return report;

  const Tessellation tess(Domain{}, sweep.n_cells);
  const CpaBasis basis(tess, sweep.method, sweep.zero_boundary);
  const PriorCovariance prior(basis, sweep.lambda_sigma, sweep.lambda_smooth);
  const std::vector<double> pts = uniform_points(tess.domain(), n_points);
  std::mt19937_64 rng(sweep.seed);
  const double h = solver.fd_step;

  for (int f = 0; f < n_fields; ++f) {
    const std::vector<double> theta = draw_theta(sweep, prior, rng);
    const AffineField field = basis.theta_to_field(theta);
    const WarpResult exact = integrate_grid(tess, field, pts, 1.0, threads);
    const std::vector<double> numeric =
        ode_solve_grid(field, tess, pts, 1.0, solver.n_steps, solver.method, threads);
    report.integration_max_abs.push_back(max_abs_diff(exact.phi, numeric));

    const GradientMatrix g = grad_grid(basis, field, exact, threads);
    double worst = 0.0;
    std::vector<double> shifted = theta;
    for (int k = 0; k < basis.dim(); ++k) {
      shifted[k] = theta[k] + h;
      const auto up = ode_solve_grid(basis.theta_to_field(shifted), tess, pts, 1.0, solver.n_steps,
                                     solver.method, threads);
      shifted[k] = theta[k] - h;
      const auto down = ode_solve_grid(basis.theta_to_field(shifted), tess, pts, 1.0,
                                       solver.n_steps, solver.method, threads);
      shifted[k] = theta[k];
      for (int p = 0; p < n_points; ++p) {
        worst = std::max(worst, std::abs(g(p, k) - (up[p] - down[p]) / (2.0 * h)));
      }
    }
    report.gradient_max_abs.push_back(worst);
  }
  report.integration_error = mean(report.integration_max_abs);
  report.gradient_error = mean(report.gradient_max_abs);
  return report;
}

SpeedReport speed_report(int batch, int n_points, const FieldSweep& sweep, int repetitions,
                         double target_accuracy) {
  if (batch < 1 || n_points < 1) throw InvalidArgument("batch and point counts must be positive");
  if (repetitions < 1) throw InvalidArgument("repetitions must be positive");
  SpeedReport report;
  report.batch = batch;
  report.n_points = n_points;
  report.n_cells = sweep.n_cells;
  report.repetitions = repetitions;
  report.target_accuracy = target_accuracy;

  const Tessellation tess(Domain{}, sweep.n_cells);
  const CpaBasis basis(tess, sweep.method, sweep.zero_boundary);
  const PriorCovariance prior(basis, sweep.lambda_sigma, sweep.lambda_smooth);
  const std::vector<double> pts = uniform_points(tess.domain(), n_points);
  std::mt19937_64 rng(sweep.seed);
  std::vector<std::vector<double>> thetas;
  std::vector<AffineField> fields;
  for (int i = 0; i < batch; ++i) {
    thetas.push_back(draw_theta(sweep, prior, rng));
    fields.push_back(basis.theta_to_field(thetas.back()));
  }
  std::vector<std::vector<double>> exact;
  for (const auto& f : fields) exact.push_back(transform_points(tess, f, pts, 1.0));

  auto solver_error = [&](int steps) {
    double err = 0.0;
    for (int i = 0; i < batch; ++i) {
      err = std::max(err, max_abs_diff(exact[i], ode_solve_grid(fields[i], tess, pts, 1.0, steps)));
    }
    return err;
  };
  // Fewest RK4 steps reaching the target: doubling, then bisection.
  constexpr int kMaxSteps = 1 << 22;
  int hi = 1;
  double hi_err = solver_error(hi);
  while (hi_err > target_accuracy && hi < kMaxSteps) {
    hi *= 2;
    hi_err = solver_error(hi);
  }
  int lo = hi / 2;  // fails the target (or is zero)
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    const double err = solver_error(mid);
    if (err <= target_accuracy) {
      hi = mid;
      hi_err = err;
    } else {
      lo = mid;
    }
  }
  report.numeric_steps = hi;
  report.numeric_error = hi_err;

  std::vector<double> fwd, bwd, num, fd;
  double sink = 0.0;  // keeps results observable
  for (int r = 0; r < repetitions; ++r) {
    fwd.push_back(seconds([&] {
      for (const auto& f : fields) sink += transform_points(tess, f, pts, 1.0)[0];
    }));
    bwd.push_back(seconds([&] {
      for (const auto& f : fields) {
        const WarpResult res = integrate_grid(tess, f, pts, 1.0);
        sink += grad_grid(basis, f, res)(0, 0);
      }
    }));
    num.push_back(seconds([&] {
      for (const auto& f : fields) sink += ode_solve_grid(f, tess, pts, 1.0, report.numeric_steps)[0];
    }));
    fd.push_back(seconds([&] {
      for (const auto& th : thetas) sink += finite_diff_grid(basis, th, pts, 1.0, 1e-6)(0, 0);
    }));
  }
  if (std::isnan(sink)) throw NumericError("timing run produced NaN");
  report.closed_forward_s = median(fwd);
  report.closed_backward_s = median(bwd);
  report.numeric_forward_s = median(num);
  report.finite_diff_backward_s = median(fd);
  return report;
}

void to_json(nlohmann::json& j, const PrecisionReport& r) {
  j = nlohmann::json{{"n_fields", r.n_fields},
                     {"n_points", r.n_points},
                     {"method", to_string(r.solver.method)},
                     {"n_steps", r.solver.n_steps},
                     {"fd_step", r.solver.fd_step},
                     {"integration_error", r.integration_error},
                     {"gradient_error", r.gradient_error},
                     {"integration_max_abs", r.integration_max_abs},
                     {"gradient_max_abs", r.gradient_max_abs}};
}

void to_json(nlohmann::json& j, const GradCheckReport& r) {
  j = nlohmann::json{{"n_fields", r.n_fields},           {"n_points", r.n_points},
                     {"n_cells", r.n_cells},             {"fd_step", r.fd_step},
                     {"max_rel_err", r.max_rel_err},     {"mean_rel_err", r.mean_rel_err},
                     {"max_abs_err", r.max_abs_err},     {"field_max_rel_err", r.field_max_rel_err}};
}

void to_json(nlohmann::json& j, const SpeedReport& r) {
  j = nlohmann::json{{"batch", r.batch},
                     {"n_points", r.n_points},
                     {"n_cells", r.n_cells},
                     {"repetitions", r.repetitions},
                     {"target_accuracy", r.target_accuracy},
                     {"numeric_steps", r.numeric_steps},
                     {"numeric_error", r.numeric_error},
                     {"closed_forward_s", r.closed_forward_s},
                     {"closed_backward_s", r.closed_backward_s},
                     {"numeric_forward_s", r.numeric_forward_s},
                     {"finite_diff_backward_s", r.finite_diff_backward_s},
                     {"forward_speedup", r.forward_speedup()},
                     {"backward_speedup", r.backward_speedup()}};
}

}  // namespace difw
