#include <cmath>
#include <random>

#include "difw/error.hpp"
#include "difw/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace difw;
using difw::testing::linspace;
using difw::testing::tent_field;

namespace {

double order(double e1, double e2, double refinement) { return std::log(e1 / e2) / std::log(refinement); }

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("RK4 reproduces the tent golden value") {
    const Tessellation t(Domain{}, 2);
    CHECK(std::abs(ode_solve(tent_field(), t, 0.25, 1.0, 100000) - (1.0 - std::exp(-1.0))) <= 1e-9);
  }

  TEST_CASE("batched and single-point solves agree") {
    std::mt19937_64 rng(1);
    const CpaBasis b(Tessellation(Domain{}, 16), BasisMethod::Sparse, false);
    const AffineField f = b.theta_to_field(difw::testing::random_theta(b.dim(), rng));
    const std::vector<double> xs = linspace(0.0, 1.0, 37);
    for (OdeMethod m : {OdeMethod::Rk4, OdeMethod::Euler}) {
      const std::vector<double> grid = ode_solve_grid(f, b.tessellation(), xs, 1.0, 500, m, 3);
      for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(grid[i] == ode_solve(f, b.tessellation(), xs[i], 1.0, 500, m));
    }
  }

  TEST_CASE("convergence orders on a smooth single-cell field") {
    const Tessellation t(Domain{}, 1);
    const AffineField f(std::vector<double>{0.5, 0.1});
    const double x = 0.2;
    // Exact flow of dx/dt = a x + b.
    const double exact = (x + 0.1 / 0.5) * std::exp(0.5 * 0.5) - 0.1 / 0.5;
    auto err = [&](int n, OdeMethod m) { return std::abs(ode_solve(f, t, x, 0.5, n, m) - exact); };
    CHECK(order(err(10, OdeMethod::Rk4), err(20, OdeMethod::Rk4), 2.0) >= 3.5);
    CHECK(order(err(100, OdeMethod::Euler), err(1000, OdeMethod::Euler), 10.0) >= 0.9);
  }

  TEST_CASE("Euler error decreases with the step count") {
    const Tessellation t(Domain{}, 2);
    const double exact = 1.0 - std::exp(-1.0);
    double previous = 1.0;
    for (int n : {10, 100, 1000, 10000}) {
      const double e = std::abs(ode_solve(tent_field(), t, 0.25, 1.0, n, OdeMethod::Euler) - exact);
      CHECK(e < previous);
      previous = e;
    }
  }

  TEST_CASE("finite-difference error is U-shaped in the step") {
    const CpaBasis b(Tessellation(Domain{}, 2), BasisMethod::Sparse, true);
    // Analytic d phi / d theta at x = 1/4, t = 1, theta = 1 (see the gradient tests).
    const double exact = std::exp(-1.0) * b.matrix()(0, 0);
    std::vector<double> errors;
    for (double h : {1e-1, 1e-3, 1e-5, 1e-7, 1e-9, 1e-11, 1e-13})
      errors.push_back(std::abs(finite_diff_grad(b, std::vector<double>{1.0}, 0.25, 1.0, h)[0] - exact));
    const auto best = std::min_element(errors.begin(), errors.end()) - errors.begin();
    CHECK(best > 0);
    CHECK(best + 1 < static_cast<long>(errors.size()));
    CHECK(errors.front() > 10 * errors[best]);
    CHECK(errors.back() > 10 * errors[best]);
  }

  TEST_CASE("relative error uses an absolute floor") {
    CHECK(relative_error(1e-12, 2e-12) == 0.0);
    CHECK(relative_error(1e-6, 2e-6) == 0.5);
    CHECK(relative_error(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
    CHECK(relative_error(0.0, 0.0) == 0.0);
  }

  TEST_CASE("grad_check report") {
    FieldSweep sweep;
    sweep.n_cells = 4;
    const GradCheckReport r = grad_check(3, 20, sweep);
    CHECK(r.n_fields == 3);
    CHECK(r.field_max_rel_err.size() == 3);
    CHECK(r.max_rel_err <= 1e-5);
    CHECK(r.mean_rel_err <= r.max_rel_err);
    const GradCheckReport again = grad_check(3, 20, sweep, 1e-6, 2);
    CHECK(again.field_max_rel_err == r.field_max_rel_err);
  }

  TEST_CASE("precision report orders the two errors") {
    FieldSweep sweep;
    const PrecisionReport r = precision_report(5, 100, SolverConfig{}, sweep);
    CHECK(r.integration_max_abs.size() == 5);
    CHECK(r.gradient_error >= 10 * r.integration_error);
  }

  TEST_CASE("speed report fills every field") {
    FieldSweep sweep;
    sweep.n_cells = 8;
    sweep.draw = ThetaDraw::StandardNormal;
    sweep.zero_boundary = false;
    const SpeedReport r = speed_report(2, 50, sweep, 3, 1e-4);
    CHECK(r.numeric_steps > 0);
    CHECK(r.numeric_error <= 1e-4);
    CHECK(r.closed_forward_s > 0.0);
    CHECK(r.closed_backward_s > 0.0);
    CHECK(r.numeric_forward_s > 0.0);
    CHECK(r.finite_diff_backward_s > 0.0);
  }

  TEST_CASE("names") {
    CHECK(parse_ode_method(to_string(OdeMethod::Rk4)) == OdeMethod::Rk4);
    CHECK(parse_ode_method(to_string(OdeMethod::Euler)) == OdeMethod::Euler);
    CHECK(parse_theta_draw(to_string(ThetaDraw::Prior)) == ThetaDraw::Prior);
    CHECK(parse_theta_draw(to_string(ThetaDraw::StandardNormal)) == ThetaDraw::StandardNormal);
    CHECK_THROWS_AS(parse_ode_method("midpoint"), InvalidArgument);
  }
}
