#include <cmath>
#include <numbers>
#include <random>

#include "difw/error.hpp"
#include "difw/integrator.hpp"
#include "difw/sampler.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace difw;
using difw::testing::linspace;
using difw::testing::tent_field;

TEST_SUITE("sampler") {
  TEST_CASE("interpolation and its derivatives") {
    const std::vector<double> x{0.0, 0.5, 1.0};
    const std::vector<double> y{0.0, 1.0, 1.0};
    CHECK(interp(x, y, 0.25) == 0.5);
    const InterpGrad g = interp_grad(x, y, 0.25);
    CHECK(g.lo == 0);
    CHECK(g.d_y_lo == 0.5);
    CHECK(g.d_y_hi == 0.5);
    CHECK(g.d_query == 2.0);
  }

  TEST_CASE("clamping outside the knots") {
    const std::vector<double> x{0.0, 0.5, 1.0};
    const std::vector<double> y{3.0, 1.0, 2.0};
    CHECK(interp(x, y, -1.0) == 3.0);
    CHECK(interp(x, y, 2.0) == 2.0);
    CHECK(interp_grad(x, y, 2.0).d_query == 0.0);
    CHECK(locate(x, 2.0).clamped);
    CHECK(interp(x, y, 1.0) == 2.0);
    CHECK(locate(x, 0.5).lo == 1);
  }

  TEST_CASE("flat segment has zero slope") {
    const std::vector<double> x{0.0, 0.5, 1.0};
    const std::vector<double> y{0.0, 1.0, 1.0};
    const InterpGrad g = interp_grad(x, y, 0.75);
    CHECK(g.d_query == 0.0);
    CHECK(g.d_x_lo == 0.0);
    CHECK(g.d_x_hi == 0.0);
  }

  TEST_CASE("derivatives match central differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> x{0.0, 0.13, 0.4, 0.55, 0.9, 1.0};
    std::vector<double> y(x.size());
    for (double& v : y) v = u(rng);
    const double h = 1e-7;
    for (int trial = 0; trial < 50; ++trial) {
      const double q = 0.01 + 0.98 * u(rng);
      const InterpGrad g = interp_grad(x, y, q);
      CHECK(std::abs((interp(x, y, q + h) - interp(x, y, q - h)) / (2 * h) - g.d_query) <= 1e-8);
      for (int side = 0; side < 2; ++side) {
        const int j = g.lo + side;
        std::vector<double> yp = y, ym = y, xp = x, xm = x;
        yp[j] += h;
        ym[j] -= h;
        xp[j] += h;
        xm[j] -= h;
        const double dy = (interp(x, yp, q) - interp(x, ym, q)) / (2 * h);
        const double dx = (interp(xp, y, q) - interp(xm, y, q)) / (2 * h);
        CHECK(std::abs(dy - (side == 0 ? g.d_y_lo : g.d_y_hi)) <= 1e-8);
        CHECK(std::abs(dx - (side == 0 ? g.d_x_lo : g.d_x_hi)) <= 1e-7);
      }
    }
  }

  TEST_CASE("knots must increase") {
    CHECK_THROWS_AS(check_knots(std::vector<double>{0.0}), InvalidArgument);
    CHECK_THROWS_AS(check_knots(std::vector<double>{0.0, 0.0, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(SampledFunction({0.0, 1.0}, {1.0}), InvalidArgument);
  }

  TEST_CASE("resampling a sine through the tent warp") {
    const Tessellation t(Domain{}, 2);
    const std::vector<double> grid = linspace(0.0, 1.0, 1000);
    std::vector<double> y(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) y[i] = std::sin(2 * std::numbers::pi * grid[i]);
    const std::vector<double> phi = transform_points(t, tent_field(), grid, 1.0);
    const SampledFunction out = warp_signal(SampledFunction(grid, y), phi);
    double sq = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double d = out.y[i] - std::sin(2 * std::numbers::pi * phi[i]);
      sq += d * d;
    }
    CHECK(std::sqrt(sq / grid.size()) <= 1e-3);
  }

  TEST_CASE("self composition") {
    const std::vector<double> grid = linspace(0.0, 1.0, 11);
    std::vector<double> w(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) w[i] = grid[i] * grid[i];
    const Composition c = self_compose(grid, w);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(c.values[i] == doctest::Approx(interp(grid, w, w[i])).epsilon(1e-15));
      const Segment& s = c.segments[i];
      CHECK(c.values[i] == doctest::Approx(s.w_lo * w[s.lo] + s.w_hi * w[s.lo + 1]).epsilon(1e-15));
    }
  }
}
