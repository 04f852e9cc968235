#include <cmath>
#include <random>

#include "difw/gradient.hpp"
#include "difw/oracle.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace difw;
using difw::testing::linspace;
using difw::testing::random_theta;

namespace {

GradientMatrix exact_grid(const CpaBasis& b, const std::vector<double>& theta,
                          const std::vector<double>& xs, double t) {
  const AffineField f = b.theta_to_field(theta);
  return grad_grid(b, f, integrate_grid(b.tessellation(), f, xs, t));
}

double max_rel(const GradientMatrix& g, const GradientMatrix& fd) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index k = 0; k < g.cols(); ++k)
      worst = std::max(worst, relative_error(g(i, k), fd(i, k)));
  return worst;
}

}  // namespace

TEST_SUITE("gradient") {
  TEST_CASE("tent gradient across a cell boundary is analytic") {
    // phi = 1 - (1/4x) e^(-theta t) once the point has crossed x = 1/2.
    const CpaBasis b(Tessellation(Domain{}, 2), BasisMethod::Sparse, true);
    for (double x : {0.1, 0.25, 0.4}) {
      for (double theta : {1.0, 2.5}) {
        const double t = 1.0;
        if (std::log(0.5 / x) / theta >= t) continue;
        const GradientMatrix g = exact_grid(b, {theta}, {x}, t);
        const double expected = 0.25 / x * t * std::exp(-theta * t) * b.matrix()(0, 0);
        CHECK(g(0, 0) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
    // Before crossing: phi = x e^(theta t).
    const GradientMatrix g = exact_grid(b, {1.0}, {0.3}, 0.2);
    CHECK(g(0, 0) == doctest::Approx(0.3 * 0.2 * std::exp(0.2) * b.matrix()(0, 0)).epsilon(1e-12));
  }

  TEST_CASE("zero parameters give t times the basis velocity") {
    for (bool zb : {false, true}) {
      const CpaBasis b(Tessellation(Domain{}, 5), BasisMethod::Svd, zb);
      const std::vector<double> xs = linspace(0.0, 1.0, 23);
      const GradientMatrix g = exact_grid(b, std::vector<double>(b.dim(), 0.0), xs, 0.7);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const int c = b.tessellation().cell_index(xs[i]);
        for (int k = 0; k < b.dim(); ++k) {
          const double v = b.slope_sensitivity(c, k) * xs[i] + b.intercept_sensitivity(c, k);
          CHECK(std::abs(g(i, k) - 0.7 * v) <= 1e-12 * std::max(1.0, std::abs(v)));
        }
      }
    }
  }

  TEST_CASE("gradient is continuous through the zero-slope limit") {
    const CpaBasis b(Tessellation(Domain{}, 1), BasisMethod::Sparse, false);
    for (double x : {0.1, 0.4, 0.7}) {
      const GradientMatrix at_zero = exact_grid(b, {0.0, 0.2}, {x}, 1.0);
      for (double a : {1e-9, -1e-9}) {
        const GradientMatrix near = exact_grid(b, {a, 0.2}, {x}, 1.0);
        for (int k = 0; k < 2; ++k) CHECK(std::abs(near(0, k) - at_zero(0, k)) <= 1e-6);
      }
    }
  }

  TEST_CASE("matches central differences") {
    std::mt19937_64 rng(7);
    for (int n : {2, 16, 64}) {
      for (bool zb : {false, true}) {
        const CpaBasis b(Tessellation(Domain{}, n), BasisMethod::Sparse, zb);
        const PriorCovariance prior(b, 0.3, 0.5);
        const std::vector<double> xs = linspace(0.0, 1.0, 40);
        for (int trial = 0; trial < 5; ++trial) {
          const std::vector<double> theta = prior.sample(rng);
          const GradientMatrix g = exact_grid(b, theta, xs, 1.0);
          const GradientMatrix fd = finite_diff_grid(b, theta, xs, 1.0, 1e-6);
          CAPTURE(n);
          CHECK(max_rel(g, fd) <= 1e-5);
        }
      }
    }
  }

  TEST_CASE("column permutation of the basis permutes the gradient") {
    std::mt19937_64 rng(8);
    const CpaBasis b(Tessellation(Domain{}, 6), BasisMethod::Svd, false);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(b.dim());
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + b.dim(), rng);
    const CpaBasis permuted =
        CpaBasis::from_matrix(b.tessellation(), BasisMethod::Svd, false, b.matrix() * perm);
    const std::vector<double> theta = random_theta(b.dim(), rng);
    const Eigen::Map<const Eigen::VectorXd> tv(theta.data(), b.dim());
    const Eigen::VectorXd tp = perm.transpose() * tv;
    const std::vector<double> theta_p(tp.data(), tp.data() + tp.size());
    const std::vector<double> xs = linspace(0.0, 1.0, 31);
    const GradientMatrix g = exact_grid(b, theta, xs, 1.0);
    const GradientMatrix gp = exact_grid(permuted, theta_p, xs, 1.0);
    const GradientMatrix expected = g * perm;
    CHECK((gp - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("thread count does not change values") {
    std::mt19937_64 rng(9);
    const CpaBasis b(Tessellation(Domain{}, 16), BasisMethod::Sparse, false);
    const AffineField f = b.theta_to_field(random_theta(b.dim(), rng));
    const std::vector<double> xs = linspace(0.0, 1.0, 257);
    const WarpResult r = integrate_grid(b.tessellation(), f, xs, 1.0);
    CHECK(grad_grid(b, f, r, 1) == grad_grid(b, f, r, 4));
    for (std::size_t i = 0; i < xs.size(); i += 16) {
      const std::vector<double> row = grad_point(b, f, r.traces[i]);
      for (int k = 0; k < b.dim(); ++k) CHECK(row[k] == grad_grid(b, f, r)(i, k));
    }
  }

  TEST_CASE("scaling and squaring gradient matches central differences") {
    std::mt19937_64 rng(10);
    const CpaBasis b(Tessellation(Domain{}, 16), BasisMethod::Sparse, true);
    const PriorCovariance prior(b, 0.3, 0.5);
    const std::vector<double> grid = linspace(0.0, 1.0, 100);
    const std::vector<double> theta = prior.sample(rng);
    for (int n : {0, 1, 3}) {
      const SquaredWarp sw = scaling_squaring_with_grad(b, b.theta_to_field(theta), grid, 1.0, n);
      CHECK(sw.values == scaling_squaring(b.tessellation(), b.theta_to_field(theta), grid, 1.0, n));
      GradientMatrix fd(grid.size(), b.dim());
      const double h = 1e-6;
      for (int k = 0; k < b.dim(); ++k) {
        std::vector<double> tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        const auto up = scaling_squaring(b.tessellation(), b.theta_to_field(tp), grid, 1.0, n);
        const auto dn = scaling_squaring(b.tessellation(), b.theta_to_field(tm), grid, 1.0, n);
        for (std::size_t i = 0; i < grid.size(); ++i) fd(i, k) = (up[i] - dn[i]) / (2 * h);
      }
      CAPTURE(n);
      CHECK(max_rel(sw.jacobian, fd) <= 1e-5);
    }
  }
}
