#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "difw/basis.hpp"
#include "difw/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace difw;
using difw::testing::random_theta;

namespace {

constexpr BasisMethod kMethods[] = {BasisMethod::Svd, BasisMethod::Qr, BasisMethod::Rref,
                                    BasisMethod::Sparse};

}  // namespace

TEST_SUITE("basis") {
  TEST_CASE("constraint matrix rows") {
    const Eigen::MatrixXd l = constraint_matrix(Tessellation(Domain{}, 2), false);
    REQUIRE(l.rows() == 1);
    REQUIRE(l.cols() == 4);
    CHECK(l(0, 0) == 0.5);
    CHECK(l(0, 1) == 1.0);
    CHECK(l(0, 2) == -0.5);
    CHECK(l(0, 3) == -1.0);

    const Eigen::MatrixXd empty = constraint_matrix(Tessellation(Domain{}, 1), false);
    CHECK(empty.rows() == 0);
    CHECK(empty.cols() == 2);

    const Eigen::MatrixXd zb = constraint_matrix(Tessellation(Domain{}, 2), true);
    REQUIRE(zb.rows() == 3);
    Eigen::MatrixXd expected(3, 4);
    expected << 0.5, 1, -0.5, -1, 0, 1, 0, 0, 0, 0, 1, 1;
    CHECK(zb == expected);
  }

  TEST_CASE("each continuity row has four nonzeros in adjacent blocks") {
    const Eigen::MatrixXd l = constraint_matrix(Tessellation(Domain{}, 9), false);
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      int nonzeros = 0;
      for (Eigen::Index c = 0; c < l.cols(); ++c) {
        if (l(r, c) != 0.0) {
          ++nonzeros;
          CHECK((c / 2 == r || c / 2 == r + 1));
        }
      }
      CHECK(nonzeros == 4);
    }
  }

  TEST_CASE("tent basis with zero boundary") {
    // Brute-force elimination of the 3x4 system: b1 = 0, a2 + b2 = 0 and
    // 0.5 a1 = -0.5 a2 - b2 + b1 give the one-parameter family [1, 0, -1, 1].
    for (BasisMethod m : kMethods) {
      const CpaBasis b(Tessellation(Domain{}, 2), m, true);
      REQUIRE(b.dim() == 1);
      const Eigen::VectorXd col = b.matrix().col(0) / b.matrix()(0, 0);
      CHECK(col(0) == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(std::abs(col(1)) <= 1e-14);
      CHECK(col(2) == doctest::Approx(-1.0).epsilon(1e-14));
      CHECK(col(3) == doctest::Approx(1.0).epsilon(1e-14));
    }
    const CpaBasis sparse(Tessellation(Domain{}, 2), BasisMethod::Sparse, true);
    const AffineField f = sparse.theta_to_field(std::vector<double>{1.0});
    CHECK(f.coeffs == std::vector<double>{1.0, 0.0, -1.0, 1.0});
  }

  TEST_CASE("single cell without constraints is the identity") {
    for (BasisMethod m : {BasisMethod::Svd, BasisMethod::Qr, BasisMethod::Rref})
      CHECK(CpaBasis(Tessellation(Domain{}, 1), m, false).matrix() == Eigen::MatrixXd::Identity(2, 2));
    const CpaBasis b(Tessellation(Domain{}, 1), BasisMethod::Svd, false);
    const AffineField f = b.theta_to_field(std::vector<double>{2.0, 3.0});
    CHECK(f.slope(0) == 2.0);
    CHECK(f.intercept(0) == 3.0);
  }

  TEST_CASE("null space residual, dimension and orthonormality") {
    for (int n : {1, 2, 3, 16, 64}) {
      for (bool zb : {false, true}) {
        if (zb && n < 2) continue;
        const Tessellation t(Domain{}, n);
        const Eigen::MatrixXd l = constraint_matrix(t, zb);
        for (BasisMethod m : kMethods) {
          CAPTURE(n);
          CAPTURE(zb);
          CAPTURE(to_string(m));
          const CpaBasis b(t, m, zb);
          CHECK(b.dim() == (zb ? n - 1 : n + 1));
          if (l.rows() > 0) CHECK((l * b.matrix()).cwiseAbs().maxCoeff() <= 1e-12);
          Eigen::FullPivLU<Eigen::MatrixXd> lu(b.matrix());
          CHECK(lu.rank() == b.dim());
          if (m == BasisMethod::Svd || m == BasisMethod::Qr) {
            const Eigen::MatrixXd gram = b.matrix().transpose() * b.matrix();
            CHECK((gram - Eigen::MatrixXd::Identity(b.dim(), b.dim())).cwiseAbs().maxCoeff() <=
                  1e-10);
          }
        }
      }
    }
  }

  TEST_CASE("all methods span the same space") {
    for (int n : {2, 16, 64}) {
      for (bool zb : {false, true}) {
        const Tessellation t(Domain{}, n);
        const Eigen::MatrixXd q = CpaBasis(t, BasisMethod::Svd, zb).matrix();
        for (BasisMethod m : kMethods) {
          const Eigen::MatrixXd b = CpaBasis(t, m, zb).matrix();
          const Eigen::MatrixXd residual = b - q * (q.transpose() * b);
          CHECK(residual.cwiseAbs().maxCoeff() <= 1e-8);
        }
      }
    }
  }

  TEST_CASE("null_space on a raw matrix") {
    const Eigen::MatrixXd empty(0, 2);
    const Eigen::MatrixXd ns = null_space(empty, BasisMethod::Svd);
    CHECK(ns.cols() == 2);
    const Eigen::MatrixXd l = constraint_matrix(Tessellation(Domain{}, 3), false);
    CHECK_THROWS_AS(null_space(l, BasisMethod::Sparse), InvalidArgument);
  }

  TEST_CASE("theta_to_field") {
    const CpaBasis b(Tessellation(Domain{}, 5), BasisMethod::Svd, false);
    const AffineField zero = b.theta_to_field(std::vector<double>(b.dim(), 0.0));
    for (double v : zero.coeffs) CHECK(v == 0.0);
    CHECK_THROWS_AS(b.theta_to_field(std::vector<double>(b.dim() + 1, 0.0)), InvalidArgument);
  }

  TEST_CASE("fields are continuous and vanish at the ends under zero boundary") {
    std::mt19937_64 rng(11);
    for (int n : {1, 2, 16, 64}) {
      for (bool zb : {false, true}) {
        if (zb && n < 2) continue;
        const Tessellation t(Domain{}, n);
        for (BasisMethod m : kMethods) {
          const CpaBasis b(t, m, zb);
          for (int trial = 0; trial < 100; ++trial) {
            const AffineField f = b.theta_to_field(random_theta(b.dim(), rng));
            for (int c = 0; c + 1 < n; ++c) {
              const double x = t.upper(c);
              CHECK(std::abs(f.velocity(c, x) - f.velocity(c + 1, x)) <= 1e-10);
            }
            if (zb) {
              CHECK(f.velocity(0, 0.0) == 0.0);
              CHECK(f.velocity(n - 1, 1.0) == 0.0);
            }
          }
        }
      }
    }
  }

  TEST_CASE("field_to_theta") {
    std::mt19937_64 rng(5);
    const Tessellation t(Domain{}, 8);
    const CpaBasis svd(t, BasisMethod::Svd, false);
    const std::vector<double> theta0 = random_theta(svd.dim(), rng);
    const std::vector<double> back = svd.field_to_theta(svd.theta_to_field(theta0));
    for (int k = 0; k < svd.dim(); ++k) CHECK(back[k] == doctest::Approx(theta0[k]).epsilon(1e-10));

    for (BasisMethod m : kMethods) {
      const CpaBasis b(t, m, true);
      for (double v : b.field_to_theta(AffineField(8))) CHECK(v == 0.0);
    }

    // Arbitrary (discontinuous) A: least squares through the normal equations.
    AffineField a(8);
    for (double& v : a.coeffs) v = std::normal_distribution<double>()(rng);
    const Eigen::Map<const Eigen::VectorXd> vec_a(a.coeffs.data(), 16);
    for (BasisMethod m : kMethods) {
      const CpaBasis b(t, m, false);
      const Eigen::MatrixXd& bm = b.matrix();
      const Eigen::VectorXd oracle = (bm.transpose() * bm).ldlt().solve(bm.transpose() * vec_a);
      const std::vector<double> theta = b.field_to_theta(a);
      for (int k = 0; k < b.dim(); ++k) CHECK(theta[k] == doctest::Approx(oracle(k)).epsilon(1e-9));
    }
  }

  TEST_CASE("json round trip") {
    const CpaBasis b(Tessellation(Domain{}, 6), BasisMethod::Qr, true);
    nlohmann::json j = b;
    CHECK(j["d"] == b.dim());
    const CpaBasis back = basis_from_json(j);
    CHECK(back.matrix() == b.matrix());
    CHECK(back.method() == BasisMethod::Qr);
    CHECK(back.zero_boundary());
  }

  TEST_CASE("method names") {
    for (BasisMethod m : kMethods) CHECK(parse_basis_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_basis_method("lu"), InvalidArgument);
  }
}

TEST_SUITE("prior") {
  TEST_CASE("single cell covariance is lambda_sigma^2 I") {
    const CpaBasis b(Tessellation(Domain{}, 1), BasisMethod::Svd, false);
    const PriorCovariance p(b, 0.3, 0.7);
    CHECK((p.covariance() - 0.09 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <=
          1e-15);
  }

  TEST_CASE("covariance is symmetric and positive semidefinite") {
    for (BasisMethod m : kMethods) {
      const CpaBasis b(Tessellation(Domain{}, 16), m, false);
      const PriorCovariance p(b, 1e-2, 0.5);
      CHECK((p.covariance() - p.covariance().transpose()).cwiseAbs().maxCoeff() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.covariance());
      CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    }
  }

  TEST_CASE("covariance vanishes with lambda_sigma") {
    const CpaBasis b(Tessellation(Domain{}, 8), BasisMethod::Sparse, true);
    const PriorCovariance p(b, 1e-9, 0.5);
    CHECK(p.covariance().cwiseAbs().maxCoeff() <= 1e-16);
    for (double v : sample_prior(p, 3)) CHECK(std::abs(v) <= 1e-7);
  }

  TEST_CASE("sampling is deterministic per seed") {
    const CpaBasis b(Tessellation(Domain{}, 16), BasisMethod::Sparse, true);
    const PriorCovariance p(b, 1e-2, 0.5);
    CHECK(sample_prior(p, 42) == sample_prior(p, 42));
    CHECK(sample_prior(p, 42) != sample_prior(p, 43));
  }

  TEST_CASE("empirical standard deviations match the covariance") {
    const CpaBasis b(Tessellation(Domain{}, 16), BasisMethod::Sparse, true);
    const PriorCovariance p(b, 1e-3, 0.5);
    std::mt19937_64 rng(2024);
    const int n = 10000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(p.dim());
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(p.dim());
    for (int i = 0; i < n; ++i) {
      const std::vector<double> s = p.sample(rng);
      const Eigen::Map<const Eigen::VectorXd> v(s.data(), p.dim());
      sum += v;
      sum_sq += v.cwiseProduct(v);
    }
    for (int k = 0; k < p.dim(); ++k) {
      const double mean = sum(k) / n;
      const double sd = std::sqrt(sum_sq(k) / n - mean * mean);
      CHECK(sd == doctest::Approx(std::sqrt(p.covariance()(k, k))).epsilon(0.1));
    }
  }

  TEST_CASE("zero covariance gives zero samples and refuses inversion") {
    const PriorCovariance p(Eigen::MatrixXd::Zero(3, 3));
    CHECK(p.degenerate());
    CHECK(sample_prior(p, 1) == std::vector<double>(3, 0.0));
    CHECK_THROWS_AS(p.quadratic_form(std::vector<double>{1.0, 0.0, 0.0}), NumericError);
  }

  TEST_CASE("quadratic form matches the dense inverse") {
    std::mt19937_64 rng(9);
    Eigen::MatrixXd m(5, 5);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) m(i, j) = std::normal_distribution<double>()(rng);
    const Eigen::MatrixXd sigma = m * m.transpose() + Eigen::MatrixXd::Identity(5, 5);
    const PriorCovariance p(sigma);
    const Eigen::MatrixXd inv = sigma.inverse();
    for (int trial = 0; trial < 20; ++trial) {
      const std::vector<double> theta = random_theta(5, rng);
      const Eigen::Map<const Eigen::VectorXd> v(theta.data(), 5);
      const double q = p.quadratic_form(theta);
      CHECK(q >= 0.0);
      CHECK(q == doctest::Approx(v.dot(inv * v)).epsilon(1e-10));
      const Eigen::VectorXd pt = p.precision_times(theta);
      CHECK((pt - inv * v).cwiseAbs().maxCoeff() <= 1e-10 * (inv * v).cwiseAbs().maxCoeff());
    }
    const std::vector<double> z = random_theta(5, rng);
    const std::vector<double> back = p.whiten(p.color(z));
    for (int k = 0; k < 5; ++k) CHECK(back[k] == doctest::Approx(z[k]).epsilon(1e-10));
    CHECK((p.cholesky() * p.cholesky().transpose() - sigma).cwiseAbs().maxCoeff() <= 1e-10);
  }

  TEST_CASE("hyperparameters must be positive") {
    const CpaBasis b(Tessellation(Domain{}, 4), BasisMethod::Sparse, false);
    CHECK_THROWS_AS(PriorCovariance(b, 0.0, 0.5), InvalidArgument);
    CHECK_THROWS_AS(PriorCovariance(b, 1.0, -1.0), InvalidArgument);
  }
}
