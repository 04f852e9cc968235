#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "difw/tessellation.hpp"
#include "json.hpp"

namespace difw {

enum class BasisMethod { Svd, Qr, Rref, Sparse };

std::string to_string(BasisMethod method);
BasisMethod parse_basis_method(std::string_view name);

/// Per-cell affine velocity coefficients stored as vec(A) = [a_0, b_0, a_1, b_1, ...].
struct AffineField {
  std::vector<double> coeffs;

  AffineField() = default;
  explicit AffineField(int n_cells) : coeffs(2 * static_cast<std::size_t>(n_cells), 0.0) {}
  explicit AffineField(std::vector<double> vec_a) : coeffs(std::move(vec_a)) {}

  int n_cells() const { return static_cast<int>(coeffs.size() / 2); }
  double slope(int c) const { return coeffs[2 * c]; }
  double intercept(int c) const { return coeffs[2 * c + 1]; }
  double velocity(int c, double x) const { return slope(c) * x + intercept(c); }
};

/// Continuity constraints L (one row [x_j, 1, -x_j, -1] per shared vertex), plus
/// v(x_min) = 0 and v(x_max) = 0 rows when `zero_boundary` is set.
Eigen::MatrixXd constraint_matrix(const Tessellation& tess, bool zero_boundary);

/// Null space of an arbitrary constraint matrix by factorization. `method`
/// must be Svd, Qr or Rref; Sparse needs the tessellation (see CpaBasis).
Eigen::MatrixXd null_space(const Eigen::MatrixXd& constraints, BasisMethod method);

/// Basis B of the CPA velocity space: vec(A) = B * theta.
class CpaBasis {
 public:
  CpaBasis(const Tessellation& tess, BasisMethod method = BasisMethod::Sparse,
           bool zero_boundary = false);

  /// Wraps an externally supplied matrix (e.g. loaded from JSON) after checking
  /// its shape and that it satisfies the constraints.
  static CpaBasis from_matrix(const Tessellation& tess, BasisMethod method, bool zero_boundary,
                              Eigen::MatrixXd matrix);

  const Tessellation& tessellation() const { return tess_; }
  BasisMethod method() const { return method_; }
  bool zero_boundary() const { return zero_boundary_; }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  int n_cells() const { return tess_.n_cells(); }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  bool orthonormal() const { return orthonormal_; }

  /// d(a_c)/d(theta_k) and d(b_c)/d(theta_k).
  double slope_sensitivity(int c, int k) const { return matrix_(2 * c, k); }
  double intercept_sensitivity(int c, int k) const { return matrix_(2 * c + 1, k); }

  /// Maps vec(A) onto theta: B^T for orthonormal bases, the least-squares
  /// pseudo-inverse (B^T B)^-1 B^T otherwise.
  const Eigen::MatrixXd& projector() const { return projector_; }

  AffineField theta_to_field(std::span<const double> theta) const;
  std::vector<double> field_to_theta(const AffineField& field) const;

 private:
  CpaBasis(const Tessellation& tess, BasisMethod method, bool zero_boundary,
           Eigen::MatrixXd matrix, bool validate);
  void finalize();

  Tessellation tess_;
  BasisMethod method_;
  bool zero_boundary_;
  Eigen::MatrixXd matrix_;
  Eigen::MatrixXd projector_;
  bool orthonormal_ = false;
};

void to_json(nlohmann::json& j, const CpaBasis& basis);
CpaBasis basis_from_json(const nlohmann::json& j);

/// Squared-exponential covariance over per-cell coefficients. The slope block
/// and the intercept block share the kernel on cell centers and are mutually
/// uncorrelated.
Eigen::MatrixXd piecewise_affine_covariance(const Tessellation& tess, double lambda_sigma,
                                            double lambda_smooth);

/// Gaussian smoothness prior N(0, Sigma_CPA) on theta.
class PriorCovariance {
 public:
  PriorCovariance(const CpaBasis& basis, double lambda_sigma, double lambda_smooth);
  /// Prior with an explicitly given covariance (hyperparameters reported as 0).
  explicit PriorCovariance(Eigen::MatrixXd sigma);

  double lambda_sigma() const { return lambda_sigma_; }
  double lambda_smooth() const { return lambda_smooth_; }
  int dim() const { return static_cast<int>(sigma_.rows()); }
  const Eigen::MatrixXd& covariance() const { return sigma_; }
  /// Lower Cholesky factor of Sigma_CPA + jitter * I.
  const Eigen::MatrixXd& cholesky() const { return chol_; }
  double jitter() const { return jitter_; }
  bool degenerate() const { return degenerate_; }

  /// theta^T Sigma^-1 theta via triangular solves.
  double quadratic_form(std::span<const double> theta) const;
  /// Sigma^-1 theta.
  Eigen::VectorXd precision_times(std::span<const double> theta) const;

  /// theta = chol * z.
  std::vector<double> color(std::span<const double> z) const;
  /// z = chol^-1 * theta.
  std::vector<double> whiten(std::span<const double> theta) const;

  std::vector<double> sample(std::mt19937_64& rng) const;

 private:
  void factorize();

  double lambda_sigma_;
  double lambda_smooth_;
  Eigen::MatrixXd sigma_;
  Eigen::MatrixXd chol_;
  double jitter_ = 0.0;
  bool degenerate_ = false;
};

std::vector<double> sample_prior(const PriorCovariance& prior, std::uint64_t seed);

}  // namespace difw
