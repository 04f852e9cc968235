#include "difw/basis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "difw/error.hpp"

namespace difw {

namespace {

constexpr double kOrthonormalTolerance = 1e-10;
constexpr double kJitterLadder[] = {1e-12, 1e-10, 1e-8};

int expected_dim(const Tessellation& tess, bool zero_boundary) {
  return zero_boundary ? tess.n_cells() - 1 : tess.n_cells() + 1;
}

// Rank threshold relative to the largest entry, as used by the factorizations.
double rank_tolerance(const Eigen::MatrixXd& m) {
  const double scale = m.size() == 0 ? 1.0 : std::max(1.0, m.cwiseAbs().maxCoeff());
  return scale * 1e-10 * std::max<Eigen::Index>(1, std::max(m.rows(), m.cols()));
}

Eigen::MatrixXd null_space_svd(const Eigen::MatrixXd& L) {
  const Eigen::Index n = L.cols();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(L, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = rank_tolerance(L);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  if (rank != L.rows()) {
    throw InternalError("constraint matrix is rank deficient (rank " + std::to_string(rank) +
                        ", rows " + std::to_string(L.rows()) + ")");
  }
  return svd.matrixV().rightCols(n - rank);
}

Eigen::MatrixXd null_space_qr(const Eigen::MatrixXd& L) {
  const Eigen::Index n = L.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(L.transpose());
  qr.setThreshold(1e-12);
  if (qr.rank() != L.rows()) {
    throw InternalError("constraint matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                        ", rows " + std::to_string(L.rows()) + ")");
  }
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  return q.rightCols(n - qr.rank());
}

// Gauss-Jordan elimination to reduced row echelon form; the null space is read
// off the free columns.
Eigen::MatrixXd null_space_rref(const Eigen::MatrixXd& L) {
  Eigen::MatrixXd r = L;
  const Eigen::Index rows = r.rows();
  const Eigen::Index cols = r.cols();
  const double tol = rank_tolerance(L);
  std::vector<Eigen::Index> pivot_cols;
  std::vector<bool> is_pivot(cols, false);
  Eigen::Index row = 0;
  for (Eigen::Index col = 0; col < cols && row < rows; ++col) {
    Eigen::Index best;
    const double mag = r.col(col).segment(row, rows - row).cwiseAbs().maxCoeff(&best);
    if (mag <= tol) continue;
    best += row;
    r.row(row).swap(r.row(best));
    r.row(row) /= r(row, col);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (i != row && r(i, col) != 0.0) r.row(i) -= r(i, col) * r.row(row);
    }
    pivot_cols.push_back(col);
    is_pivot[col] = true;
    ++row;
  }
  if (row != rows) {
    throw InternalError("constraint matrix is rank deficient (rank " + std::to_string(row) +
                        ", rows " + std::to_string(rows) + ")");
  }
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(cols, cols - rows);
  Eigen::Index k = 0;
  for (Eigen::Index free = 0; free < cols; ++free) {
    if (is_pivot[free]) continue;
    basis(free, k) = 1.0;
    for (std::size_t p = 0; p < pivot_cols.size(); ++p) {
      basis(pivot_cols[p], k) = -r(static_cast<Eigen::Index>(p), free);
    }
    ++k;
  }
  return basis;
}

// One column per (interior) vertex: the hat field with unit slopes on the two
// adjacent cells, so theta_k is the vertex velocity divided by the cell width.
Eigen::MatrixXd sparse_basis(const Tessellation& tess, bool zero_boundary) {
  const int n = tess.n_cells();
  const auto& x = tess.vertices();
  const int first = zero_boundary ? 1 : 0;
  const int last = zero_boundary ? n - 1 : n;
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(2 * n, last - first + 1);
  for (int v = first; v <= last; ++v) {
    const int k = v - first;
    const double height = v > 0 ? x[v] - x[v - 1] : x[1] - x[0];
    if (v > 0) {
      const double a = height / (x[v] - x[v - 1]);
      basis(2 * (v - 1), k) = a;
      basis(2 * (v - 1) + 1, k) = -a * x[v - 1];
    }
    if (v < n) {
      const double a = -height / (x[v + 1] - x[v]);
      basis(2 * v, k) = a;
      basis(2 * v + 1, k) = -a * x[v + 1];
    }
  }
  return basis;
}

}  // namespace

std::string to_string(BasisMethod method) {
  switch (method) {
    case BasisMethod::Svd: return "svd";
    case BasisMethod::Qr: return "qr";
    case BasisMethod::Rref: return "rref";
    case BasisMethod::Sparse: return "sparse";
  }
  return "unknown";
}

BasisMethod parse_basis_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "svd") return BasisMethod::Svd;
  if (lower == "qr") return BasisMethod::Qr;
  if (lower == "rref") return BasisMethod::Rref;
  if (lower == "sparse") return BasisMethod::Sparse;
  throw InvalidArgument("unknown basis method '" + std::string(name) + "'");
}

Eigen::MatrixXd constraint_matrix(const Tessellation& tess, bool zero_boundary) {
  const int n = tess.n_cells();
  const int shared = tess.n_shared_vertices();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(shared + (zero_boundary ? 2 : 0), 2 * n);
  for (int j = 0; j < shared; ++j) {
    const double xj = tess.vertices()[j + 1];
    L(j, 2 * j) = xj;
    L(j, 2 * j + 1) = 1.0;
    L(j, 2 * j + 2) = -xj;
    L(j, 2 * j + 3) = -1.0;
  }
  if (zero_boundary) {
    const Domain& dom = tess.domain();
    L(shared, 0) = dom.x_min;
    L(shared, 1) = 1.0;
    L(shared + 1, 2 * n - 2) = dom.x_max;
    L(shared + 1, 2 * n - 1) = 1.0;
  }
  return L;
}

Eigen::MatrixXd null_space(const Eigen::MatrixXd& constraints, BasisMethod method) {
  if (constraints.rows() == 0) {
    return Eigen::MatrixXd::Identity(constraints.cols(), constraints.cols());
  }
  switch (method) {
    case BasisMethod::Svd: return null_space_svd(constraints);
    case BasisMethod::Qr: return null_space_qr(constraints);
    case BasisMethod::Rref: return null_space_rref(constraints);
    case BasisMethod::Sparse: break;
  }
  throw InvalidArgument("sparse null space needs a tessellation; use CpaBasis");
}

CpaBasis::CpaBasis(const Tessellation& tess, BasisMethod method, bool zero_boundary)
    : tess_(tess), method_(method), zero_boundary_(zero_boundary) {
  if (zero_boundary && tess.n_cells() < 2) {
    throw InvalidArgument("a zero-boundary basis needs at least two cells");
  }
  matrix_ = method == BasisMethod::Sparse ? sparse_basis(tess, zero_boundary)
                                          : null_space(constraint_matrix(tess, zero_boundary), method);
  if (matrix_.cols() != expected_dim(tess, zero_boundary)) {
    throw InternalError("basis dimension " + std::to_string(matrix_.cols()) + " does not match " +
                        std::to_string(expected_dim(tess, zero_boundary)));
  }
  finalize();
}

CpaBasis::CpaBasis(const Tessellation& tess, BasisMethod method, bool zero_boundary,
                   Eigen::MatrixXd matrix, bool validate)
    : tess_(tess), method_(method), zero_boundary_(zero_boundary), matrix_(std::move(matrix)) {
  if (validate) {
    if (matrix_.rows() != 2 * tess.n_cells() || matrix_.cols() != expected_dim(tess, zero_boundary)) {
      throw InvalidArgument("basis matrix has shape " + std::to_string(matrix_.rows()) + "x" +
                            std::to_string(matrix_.cols()) + ", expected " +
                            std::to_string(2 * tess.n_cells()) + "x" +
                            std::to_string(expected_dim(tess, zero_boundary)));
    }
    const Eigen::MatrixXd residual = constraint_matrix(tess, zero_boundary) * matrix_;
    if (residual.size() > 0 && residual.cwiseAbs().maxCoeff() > 1e-9) {
      throw InvalidArgument("basis matrix does not satisfy the continuity constraints");
    }
  }
  finalize();
}

CpaBasis CpaBasis::from_matrix(const Tessellation& tess, BasisMethod method, bool zero_boundary,
                               Eigen::MatrixXd matrix) {
  return CpaBasis(tess, method, zero_boundary, std::move(matrix), true);
}

void CpaBasis::finalize() {
  const int n = tess_.n_cells();
  // Flush factorization noise in structurally zero entries.
  const double scale = matrix_.size() ? matrix_.cwiseAbs().maxCoeff() : 1.0;
  matrix_ = matrix_.unaryExpr([scale](double v) { return std::abs(v) < 1e-15 * scale ? 0.0 : v; });
  if (zero_boundary_) {
    // Pin the boundary rows so that v(x_min) and v(x_max) vanish bit-exactly
    // for every theta, not just to factorization roundoff.
    matrix_.row(1) = -tess_.domain().x_min * matrix_.row(0);
    matrix_.row(2 * n - 1) = -tess_.domain().x_max * matrix_.row(2 * n - 2);
    matrix_ = matrix_.unaryExpr([](double v) { return v + 0.0; });  // no negative zeros
  }

  const Eigen::MatrixXd gram = matrix_.transpose() * matrix_;
  const int d = dim();
  orthonormal_ = d == 0 || (gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= kOrthonormalTolerance;
  if (orthonormal_) {
    projector_ = matrix_.transpose();
  } else {
    projector_ = gram.ldlt().solve(matrix_.transpose());
  }
}

AffineField CpaBasis::theta_to_field(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != dim()) {
    throw InvalidArgument("theta has length " + std::to_string(theta.size()) + ", expected d = " +
                          std::to_string(dim()));
  }
  AffineField field(n_cells());
  const Eigen::Index rows = matrix_.rows();
  for (int k = 0; k < dim(); ++k) {
    const double tk = theta[k];
    if (tk == 0.0) continue;
    for (Eigen::Index r = 0; r < rows; ++r) {
      field.coeffs[r] += matrix_(r, k) * tk;
    }
  }
  return field;
}

std::vector<double> CpaBasis::field_to_theta(const AffineField& field) const {
  if (static_cast<Eigen::Index>(field.coeffs.size()) != matrix_.rows()) {
    throw InvalidArgument("field has " + std::to_string(field.coeffs.size()) +
                          " coefficients, expected " + std::to_string(matrix_.rows()));
  }
  const Eigen::Map<const Eigen::VectorXd> vec_a(field.coeffs.data(), matrix_.rows());
  const Eigen::VectorXd theta = projector_ * vec_a;
  return {theta.data(), theta.data() + theta.size()};
}

void to_json(nlohmann::json& j, const CpaBasis& basis) {
  std::vector<double> row_major;
  row_major.reserve(basis.matrix().size());
  for (Eigen::Index r = 0; r < basis.matrix().rows(); ++r) {
    for (Eigen::Index c = 0; c < basis.matrix().cols(); ++c) row_major.push_back(basis.matrix()(r, c));
  }
  j = nlohmann::json{{"n_cells", basis.n_cells()},
                     {"x_min", basis.tessellation().domain().x_min},
                     {"x_max", basis.tessellation().domain().x_max},
                     {"zero_boundary", basis.zero_boundary()},
                     {"method", to_string(basis.method())},
                     {"d", basis.dim()},
                     {"matrix", row_major}};
}

CpaBasis basis_from_json(const nlohmann::json& j) {
  const Tessellation tess = tessellation_from_json(j);
  const bool zero_boundary = j.at("zero_boundary").get<bool>();
  const BasisMethod method = parse_basis_method(j.at("method").get<std::string>());
  const int d = j.at("d").get<int>();
  const auto values = j.at("matrix").get<std::vector<double>>();
  const int rows = 2 * tess.n_cells();
  if (static_cast<int>(values.size()) != rows * d) {
    throw InvalidArgument("basis matrix has " + std::to_string(values.size()) + " entries, expected " +
                          std::to_string(rows * d));
  }
  Eigen::MatrixXd m(rows, d);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < d; ++c) m(r, c) = values[static_cast<std::size_t>(r) * d + c];
  }
  return CpaBasis::from_matrix(tess, method, zero_boundary, std::move(m));
}

Eigen::MatrixXd piecewise_affine_covariance(const Tessellation& tess, double lambda_sigma,
                                            double lambda_smooth) {
  if (!(lambda_sigma > 0.0) || !(lambda_smooth > 0.0)) {
    throw InvalidArgument("prior hyperparameters must be positive");
  }
  const int n = tess.n_cells();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const double var = lambda_sigma * lambda_sigma;
  const double denom = 2.0 * lambda_smooth * lambda_smooth;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dist = tess.center(i) - tess.center(j);
      const double k = var * std::exp(-dist * dist / denom);
      cov(2 * i, 2 * j) = k;
      cov(2 * i + 1, 2 * j + 1) = k;
    }
  }
  return cov;
}

PriorCovariance::PriorCovariance(const CpaBasis& basis, double lambda_sigma, double lambda_smooth)
    : lambda_sigma_(lambda_sigma), lambda_smooth_(lambda_smooth) {
  const Eigen::MatrixXd cov_pa =
      piecewise_affine_covariance(basis.tessellation(), lambda_sigma, lambda_smooth);
  const Eigen::MatrixXd& p = basis.projector();
  sigma_ = p * cov_pa * p.transpose();
  factorize();
}

PriorCovariance::PriorCovariance(Eigen::MatrixXd sigma)
    : lambda_sigma_(0.0), lambda_smooth_(0.0), sigma_(std::move(sigma)) {
  if (sigma_.rows() != sigma_.cols()) throw InvalidArgument("covariance matrix must be square");
  factorize();
}

void PriorCovariance::factorize() {
  sigma_ = 0.5 * (sigma_ + sigma_.transpose()).eval();
  const int d = dim();
  const double scale = d > 0 ? sigma_.diagonal().mean() : 0.0;
  if (!(scale > 0.0)) {
    degenerate_ = true;
    chol_ = Eigen::MatrixXd::Zero(d, d);
    return;
  }
  for (double rel : kJitterLadder) {
    const double jitter = rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_ + jitter * Eigen::MatrixXd::Identity(d, d));
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    if ((lower.diagonal().array() > 0.0).all() && lower.allFinite()) {
      chol_ = std::move(lower);
      jitter_ = jitter;
      return;
    }
  }
  throw NumericError("Cholesky factorization of the prior covariance failed after jitter 1e-8");
}

double PriorCovariance::quadratic_form(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != dim()) {
    throw InvalidArgument("theta has length " + std::to_string(theta.size()) + ", expected " +
                          std::to_string(dim()));
  }
  if (degenerate_) throw NumericError("prior covariance is singular");
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), dim());
  return chol_.triangularView<Eigen::Lower>().solve(t).squaredNorm();
}

Eigen::VectorXd PriorCovariance::precision_times(std::span<const double> theta) const {
  if (degenerate_) throw NumericError("prior covariance is singular");
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), dim());
  const Eigen::VectorXd y = chol_.triangularView<Eigen::Lower>().solve(t);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

std::vector<double> PriorCovariance::color(std::span<const double> z) const {
  const Eigen::Map<const Eigen::VectorXd> zv(z.data(), dim());
  const Eigen::VectorXd theta = chol_.triangularView<Eigen::Lower>() * zv;
  return {theta.data(), theta.data() + theta.size()};
}

std::vector<double> PriorCovariance::whiten(std::span<const double> theta) const {
  if (degenerate_) throw NumericError("prior covariance is singular");
  const Eigen::Map<const Eigen::VectorXd> t(theta.data(), dim());
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(t);
  return {z.data(), z.data() + z.size()};
}

std::vector<double> PriorCovariance::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(dim());
  for (double& v : z) v = normal(rng);
  if (degenerate_) return std::vector<double>(dim(), 0.0);
  return color(z);
}

std::vector<double> sample_prior(const PriorCovariance& prior, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return prior.sample(rng);
}

}  // namespace difw
