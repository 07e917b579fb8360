#include "mixinv/linops.hpp"

#include "mixinv/errors.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <string>

namespace mixinv {

namespace {

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

int resolve_max_iter(const SolverSettings& settings, Eigen::Index unknowns) {
  return settings.max_iter > 0 ? settings.max_iter : static_cast<int>(10 * std::max<Eigen::Index>(unknowns, 1));
}

// Preconditioned CG from a zero initial guess. The recursive residual is
// confirmed against the true residual before returning; on disagreement the
// iteration restarts from the current iterate.
template <class Op, class Prec>
Vector conjugate_gradient(const Op& op, const Prec& prec, const Vector& rhs, double tol,
                          int max_iter) {
  Vector x = Vector::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    return x;
  }
  Vector r = rhs;
  int iterations = 0;
  for (;;) {
    Vector z = prec(r);
    Vector dir = z;
    double rz = r.dot(z);
    while (iterations < max_iter && r.norm() > tol * rhs_norm) {
      const Vector q = op(dir);
      const double curvature = dir.dot(q);
      if (!(curvature > 0.0)) {
        break;
      }
      const double alpha = rz / curvature;
      x.noalias() += alpha * dir;
      r.noalias() -= alpha * q;
      ++iterations;
      z = prec(r);
      const double rz_next = r.dot(z);
      dir = z + (rz_next / rz) * dir;
      rz = rz_next;
    }
    r = rhs - op(x);
    const double rel = r.norm() / rhs_norm;
    if (rel <= tol) {
      return x;
    }
    if (iterations >= max_iter || !std::isfinite(rel)) {
      throw NonConvergenceError(iterations, rel);
    }
  }
}

void check_positive(double C, const char* what) {
  if (!(C > 0.0) || !std::isfinite(C)) {
    throw std::invalid_argument(std::string(what) + ": regularization constant must be positive");
  }
}

}  // namespace

LinearOperator::LinearOperator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw std::invalid_argument("LinearOperator: empty matrix");
  }
  if (!entries_.allFinite()) {
    throw std::invalid_argument("LinearOperator: non-finite entries");
  }
}

struct RegularizerMatrix::Factors {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_transpose;
};

RegularizerMatrix::RegularizerMatrix(SparseMatrix matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() < 1) {
    throw std::invalid_argument("RegularizerMatrix: matrix must be square and non-empty");
  }
  matrix_.makeCompressed();

  auto factors = std::make_shared<Factors>();
  factors->lu.compute(matrix_);
  if (factors->lu.info() != Eigen::Success) {
    throw SingularRegularizerError("RegularizerMatrix: LU factorization failed (singular matrix)");
  }
  SparseMatrix transposed = matrix_.transpose();
  transposed.makeCompressed();
  factors->lu_transpose.compute(transposed);
  if (factors->lu_transpose.info() != Eigen::Success) {
    throw SingularRegularizerError("RegularizerMatrix: LU factorization of R' failed");
  }
  factors_ = std::move(factors);

  // Inverse power iteration on (R'R)^{-1}: its dominant eigenvalue is 1 / s_min^2.
  const Eigen::Index p = size();
  Vector x = Vector::LinSpaced(p, 1.0, 2.0);
  x.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vector y = solve(solve_transpose(x));
    const double next = y.norm();
    if (!std::isfinite(next)) {
      throw SingularRegularizerError("RegularizerMatrix: inverse iteration diverged");
    }
    x = y / next;
    const bool settled = std::abs(next - lambda) <= 1e-12 * next;
    lambda = next;
    if (settled) {
      break;
    }
  }
  sigma_min_ = 1.0 / std::sqrt(lambda);
  double scale = 0.0;
  for (int k = 0; k < matrix_.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(matrix_, k); it; ++it) {
      scale = std::max(scale, std::abs(it.value()));
    }
  }
  if (!(sigma_min_ > 1e-14 * scale)) {
    throw SingularRegularizerError("RegularizerMatrix: smallest singular value estimate " +
                                   std::to_string(sigma_min_) + " is numerically zero");
  }
}

Vector RegularizerMatrix::solve(const Vector& h) const { return factors_->lu.solve(h); }

Vector RegularizerMatrix::solve_transpose(const Vector& v) const {
  return factors_->lu_transpose.solve(v);
}

Matrix RegularizerMatrix::solve_transpose(const Matrix& rhs) const {
  return factors_->lu_transpose.solve(rhs);
}

WhitenedOperator whiten_operator(const LinearOperator& A, const RegularizerMatrix& R) {
  if (A.cols() != R.size()) {
    throw std::invalid_argument("whiten_operator: A has " + std::to_string(A.cols()) +
                                " columns but R is " + std::to_string(R.size()) + " square");
  }
  // B' = R'^{-1} A'
  Matrix At = A.matrix().transpose();
  return WhitenedOperator{R.solve_transpose(At).transpose()};
}

Vector solve_gmin(const LinearOperator& A, const RegularizerMatrix& R, double C, const Vector& u,
                  const SolverSettings& settings) {
  check_positive(C, "solve_gmin");
  if (u.size() != A.rows() || A.cols() != R.size()) {
    throw std::invalid_argument("solve_gmin: dimension mismatch");
  }
  const Matrix& a = A.matrix();
  const auto normal_op = [&](const Vector& g) -> Vector {
    Vector out = a.transpose() * (a * g);
    out.noalias() += C * R.apply_transpose(R.apply(g));
    return out;
  };
  // (R'R)^{-1} r, scaled so the preconditioned operator tends to I as A -> 0.
  const auto precondition = [&](const Vector& r) -> Vector {
    return R.solve(R.solve_transpose(r)) / C;
  };
  const Vector rhs = a.transpose() * u;
  return conjugate_gradient(normal_op, precondition, rhs, settings.tol,
                            resolve_max_iter(settings, A.cols()));
}

Vector solve_whitened(const WhitenedOperator& B, double C, const Vector& u,
                      const SolverSettings& settings) {
  check_positive(C, "solve_whitened");
  if (u.size() != B.rows()) {
    throw std::invalid_argument("solve_whitened: dimension mismatch");
  }
  const Matrix& b = B.matrix;
  const auto normal_op = [&](const Vector& x) -> Vector {
    Vector out = b.transpose() * (b * x);
    out.noalias() += C * x;
    return out;
  };
  const auto identity = [](const Vector& r) -> const Vector& { return r; };
  const Vector rhs = b.transpose() * u;
  return conjugate_gradient(normal_op, identity, rhs, settings.tol,
                            resolve_max_iter(settings, B.cols()));
}

namespace {

template <class Svd>
std::size_t count_above(const Svd& svd, double rel_threshold) {
  const auto& values = svd.singularValues();
  if (values.size() == 0 || !(values(0) > 0.0)) {
    return 0;
  }
  const double cutoff = rel_threshold * values(0);
  std::size_t r = 0;
  while (r < static_cast<std::size_t>(values.size()) && values(static_cast<Eigen::Index>(r)) > cutoff) {
    ++r;
  }
  return r;
}

void check_threshold(double rel_threshold) {
  if (!(rel_threshold > 0.0 && rel_threshold < 1.0)) {
    throw std::invalid_argument("truncated_singular_values: rel_threshold must lie in (0, 1)");
  }
}

}  // namespace

SpectralSummary truncated_singular_values(const WhitenedOperator& B, double rel_threshold) {
  check_threshold(rel_threshold);
  Eigen::BDCSVD<Matrix> svd(B.matrix);
  const std::size_t r = count_above(svd, rel_threshold);
  SpectralSummary out;
  out.rel_threshold = rel_threshold;
  out.singular_values.assign(svd.singularValues().data(), svd.singularValues().data() + r);
  return out;
}

SpectralDecomposition truncated_svd(const WhitenedOperator& B, double rel_threshold) {
  check_threshold(rel_threshold);
  Eigen::BDCSVD<Matrix> svd(B.matrix, Eigen::ComputeThinU);
  const std::size_t r = count_above(svd, rel_threshold);
  SpectralDecomposition out;
  out.summary.rel_threshold = rel_threshold;
  out.summary.singular_values.assign(svd.singularValues().data(),
                                     svd.singularValues().data() + r);
  out.left_vectors = svd.matrixU().leftCols(static_cast<Eigen::Index>(r));
  return out;
}

double log_det_whitened(const SpectralSummary& spectrum, double C) {
  check_positive(C, "log_det_whitened");
  double sum = 0.0;
  for (double s : spectrum.singular_values) {
    sum += std::log1p(s * s / C);
  }
  return -0.5 * sum;
}

DeterminantTriple dense_det_oracle(const Matrix& B, double C) {
  check_positive(C, "dense_det_oracle");
  if (B.rows() > kDenseOracleLimit || B.cols() > kDenseOracleLimit) {
    throw DimensionError("dense_det_oracle: dimensions exceed the dense oracle limit");
  }
  // Extended precision keeps the cancellation in I - B'B(B'B + CI)^{-1} harmless.
  const LongMatrix b = B.cast<long double>();
  const long double c = C;
  const Eigen::Index p = b.cols();
  const Eigen::Index n = b.rows();
  const LongMatrix gram = b.transpose() * b;
  const LongMatrix Ip = LongMatrix::Identity(p, p);
  const LongMatrix In = LongMatrix::Identity(n, n);
  const LongMatrix shifted_inv = (gram + c * Ip).inverse();

  const long double d1 = 1.0L / (gram / c + Ip).determinant();
  const long double d2 = (Ip - gram * shifted_inv).determinant();
  const long double d3 = (In - b * shifted_inv * b.transpose()).determinant();
  return {static_cast<double>(d1), static_cast<double>(d2), static_cast<double>(d3)};
}

InfluenceTerms influence_residual(const WhitenedOperator& B, const SpectralSummary& spectrum,
                                  double C, const Vector& u, const SolverSettings& settings) {
  check_positive(C, "influence_residual");
  const Vector x = solve_whitened(B, C, u, settings);
  const Vector residual = u - B.matrix * x;
  double trace = static_cast<double>(B.rows());
  for (double s : spectrum.singular_values) {
    trace -= s * s / (s * s + C);
  }
  return {u.dot(residual), trace, residual.squaredNorm()};
}

}  // namespace mixinv
