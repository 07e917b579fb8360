#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <vector>

namespace mixinv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Dense oracles refuse to run above this dimension.
inline constexpr Eigen::Index kDenseOracleLimit = 64;

/// Dense n x p forward operator A_m.
class LinearOperator {
 public:
  explicit LinearOperator(Matrix entries);

  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  const Matrix& matrix() const { return entries_; }

 private:
  Matrix entries_;
};

/// Sparse square regularizer R with a cached LU factorization of R and R'.
///
/// Construction certifies invertibility; the factorizations are shared and
/// immutable, so copies are cheap and safe to use from several threads.
class RegularizerMatrix {
 public:
  explicit RegularizerMatrix(SparseMatrix matrix);

  Eigen::Index size() const { return matrix_.rows(); }
  Eigen::Index nonzeros() const { return matrix_.nonZeros(); }
  const SparseMatrix& matrix() const { return matrix_; }

  /// Estimate of the smallest singular value computed during certification.
  double smallest_singular_value() const { return sigma_min_; }

  Vector apply(const Vector& g) const { return matrix_ * g; }
  Vector apply_transpose(const Vector& v) const { return matrix_.transpose() * v; }

  /// R^{-1} h
  Vector solve(const Vector& h) const;
  /// R'^{-1} v
  Vector solve_transpose(const Vector& v) const;
  /// R'^{-1} X, column by column.
  Matrix solve_transpose(const Matrix& rhs) const;

 private:
  struct Factors;

  SparseMatrix matrix_;
  std::shared_ptr<const Factors> factors_;
  double sigma_min_ = 0.0;
};

/// B = A R^{-1}.
struct WhitenedOperator {
  Matrix matrix;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

/// Descending singular values of B above rel_threshold * s_1.
struct SpectralSummary {
  std::vector<double> singular_values;
  double rel_threshold = 1e-10;

  std::size_t rank() const { return singular_values.size(); }
};

/// Truncated SVD carrying the left singular vectors (n x r) as well.
struct SpectralDecomposition {
  SpectralSummary summary;
  Matrix left_vectors;
};

struct SolverSettings {
  double tol = 1e-10;
  /// Zero selects 10 * (number of unknowns).
  int max_iter = 0;
};

inline constexpr double kDefaultRelThreshold = 1e-10;

WhitenedOperator whiten_operator(const LinearOperator& A, const RegularizerMatrix& R);

/// Minimizer of ||A g - u||^2 + C ||R g||^2.
///
/// Preconditioned conjugate gradient on (A'A + C R'R) g = A'u. The operator
/// is applied as a composition of A, A', R, R' products and the preconditioner
/// (R'R)^{-1} reuses the cached factorization of R; no p x p matrix is formed.
/// Throws NonConvergenceError when the relative normal-equation residual
/// stays above settings.tol.
Vector solve_gmin(const LinearOperator& A, const RegularizerMatrix& R, double C, const Vector& u,
                  const SolverSettings& settings = {});

/// Solves (B'B + C I) x = B'u by conjugate gradient, applying B and B' only.
Vector solve_whitened(const WhitenedOperator& B, double C, const Vector& u,
                      const SolverSettings& settings = {});

SpectralSummary truncated_singular_values(const WhitenedOperator& B,
                                          double rel_threshold = kDefaultRelThreshold);

SpectralDecomposition truncated_svd(const WhitenedOperator& B,
                                    double rel_threshold = kDefaultRelThreshold);

/// -1/2 sum_j log(1 + s_j^2 / C) = -1/2 log det(C^{-1} B'B + I).
double log_det_whitened(const SpectralSummary& spectrum, double C);

/// Three dense evaluations of the same determinant:
///   d1 = det(C^{-1} B'B + I)^{-1}
///   d2 = det(I - B'B (B'B + C I)^{-1})
///   d3 = det(I - B (B'B + C I)^{-1} B')
struct DeterminantTriple {
  double d1;
  double d2;
  double d3;
};

/// Dense path, refuses dimensions above kDenseOracleLimit.
DeterminantTriple dense_det_oracle(const Matrix& B, double C);

/// Terms of the influence operator I - B B^#, with B^# = (B'B + C I)^{-1} B'.
struct InfluenceTerms {
  double quad_form;         ///< u'(I - B B^#) u
  double trace;             ///< tr(I - B B^#)
  double residual_norm_sq;  ///< ||(I - B B^#) u||^2
};

InfluenceTerms influence_residual(const WhitenedOperator& B, const SpectralSummary& spectrum,
                                  double C, const Vector& u, const SolverSettings& settings = {});

}  // namespace mixinv
