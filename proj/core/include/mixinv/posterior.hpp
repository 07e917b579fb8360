#pragma once

#include "mixinv/forward_model.hpp"
#include "mixinv/linops.hpp"

#include <limits>
#include <utility>
#include <vector>

namespace mixinv {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

/// Independent uniform priors: a box for m and an interval for t = log10 C.
struct PriorSpec {
  std::vector<std::pair<double, double>> m_box;
  std::pair<double, double> logC_range{-8.0, 2.0};

  /// [-1, 1]^q x [-8, 2].
  static PriorSpec unit_box(Eigen::Index q);

  Eigen::Index dimension() const { return static_cast<Eigen::Index>(m_box.size()) + 1; }
  void validate() const;
};

/// Sampled variable (m, t) with t = log10 C.
struct AugmentedState {
  Vector m;
  double t = 0.0;

  double C() const;
  /// (m, t) stacked into one vector of length q + 1.
  Vector packed() const;
  static AugmentedState unpack(const Vector& x);
};

struct PosteriorSettings {
  SolverSettings solver;
  double rel_threshold = kDefaultRelThreshold;
};

/// Log of the unnormalized posterior at one state, with the pieces it was built from.
struct DensityEval {
  double log_density = kLogZero;
  Vector g_min;
  double resid_sq = 0.0;      ///< ||u - A_m g_min||^2
  double reg_sq = 0.0;        ///< ||R g_min||^2
  double sigma_max_sq = 0.0;  ///< (C reg_sq + resid_sq) / n
  SpectralSummary spectrum;

  bool finite() const { return log_density > kLogZero; }
};

/// 0 inside the prior box, -inf outside. Uniform in (m, t) coordinates.
double log_prior(const AugmentedState& state, const PriorSpec& prior);

/// Noise level maximizing the marginal likelihood of u for fixed (m, C).
double sigma_max_sq(double C, double reg_sq, double resid_sq, Eigen::Index n);

/// Natural log of
///   det(C^{-1} B'B + I)^{-1/2} (C ||R g_min||^2 + ||u - A_m g_min||^2)^{-n/2} rho_pr(m, C).
///
/// States outside the prior box, or at which the model geometry is not
/// admissible, return -inf without touching the forward model. Throws
/// ZeroDataError when u is identically zero.
DensityEval log_unnormalized_posterior(const AugmentedState& state, const Observation& obs,
                                       const ForwardModel& model, const PriorSpec& prior,
                                       const PosteriorSettings& settings = {});

/// u'(I - B B^#) u / det(I - B B^#)^{1/n}; the determinant comes from the spectrum.
double ml_ratio(const WhitenedOperator& B, const SpectralSummary& spectrum, double C,
                const Vector& u, const SolverSettings& settings = {});

/// Dense log of the marginal density of u given (sigma, m, C), g integrated out:
///   (2 pi sigma^2)^{-n/2} det(C R'R)^{1/2} det(A'A + C R'R)^{-1/2}
///     exp(-(C ||R g_min||^2 + ||u - A g_min||^2) / (2 sigma^2)).
double log_marginal_likelihood(const LinearOperator& A, const RegularizerMatrix& R, double C,
                               double sigma, const Vector& u);

struct QuadratureCheck {
  double closed_form;
  double quadrature;
};

/// Integral over g of exp(-C||Rg||^2 / 2 sigma^2 - ||u - Ag||^2 / 2 sigma^2):
/// closed Gaussian form against tensor-grid trapezoid quadrature (p <= 2).
QuadratureCheck quadrature_marginal_oracle(const LinearOperator& A, const RegularizerMatrix& R,
                                           double C, double sigma, const Vector& u,
                                           int nodes_per_dim = 401);

}  // namespace mixinv
