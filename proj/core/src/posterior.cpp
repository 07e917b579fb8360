#include "mixinv/posterior.hpp"

#include "mixinv/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <string>

namespace mixinv {

PriorSpec PriorSpec::unit_box(Eigen::Index q) {
  PriorSpec prior;
  prior.m_box.assign(static_cast<std::size_t>(q), {-1.0, 1.0});
  return prior;
}

void PriorSpec::validate() const {
  for (std::size_t k = 0; k < m_box.size(); ++k) {
    if (!(m_box[k].first < m_box[k].second)) {
      throw std::invalid_argument("PriorSpec: empty interval for m coordinate " + std::to_string(k));
    }
  }
  if (!(logC_range.first < logC_range.second)) {
    throw std::invalid_argument("PriorSpec: empty log10 C interval");
  }
}

double AugmentedState::C() const { return std::pow(10.0, t); }

Vector AugmentedState::packed() const {
  Vector x(m.size() + 1);
  x.head(m.size()) = m;
  x(m.size()) = t;
  return x;
}

AugmentedState AugmentedState::unpack(const Vector& x) {
  if (x.size() < 1) {
    throw std::invalid_argument("AugmentedState::unpack: empty vector");
  }
  return {x.head(x.size() - 1), x(x.size() - 1)};
}

double log_prior(const AugmentedState& state, const PriorSpec& prior) {
  if (state.m.size() != static_cast<Eigen::Index>(prior.m_box.size())) {
    throw std::invalid_argument("log_prior: state and prior dimensions differ");
  }
  if (!std::isfinite(state.t) || state.t < prior.logC_range.first ||
      state.t > prior.logC_range.second) {
    return kLogZero;
  }
  for (Eigen::Index k = 0; k < state.m.size(); ++k) {
    const auto [lo, hi] = prior.m_box[static_cast<std::size_t>(k)];
    const double v = state.m(k);
    if (!std::isfinite(v) || v < lo || v > hi) {
      return kLogZero;
    }
  }
  return 0.0;
}

double sigma_max_sq(double C, double reg_sq, double resid_sq, Eigen::Index n) {
  if (n < 1) {
    throw std::invalid_argument("sigma_max_sq: n must be positive");
  }
  return (C * reg_sq + resid_sq) / static_cast<double>(n);
}

DensityEval log_unnormalized_posterior(const AugmentedState& state, const Observation& obs,
                                       const ForwardModel& model, const PriorSpec& prior,
                                       const PosteriorSettings& settings) {
  if (obs.u.size() != model.measurement_count()) {
    throw std::invalid_argument("log_unnormalized_posterior: data has " +
                                std::to_string(obs.u.size()) + " entries, model expects " +
                                std::to_string(model.measurement_count()));
  }
  if (obs.u.isZero(0.0)) {
    throw ZeroDataError("log_unnormalized_posterior: u = 0, noise maximization is undefined");
  }
  DensityEval eval;
  const double log_pr = log_prior(state, prior);
  if (log_pr == kLogZero || !model.admissible(state.m)) {
    return eval;
  }

  const double C = state.C();
  const LinearOperator A = model.assemble(state.m);
  const RegularizerMatrix& R = model.regularizer();
  const WhitenedOperator B = whiten_operator(A, R);
  eval.spectrum = truncated_singular_values(B, settings.rel_threshold);

  // Solve in h = R g, where the normal operator is B'B + C I.
  const Vector h = solve_whitened(B, C, obs.u, settings.solver);
  eval.g_min = R.solve(h);
  eval.resid_sq = (obs.u - A.matrix() * eval.g_min).squaredNorm();
  eval.reg_sq = R.apply(eval.g_min).squaredNorm();

  const Eigen::Index n = obs.u.size();
  const double energy = C * eval.reg_sq + eval.resid_sq;
  eval.sigma_max_sq = energy / static_cast<double>(n);
  eval.log_density = log_det_whitened(eval.spectrum, C) -
                     0.5 * static_cast<double>(n) * std::log(energy) + log_pr;
  return eval;
}

double ml_ratio(const WhitenedOperator& B, const SpectralSummary& spectrum, double C,
                const Vector& u, const SolverSettings& settings) {
  if (u.isZero(0.0)) {
    throw ZeroDataError("ml_ratio: u = 0");
  }
  const InfluenceTerms terms = influence_residual(B, spectrum, C, u, settings);
  // log det(I - B B^#) = -sum log(1 + s^2 / C) = 2 log_det_whitened.
  const double log_det = 2.0 * log_det_whitened(spectrum, C);
  return terms.quad_form * std::exp(-log_det / static_cast<double>(u.size()));
}

namespace {

Matrix dense_regularizer(const RegularizerMatrix& R) { return Matrix(R.matrix()); }

struct DenseTikhonov {
  Matrix hessian;  // A'A + C R'R
  Vector g_min;
  double energy;   // C ||R g_min||^2 + ||u - A g_min||^2
};

DenseTikhonov dense_tikhonov(const LinearOperator& A, const RegularizerMatrix& R, double C,
                             const Vector& u) {
  const Matrix r = dense_regularizer(R);
  DenseTikhonov out;
  out.hessian = A.matrix().transpose() * A.matrix() + C * r.transpose() * r;
  out.g_min = out.hessian.ldlt().solve(A.matrix().transpose() * u);
  out.energy = C * (r * out.g_min).squaredNorm() + (u - A.matrix() * out.g_min).squaredNorm();
  return out;
}

double log_det_spd(const Matrix& M) {
  const Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("log_det_spd: matrix is not positive definite");
  }
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double log_marginal_likelihood(const LinearOperator& A, const RegularizerMatrix& R, double C,
                               double sigma, const Vector& u) {
  if (A.cols() > kDenseOracleLimit || A.rows() > kDenseOracleLimit) {
    throw DimensionError("log_marginal_likelihood: dense path limited to 64 x 64");
  }
  if (!(C > 0.0) || !(sigma > 0.0)) {
    throw std::invalid_argument("log_marginal_likelihood: C and sigma must be positive");
  }
  const DenseTikhonov t = dense_tikhonov(A, R, C, u);
  const Matrix r = dense_regularizer(R);
  const double n = static_cast<double>(u.size());
  const double s2 = sigma * sigma;
  return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) +
         0.5 * log_det_spd(C * r.transpose() * r) - 0.5 * log_det_spd(t.hessian) -
         t.energy / (2.0 * s2);
}

QuadratureCheck quadrature_marginal_oracle(const LinearOperator& A, const RegularizerMatrix& R,
                                           double C, double sigma, const Vector& u,
                                           int nodes_per_dim) {
  const Eigen::Index p = A.cols();
  if (p < 1 || p > 2) {
    throw DimensionError("quadrature_marginal_oracle: grid quadrature needs p <= 2");
  }
  if (nodes_per_dim < 3) {
    throw std::invalid_argument("quadrature_marginal_oracle: need at least 3 nodes per dimension");
  }
  const DenseTikhonov t = dense_tikhonov(A, R, C, u);
  const double s2 = sigma * sigma;
  const Matrix precision = t.hessian / s2;

  const double closed_form =
      std::exp(-t.energy / (2.0 * s2)) *
      std::pow((precision / (2.0 * std::numbers::pi)).determinant(), -0.5);

  // Integrand evaluated from its definition; only the box placement uses g_min.
  const Matrix r = dense_regularizer(R);
  const auto integrand = [&](const Vector& g) {
    const double e = C * (r * g).squaredNorm() + (u - A.matrix() * g).squaredNorm();
    return std::exp(-e / (2.0 * s2));
  };
  const Matrix covariance = precision.inverse();
  std::vector<Vector> axes;
  std::vector<double> steps;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double half_width = 10.0 * std::sqrt(covariance(k, k));
    axes.push_back(Vector::LinSpaced(nodes_per_dim, t.g_min(k) - half_width, t.g_min(k) + half_width));
    steps.push_back(2.0 * half_width / (nodes_per_dim - 1));
  }
  const auto trapezoid_weight = [&](int i) { return (i == 0 || i == nodes_per_dim - 1) ? 0.5 : 1.0; };

  double sum = 0.0;
  Vector g(p);
  if (p == 1) {
    for (int i = 0; i < nodes_per_dim; ++i) {
      g(0) = axes[0](i);
      sum += trapezoid_weight(i) * integrand(g);
    }
    sum *= steps[0];
  } else {
    for (int i = 0; i < nodes_per_dim; ++i) {
      g(0) = axes[0](i);
      for (int j = 0; j < nodes_per_dim; ++j) {
        g(1) = axes[1](j);
        sum += trapezoid_weight(i) * trapezoid_weight(j) * integrand(g);
      }
    }
    sum *= steps[0] * steps[1];
  }
  return {closed_form, sum};
}

}  // namespace mixinv
