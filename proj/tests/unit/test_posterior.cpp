#include "mixinv/errors.hpp"
#include "mixinv/posterior.hpp"
#include "testing_util.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace mixinv;
using mixinv::testing::AffineModel;
using mixinv::testing::Gen;
using mixinv::testing::identity_regularizer;
using mixinv::testing::rel_diff;

namespace {

Observation observe(Vector u) { return Observation{std::move(u), std::nullopt, "test"}; }

}  // namespace

TEST(LogPrior, InteriorAndOutside) {
  const PriorSpec prior = PriorSpec::unit_box(3);
  EXPECT_EQ(log_prior({Vector::Zero(3), -3.0}, prior), 0.0);
  EXPECT_EQ(log_prior({Vector::Zero(3), 3.0}, prior), kLogZero);
  EXPECT_EQ(log_prior({Vector::Unit(3, 0) * 1.5, -3.0}, prior), kLogZero);
  EXPECT_EQ(log_prior({Vector::Zero(3), -8.0}, prior), 0.0);
  EXPECT_EQ(log_prior({Vector::Constant(3, 1.0), 2.0}, prior), 0.0);
}

TEST(PriorSpec, ValidateRejectsEmptyIntervals) {
  PriorSpec prior = PriorSpec::unit_box(2);
  EXPECT_NO_THROW(prior.validate());
  prior.m_box[1] = {0.5, 0.5};
  EXPECT_THROW(prior.validate(), std::invalid_argument);
}

TEST(AugmentedState, PackRoundTrip) {
  const AugmentedState s{Vector::LinSpaced(3, -1.0, 1.0), -2.5};
  const AugmentedState back = AugmentedState::unpack(s.packed());
  EXPECT_EQ(back.m, s.m);
  EXPECT_EQ(back.t, s.t);
  EXPECT_NEAR(s.C(), std::pow(10.0, -2.5), 1e-18);
}

TEST(SigmaMaxSq, Arithmetic) {
  EXPECT_EQ(sigma_max_sq(1.0, 0.0, 0.0, 3), 0.0);
  EXPECT_DOUBLE_EQ(sigma_max_sq(3.0, 1.0, 1.0, 4), 1.0);
}

// Property: Eq. for the marginal over sigma peaks at the closed form.
TEST(SigmaMaxSq, GridMaximizationProperty) {
  Gen gen(21);
  const std::vector<double> sigmas = [] {
    std::vector<double> s(400);
    for (int i = 0; i < 400; ++i) s[static_cast<std::size_t>(i)] = std::pow(10.0, -3.0 + 6.0 * i / 399.0);
    return s;
  }();
  const double step = std::pow(10.0, 6.0 / 399.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = gen.integer(3, 8);
    const Eigen::Index p = gen.integer(2, 8);
    const LinearOperator A(gen.matrix(n, p));
    const RegularizerMatrix R = gen.tridiagonal(p);
    const double C = std::pow(10.0, gen.uniform(-2.0, 1.0));
    const Vector u = gen.vector(n) * gen.uniform(0.1, 10.0);

    double best = -std::numeric_limits<double>::infinity(), best_sigma = 0.0;
    for (double s : sigmas) {
      const double v = log_marginal_likelihood(A, R, C, s, u);
      if (v > best) { best = v; best_sigma = s; }
    }
    // Closed form from an independent dense solve.
    const Matrix Rd = Matrix(R.matrix());
    const Vector g = (A.matrix().transpose() * A.matrix() + C * Rd.transpose() * Rd)
                         .ldlt().solve(A.matrix().transpose() * u);
    const double closed = std::sqrt(sigma_max_sq(C, (Rd * g).squaredNorm(),
                                                 (u - A.matrix() * g).squaredNorm(), n));
    EXPECT_LE(std::max(best_sigma / closed, closed / best_sigma), step * (1.0 + 1e-12)) << trial;
  }
}

TEST(LogUnnormalizedPosterior, PriorGateSkipsAssembly) {
  Gen gen(22);
  AffineModel model({gen.matrix(3, 4), gen.matrix(3, 4)}, gen.tridiagonal(4));
  const PriorSpec prior = PriorSpec::unit_box(1);
  const DensityEval e = log_unnormalized_posterior({Vector::Constant(1, 2.0), -1.0}, observe(gen.vector(3)),
                                                   model, prior);
  EXPECT_EQ(e.log_density, kLogZero);
  EXPECT_FALSE(e.finite());
  EXPECT_EQ(model.assemblies(), 0);
}

TEST(LogUnnormalizedPosterior, InadmissibleGeometryIsZeroDensity) {
  Gen gen(23);
  AffineModel model({gen.matrix(3, 4), gen.matrix(3, 4)}, gen.tridiagonal(4), 0.5);
  const DensityEval e = log_unnormalized_posterior({Vector::Constant(1, 0.7), -1.0}, observe(gen.vector(3)),
                                                   model, PriorSpec::unit_box(1));
  EXPECT_EQ(e.log_density, kLogZero);
  EXPECT_EQ(model.assemblies(), 0);
}

TEST(LogUnnormalizedPosterior, ZeroDataIsRejected) {
  Gen gen(24);
  AffineModel model({gen.matrix(3, 4), gen.matrix(3, 4)}, gen.tridiagonal(4));
  EXPECT_THROW(log_unnormalized_posterior({Vector::Zero(1), 0.0}, observe(Vector::Zero(3)), model,
                                          PriorSpec::unit_box(1)),
               ZeroDataError);
}

TEST(LogUnnormalizedPosterior, Purity) {
  Gen gen(25);
  AffineModel model({gen.matrix(6, 10), gen.matrix(6, 10)}, gen.tridiagonal(10));
  const Observation obs = observe(gen.vector(6));
  const AugmentedState s{Vector::Constant(1, 0.3), -1.7};
  const DensityEval a = log_unnormalized_posterior(s, obs, model, PriorSpec::unit_box(1));
  const DensityEval b = log_unnormalized_posterior(s, obs, model, PriorSpec::unit_box(1));
  EXPECT_EQ(a.log_density, b.log_density);
  EXPECT_EQ(a.g_min, b.g_min);
  EXPECT_EQ(a.resid_sq, b.resid_sq);
  EXPECT_EQ(a.reg_sq, b.reg_sq);
  EXPECT_EQ(a.sigma_max_sq, b.sigma_max_sq);
  EXPECT_EQ(a.spectrum.singular_values, b.spectrum.singular_values);
}

TEST(LogUnnormalizedPosterior, MatchesDenseComposition) {
  Gen gen(26);
  const Matrix A0 = gen.matrix(3, 2), A1 = gen.matrix(3, 2);
  const RegularizerMatrix R = gen.tridiagonal(2);
  AffineModel model({A0, A1}, R);
  const Vector u = gen.vector(3);
  const AugmentedState s{Vector::Constant(1, -0.4), -0.6};
  const DensityEval e = log_unnormalized_posterior(s, observe(u), model, PriorSpec::unit_box(1));

  const Matrix A = A0 - 0.4 * A1;
  const Matrix Rd = Matrix(R.matrix());
  const Matrix B = A * Rd.inverse();
  const double C = std::pow(10.0, -0.6);
  const Vector g = (A.transpose() * A + C * Rd.transpose() * Rd).ldlt().solve(A.transpose() * u);
  const double energy = C * (Rd * g).squaredNorm() + (u - A * g).squaredNorm();
  const double oracle = std::sqrt(dense_det_oracle(B, C).d1) * std::pow(energy, -1.5);
  EXPECT_LT(rel_diff(std::exp(e.log_density), oracle), 1e-8);
  EXPECT_NEAR(e.sigma_max_sq, energy / 3.0, 1e-12 * energy);
}

// Property: -inf exactly outside the prior box.
TEST(LogUnnormalizedPosterior, GateProperty) {
  Gen gen(27);
  AffineModel model({gen.matrix(4, 5), gen.matrix(4, 5), gen.matrix(4, 5)}, gen.tridiagonal(5));
  PriorSpec prior = PriorSpec::unit_box(2);
  prior.m_box[1] = {-0.5, 0.25};
  const Observation obs = observe(gen.vector(4));
  for (int trial = 0; trial < 200; ++trial) {
    const AugmentedState s{Vector{{gen.uniform(-1.5, 1.5), gen.uniform(-1.0, 1.0)}}, gen.uniform(-10.0, 4.0)};
    const bool inside = log_prior(s, prior) == 0.0;
    EXPECT_EQ(log_unnormalized_posterior(s, obs, model, prior).finite(), inside) << trial;
  }
}

TEST(LogUnnormalizedPosterior, LargeCLimit) {
  Gen gen(28);
  const Matrix A0 = gen.matrix(5, 7);
  AffineModel model({A0, Matrix::Zero(5, 7)}, gen.tridiagonal(7));
  const Vector u = gen.vector(5);
  PriorSpec prior = PriorSpec::unit_box(1);
  prior.logC_range = {-8.0, 13.0};
  const double limit = -2.5 * std::log(u.squaredNorm());
  double previous_gap = std::numeric_limits<double>::infinity();
  for (double t : {4.0, 6.0, 8.0, 10.0, 12.0}) {
    const DensityEval e = log_unnormalized_posterior({Vector::Zero(1), t}, observe(u), model, prior);
    const double gap = std::abs(e.log_density - limit);
    EXPECT_LT(gap, previous_gap);
    previous_gap = gap;
    if (t == 12.0) {
      EXPECT_LT(e.g_min.norm(), 1e-9 * u.norm());
      EXPECT_GT(log_det_whitened(e.spectrum, 1e12), -1e-9);
      EXPECT_LT(gap, 1e-9);
    }
  }
}

TEST(MlRatio, ZeroOperator) {
  const WhitenedOperator B{Matrix::Zero(3, 4)};
  const Vector u{{1.0, -2.0, 0.5}};
  EXPECT_NEAR(ml_ratio(B, truncated_singular_values(B), 0.3, u), u.squaredNorm(), 1e-14);
}

TEST(MlRatio, HomogeneousOfDegreeTwo) {
  Gen gen(29);
  const WhitenedOperator B{gen.matrix(5, 8)};
  const SpectralSummary s = truncated_singular_values(B);
  const Vector u = gen.vector(5);
  EXPECT_LT(rel_diff(ml_ratio(B, s, 0.2, 2.0 * u), 4.0 * ml_ratio(B, s, 0.2, u)), 1e-12);
}

TEST(MlRatio, MatchesDenseFormula) {
  Gen gen(30);
  const Matrix B = gen.matrix(5, 8);
  const Vector u = gen.vector(5);
  const double C = 0.05;
  const Matrix M = Matrix::Identity(5, 5) - B * mixinv::testing::dense_pinv(B, C);
  const double oracle = u.dot(M * u) / std::pow(M.determinant(), 1.0 / 5.0);
  EXPECT_LT(rel_diff(ml_ratio({B}, truncated_singular_values({B}), C, u), oracle), 1e-8);
  EXPECT_THROW(ml_ratio({B}, truncated_singular_values({B}), C, Vector::Zero(5)), ZeroDataError);
}

// Property: ML argmin over a fixed grid does not move under u -> alpha u.
TEST(MlRatio, ArgminScaleInvarianceProperty) {
  Gen gen(31);
  for (int trial = 0; trial < 20; ++trial) {
    const WhitenedOperator B{dense_test_operator(100 + trial, 6, 10, 0.5).matrix()};
    const SpectralSummary s = truncated_singular_values(B);
    const Vector u = gen.vector(6);
    const double alpha = gen.uniform(-5.0, 5.0);
    int arg = -1, arg_scaled = -1;
    double best = 1e300, best_scaled = 1e300;
    for (int k = 0; k < 50; ++k) {
      const double C = std::pow(10.0, -6.0 + 0.16 * k);
      const double v = ml_ratio(B, s, C, u), vs = ml_ratio(B, s, C, alpha * u);
      if (v <= best) { best = v; arg = k; }
      if (vs <= best_scaled) { best_scaled = vs; arg_scaled = k; }
    }
    EXPECT_EQ(arg, arg_scaled) << trial;
  }
}

TEST(LogMarginalLikelihood, SizeGuardAndArguments) {
  EXPECT_THROW(log_marginal_likelihood(LinearOperator(Matrix::Ones(2, 65)), identity_regularizer(65), 1.0, 1.0,
                                       Vector::Ones(2)),
               DimensionError);
  EXPECT_THROW(log_marginal_likelihood(LinearOperator(Matrix::Ones(2, 2)), identity_regularizer(2), 1.0, 0.0,
                                       Vector::Ones(2)),
               std::invalid_argument);
}

TEST(QuadratureOracle, DecoupledGaussianWhenAIsZero) {
  const double C = 0.7, sigma = 0.4;
  const Vector u{{0.3, -0.2}};
  const RegularizerMatrix R = identity_regularizer(2, 1.5);
  const QuadratureCheck q = quadrature_marginal_oracle(LinearOperator(Matrix::Zero(2, 2)), R, C, sigma, u);
  // int exp(-C |R g|^2 / 2 sigma^2) dg = (2 pi sigma^2 / C)^{p/2} det(R'R)^{-1/2}.
  const double pure = (2.0 * std::numbers::pi * sigma * sigma / C) / (1.5 * 1.5) *
                      std::exp(-u.squaredNorm() / (2.0 * sigma * sigma));
  EXPECT_LT(rel_diff(q.closed_form, pure), 1e-12);
  EXPECT_LT(rel_diff(q.quadrature, pure), 1e-6);
}

TEST(QuadratureOracle, OneDimensional) {
  const QuadratureCheck q = quadrature_marginal_oracle(LinearOperator(Matrix::Constant(3, 1, 0.8)),
                                                       identity_regularizer(1), 0.2, 0.5,
                                                       Vector{{1.0, 0.4, -0.3}});
  EXPECT_LT(rel_diff(q.closed_form, q.quadrature), 1e-6);
}

// Property: closed form and quadrature agree for p <= 2.
TEST(QuadratureOracle, AgreementProperty) {
  Gen gen(32);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index p = gen.integer(1, 2);
    const Eigen::Index n = gen.integer(1, 5);
    const LinearOperator A(gen.matrix(n, p));
    const RegularizerMatrix R = gen.tridiagonal(p);
    const QuadratureCheck q = quadrature_marginal_oracle(A, R, std::pow(10.0, gen.uniform(-2.0, 1.0)),
                                                         gen.uniform(0.2, 2.0), gen.vector(n));
    EXPECT_LE(rel_diff(q.closed_form, q.quadrature), 1e-4) << trial;
  }
}

TEST(QuadratureOracle, DimensionGuard) {
  EXPECT_THROW(quadrature_marginal_oracle(LinearOperator(Matrix::Ones(2, 3)), identity_regularizer(3), 1.0, 1.0,
                                          Vector::Ones(2)),
               DimensionError);
}
