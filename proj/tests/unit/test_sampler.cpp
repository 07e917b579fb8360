#include "mixinv/errors.hpp"
#include "mixinv/sampler.hpp"
#include "chain_stats.hpp"
#include "testing_util.hpp"

#include <gtest/gtest.h>

using namespace mixinv;
using mixinv::testing::Gen;
using mixinv::testing::summarize_stage3;

namespace {

struct GaussianTarget {
  Vector mean{{1.0, -2.0}};
  Matrix cov{{1.0, 0.6}, {0.6, 2.0}};

  LogDensityFn density() const {
    const Matrix precision = cov.inverse();
    return [=, mu = mean](const Vector& x) {
      const Vector d = x - mu;
      return Evaluation{-0.5 * d.dot(precision * d), d(0)};
    };
  }
};

PriorSamplerFn box_prior(double half_width) {
  return [half_width](Rng& rng) {
    std::uniform_real_distribution<double> u(-half_width, half_width);
    const double a = u(rng);
    return Vector{{a, u(rng)}};
  };
}

SamplerConfig gaussian_config(int n_par) {
  SamplerConfig c;
  c.N1 = 200;
  c.N2 = 400;
  c.N3 = 20000;
  c.n_par = n_par;
  c.threads = 1;
  return c;
}

void expect_recovers(const ChainResult& chain, const GaussianTarget& target) {
  const auto s = summarize_stage3(chain);
  for (Eigen::Index k = 0; k < 2; ++k) {
    EXPECT_LE(std::abs(s.mean(k) - target.mean(k)), 3.0 * s.standard_error(k))
        << "coordinate " << k << " mean " << s.mean(k) << " se " << s.standard_error(k);
  }
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 0; j < 2; ++j)
      EXPECT_LE(std::abs(s.covariance(i, j) - target.cov(i, j)), 0.1 * std::abs(target.cov(i, j)))
          << "cov(" << i << "," << j << ") = " << s.covariance(i, j);
}

bool identical(const ChainResult& a, const ChainResult& b) {
  if (a.samples.size() != b.samples.size() || a.stage_marks != b.stage_marks ||
      a.acceptance_rate != b.acceptance_rate)
    return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (a.samples[i].x != b.samples[i].x || a.samples[i].log_density != b.samples[i].log_density ||
        a.samples[i].stage != b.samples[i].stage)
      return false;
  }
  return true;
}

}  // namespace

TEST(SamplerConfig, DefaultsAreValid) {
  const SamplerConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.N1, 200);
  EXPECT_EQ(c.N2, 400);
  EXPECT_EQ(c.N3, 4000);
  EXPECT_EQ(c.n_par, 20);
  EXPECT_DOUBLE_EQ(c.proposal_scale(4), 2.38 * 2.38 / 4.0);
}

TEST(SamplerConfig, RejectsBadStages) {
  SamplerConfig c;
  c.N2 = 150;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SamplerConfig{};
  c.N3 = 700;  // 300 < max(200, 200) fails only when not strictly larger
  c.N2 = 500;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SamplerConfig{};
  c.beta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = SamplerConfig{};
  c.n_par = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ProposeGaussian, DegenerateCovarianceStaysAtCenter) {
  Rng rng(1);
  const Vector center{{0.3, -0.7, 2.0}};
  for (int i = 0; i < 100; ++i) {
    const Vector x = propose_gaussian(center, Matrix::Zero(3, 3), Matrix::Zero(3, 3), 0.05, 1.0, rng);
    EXPECT_LT((x - center).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(ProposeGaussian, BetaZeroMatchesSingleGaussian) {
  Rng rng(2);
  const Matrix Sigma{{2.0, 0.5}, {0.5, 1.0}};
  const Matrix Sigma0 = 100.0 * Matrix::Identity(2, 2);
  const ProposalKernel kernel(Sigma, Sigma0, 0.0, 0.5, 0.0, 0.0);
  RunningMoments m(2);
  for (int i = 0; i < 10000; ++i) m.update(kernel.propose(Vector::Zero(2), rng));
  const Matrix expected = 0.5 * Sigma;
  for (Eigen::Index k = 0; k < 2; ++k) EXPECT_NEAR(m.covariance()(k, k), expected(k, k), 0.05 * expected(k, k));
}

TEST(ProposeGaussian, MixtureVariance) {
  Rng rng(3);
  const ProposalKernel kernel(Matrix::Identity(1, 1), 9.0 * Matrix::Identity(1, 1), 0.25, 1.0, 0.0, 0.0);
  RunningMoments m(1);
  for (int i = 0; i < 40000; ++i) m.update(kernel.propose(Vector::Zero(1), rng));
  // 0.75 * 1 + 0.25 * 9 = 3
  EXPECT_NEAR(m.covariance()(0, 0), 3.0, 0.15);
}

TEST(ProposeGaussian, SeedDeterminism) {
  Rng a(4), b(4);
  const Matrix S = Matrix::Identity(2, 2);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(propose_gaussian(Vector::Zero(2), S, S, 0.1, 1.0, a),
              propose_gaussian(Vector::Zero(2), S, S, 0.1, 1.0, b));
  }
}

TEST(ProposeGaussian, NonPositiveCovarianceIsHardError) {
  Rng rng(5);
  const Matrix bad{{1.0, 0.0}, {0.0, -1.0}};
  EXPECT_THROW(propose_gaussian(Vector::Zero(2), bad, Matrix::Identity(2, 2), 0.1, 1.0, rng), NumericalError);
}

TEST(MhAccept, Extremes) {
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_FALSE(mh_accept(0.0, -std::numeric_limits<double>::infinity(), rng));
    EXPECT_TRUE(mh_accept(-3.0, -3.0, rng));
    EXPECT_TRUE(mh_accept(-3.0, 5.0, rng));
  }
}

TEST(MhAccept, HalfRatioFrequency) {
  Rng rng(7);
  int accepted = 0;
  for (int i = 0; i < 10000; ++i) accepted += mh_accept(0.0, std::log(0.5), rng);
  EXPECT_NEAR(accepted / 10000.0, 0.5, 0.02);
}

TEST(RunningMoments, OneAndTwoSamples) {
  RunningMoments m(2);
  const Vector x{{1.0, 3.0}}, y{{3.0, -1.0}};
  m.update(x);
  EXPECT_EQ(m.mean(), x);
  EXPECT_EQ(m.covariance(), Matrix::Zero(2, 2));
  m.update(y);
  EXPECT_EQ(m.mean(), ((x + y) / 2.0).eval());
  // (count - 1) normalization: 2 * outer((x - y) / 2).
  const Vector h = (x - y) / 2.0;
  EXPECT_LT((m.covariance() - 2.0 * h * h.transpose()).norm(), 1e-14);
  EXPECT_EQ(running_moments_update(RunningMoments(2), x).count(), 1);
}

// Property: running moments equal two-pass batch moments at every length.
TEST(RunningMoments, BatchEquivalenceProperty) {
  Gen gen(8);
  RunningMoments m(3);
  std::vector<Vector> xs;
  for (int k = 0; k < 1000; ++k) {
    xs.push_back(gen.vector(3) * 10.0 + Vector::Constant(3, 1e3));
    m.update(xs.back());
    if (k < 1 || (k % 37 != 0 && k != 999)) continue;
    Vector mean = Vector::Zero(3);
    for (const Vector& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    Matrix cov = Matrix::Zero(3, 3);
    for (const Vector& x : xs) cov += (x - mean) * (x - mean).transpose();
    cov /= static_cast<double>(xs.size() - 1);
    EXPECT_LT((m.mean() - mean).norm() / mean.norm(), 1e-10) << k;
    EXPECT_LT((m.covariance() - cov).norm() / cov.norm(), 1e-10) << k;
    EXPECT_EQ(m.covariance(), m.covariance().transpose());
  }
}

TEST(RunningMoments, FromEstimate) {
  const Matrix cov{{2.0, 0.1}, {0.1, 1.0}};
  const RunningMoments m = RunningMoments::from_estimate(10, Vector{{1.0, 2.0}}, cov);
  EXPECT_EQ(m.count(), 10);
  EXPECT_LT((m.covariance() - cov).norm(), 1e-14);
}

TEST(WeightedMoments, EqualWeightsAndEss) {
  Gen gen(9);
  std::vector<Vector> xs;
  for (int i = 0; i < 50; ++i) xs.push_back(gen.vector(2));
  const WeightedMoments w = weighted_moments(xs, std::vector<double>(50, -3.0));
  Vector mean = Vector::Zero(2);
  for (const Vector& x : xs) mean += x / 50.0;
  Matrix cov = Matrix::Zero(2, 2);
  for (const Vector& x : xs) cov += (x - mean) * (x - mean).transpose() / 50.0;
  EXPECT_LT((w.mean - mean).norm(), 1e-13);
  EXPECT_LT((w.covariance - cov).norm(), 1e-13);
  EXPECT_NEAR(w.effective_sample_size, 50.0, 1e-10);
}

TEST(WeightedMoments, ZeroWeightsAreIgnored) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const WeightedMoments w =
      weighted_moments({Vector{{1.0}}, Vector{{5.0}}, Vector{{3.0}}}, {0.0, neg_inf, 0.0});
  EXPECT_NEAR(w.mean(0), 2.0, 1e-15);
  EXPECT_NEAR(w.covariance(0, 0), 1.0, 1e-15);
  EXPECT_THROW(weighted_moments({Vector{{1.0}}}, {neg_inf}), NumericalError);
}

TEST(TemperingExponent, ReachesTarget) {
  Gen gen(10);
  std::vector<double> log_w;
  for (int i = 0; i < 500; ++i) log_w.push_back(200.0 * gen.uniform(0.0, 1.0));
  EXPECT_EQ(tempering_exponent(std::vector<double>(10, 1.0), 5.0), 1.0);
  const double tau = tempering_exponent(log_w, 20.0);
  EXPECT_GT(tau, 0.0);
  EXPECT_LT(tau, 1.0);
  double top = 0.0;
  for (double v : log_w) top = std::max(top, tau * v);
  double s = 0.0, s2 = 0.0;
  for (double v : log_w) {
    const double w = std::exp(tau * v - top);
    s += w;
    s2 += w * w;
  }
  EXPECT_NEAR(s * s / s2, 20.0, 1e-6);
}

TEST(TransitionMatrix, EqualWeights) {
  const TransitionMatrix T = build_transition_matrix(Vector::Ones(5));
  for (Eigen::Index k = 0; k < 5; ++k)
    for (Eigen::Index l = 0; l < 5; ++l) EXPECT_DOUBLE_EQ(T.T(k, l), k == l ? 0.0 : 0.25);
}

TEST(TransitionMatrix, ZeroProposalsNeverLeave) {
  Vector w = Vector::Zero(4);
  w(0) = 1.0;
  const TransitionMatrix T = build_transition_matrix(w);
  EXPECT_EQ(T.T.row(0), Vector::Unit(4, 0).transpose());
}

TEST(TransitionMatrix, ZeroCurrentWeightIsHardError) {
  EXPECT_THROW(build_transition_matrix(Vector{{0.0, 1.0}}), std::invalid_argument);
  EXPECT_THROW(build_transition_matrix_log(Vector{{-std::numeric_limits<double>::infinity(), 1.0}}),
               std::invalid_argument);
}

// Property: rows are distributions and detailed balance holds.
TEST(TransitionMatrix, StochasticityAndDetailedBalanceProperty) {
  Gen gen(11);
  for (int n_par : {1, 5, 20}) {
    for (int trial = 0; trial < 100; ++trial) {
      Vector w(n_par + 1);
      for (Eigen::Index i = 0; i <= n_par; ++i) w(i) = gen.uniform(0.0, 1.0) < 0.1 && i > 0 ? 0.0 : std::exp(gen.uniform(-5, 5));
      const TransitionMatrix T = build_transition_matrix(w);
      for (Eigen::Index k = 0; k <= n_par; ++k) {
        EXPECT_GE(T.T.row(k).minCoeff(), 0.0);
        EXPECT_NEAR(T.T.row(k).sum(), 1.0, 1e-12);
        for (Eigen::Index l = 0; l <= n_par; ++l)
          if (k != l) EXPECT_NEAR(w(k) * T.T(k, l), w(l) * T.T(l, k), 1e-12);
      }
    }
  }
}

TEST(TransitionMatrix, LogFormMatchesLinearForm) {
  const Vector w{{0.3, 1.2, 0.0, 0.05}};
  Vector lw = w.array().log();
  const TransitionMatrix a = build_transition_matrix(w), b = build_transition_matrix_log(lw);
  EXPECT_LT((a.T - b.T).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(SampleRow, FrequenciesFollowRow) {
  const TransitionMatrix T = build_transition_matrix(Vector{{1.0, 0.5, 2.0}});
  Rng rng(12);
  Vector counts = Vector::Zero(3);
  for (int i = 0; i < 20000; ++i) counts(sample_row(T, 0, rng)) += 1.0;
  counts /= 20000.0;
  for (Eigen::Index l = 0; l < 3; ++l) EXPECT_NEAR(counts(l), T.T(0, l), 0.015);
}

TEST(RunSingleChain, RecoversGaussian) {
  const GaussianTarget target;
  Rng rng(13);
  const ChainResult chain = run_single_chain(gaussian_config(1), target.density(), box_prior(8.0), rng);
  EXPECT_EQ(chain.samples.size(), 20000u);
  EXPECT_EQ(chain.stage_marks[1], 200u);
  EXPECT_EQ(chain.stage_marks[2], 400u);
  EXPECT_GT(chain.acceptance_rate[2], 0.1);
  EXPECT_LT(chain.acceptance_rate[2], 0.9);
  expect_recovers(chain, target);
  for (std::size_t i = chain.stage_marks[1]; i < chain.samples.size(); ++i)
    ASSERT_TRUE(std::isfinite(chain.samples[i].log_density));
}

TEST(RunSingleChain, Determinism) {
  const GaussianTarget target;
  SamplerConfig c = gaussian_config(1);
  c.N3 = 3000;
  Rng a(14), b(14);
  EXPECT_TRUE(identical(run_single_chain(c, target.density(), box_prior(8.0), a),
                        run_single_chain(c, target.density(), box_prior(8.0), b)));
}

TEST(RunSingleChain, DensityFailureCarriesPosition) {
  int calls = 0;
  const LogDensityFn bad = [&](const Vector&) -> Evaluation {
    if (++calls == 250) throw NumericalError("boom");
    return {0.0, 0.0};
  };
  Rng rng(15);
  SamplerConfig c = gaussian_config(1);
  c.N3 = 1000;
  try {
    run_single_chain(c, bad, box_prior(1.0), rng);
    FAIL();
  } catch (const SamplerError& e) {
    EXPECT_GT(e.iteration(), 200u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(RunParallelChain, SingleColumnReducesToSingleChain) {
  const GaussianTarget target;
  Rng rng(16);
  const ChainResult chain = run_parallel_chain(gaussian_config(1), target.density(), box_prior(8.0), rng);
  EXPECT_EQ(chain.samples.size(), 20000u);
  expect_recovers(chain, target);
}

TEST(RunParallelChain, EightColumnsRecoverGaussian) {
  const GaussianTarget target;
  Rng rng(17);
  SamplerConfig c = gaussian_config(8);
  c.N1 = 25;
  c.N2 = 50;
  c.N3 = 2500;
  const ChainResult chain = run_parallel_chain(c, target.density(), box_prior(8.0), rng);
  EXPECT_EQ(chain.samples.size(), 20000u);
  EXPECT_EQ(chain.n_par, 8);
  expect_recovers(chain, target);
}

TEST(RunParallelChain, ResultIndependentOfThreadCount) {
  const GaussianTarget target;
  SamplerConfig c = gaussian_config(6);
  c.N1 = 20;
  c.N2 = 40;
  c.N3 = 300;
  Rng a(18), b(18);
  const ChainResult serial = run_parallel_chain(c, target.density(), box_prior(8.0), a);
  c.threads = 3;
  const ChainResult threaded = run_parallel_chain(c, target.density(), box_prior(8.0), b);
  EXPECT_TRUE(identical(serial, threaded));
}

TEST(RunParallelChain, PerRowModeRuns) {
  const GaussianTarget target;
  SamplerConfig c = gaussian_config(4);
  c.N1 = 20;
  c.N2 = 40;
  c.N3 = 200;
  c.transition = TransitionMode::PerRow;
  c.centering = ProposalCentering::PerColumn;
  Rng rng(19);
  const ChainResult chain = run_parallel_chain(c, target.density(), box_prior(8.0), rng);
  EXPECT_EQ(chain.samples.size(), 800u);
  for (const ChainSample& s : chain.samples) EXPECT_EQ(s.x.size(), 2);
}
