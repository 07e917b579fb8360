#pragma once

#include "mixinv/linops.hpp"

#include <Eigen/Cholesky>

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixinv {

using Rng = std::mt19937_64;

/// Value returned by a target density: the log density (possibly -inf) and
/// one auxiliary diagnostic carried into the chain records.
struct Evaluation {
  double log_density = -std::numeric_limits<double>::infinity();
  double aux = 0.0;
};

using LogDensityFn = std::function<Evaluation(const Vector&)>;
using PriorSamplerFn = std::function<Vector(Rng&)>;

/// How each column of the next parallel state is drawn from the transition matrix.
enum class TransitionMode {
  /// i_0 = retained state, i_k drawn from row i_{k-1}; column k = pool[i_k].
  IndexChain,
  /// Column k drawn from row k of T.
  PerRow,
};

/// Where the parallel proposals are centred.
enum class ProposalCentering {
  /// Proposal k is centred at column k of the previous state.
  PerColumn,
  /// An auxiliary point is drawn around the retained state and all proposals
  /// are centred on it, so the pool is exchangeable and T is exact.
  Auxiliary,
};

struct SamplerConfig {
  int N1 = 200;
  int N2 = 400;
  int N3 = 4000;
  int n_par = 20;
  /// Weight of the fixed stage-2 covariance in the stage-3 mixture proposal.
  double beta = 0.05;
  /// Covariance multiplier; 2.38^2 / dim when unset.
  std::optional<double> scale;
  std::uint64_t seed = 1;
  /// Relative jitter: jitter * trace(Sigma) / dim is added to the diagonal.
  double jitter = 1e-10;
  /// Absolute diagonal floor added on top of the relative jitter.
  double jitter_floor = 1e-12;
  TransitionMode transition = TransitionMode::IndexChain;
  ProposalCentering centering = ProposalCentering::Auxiliary;
  /// Worker threads for density evaluation; 0 uses the hardware concurrency.
  int threads = 0;
  /// When the stage-1 importance weights have a smaller effective sample size,
  /// the stage-1 covariance is taken from tempered weights w^tau reaching it.
  double min_stage1_ess = 20.0;

  void validate() const;
  double proposal_scale(Eigen::Index dim) const;
};

/// Single-pass mean and covariance (normalized by count - 1; zero below two samples).
class RunningMoments {
 public:
  explicit RunningMoments(Eigen::Index dim = 0);

  /// Moments equivalent to `count` samples with the given mean and covariance.
  static RunningMoments from_estimate(long count, const Vector& mean, const Matrix& covariance);

  void update(const Vector& x);

  long count() const { return count_; }
  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  Matrix covariance() const;

 private:
  long count_ = 0;
  Vector mean_;
  Matrix scatter_;
};

RunningMoments running_moments_update(RunningMoments moments, const Vector& x);

/// Self-normalized importance-weighted moments (weights exp(log_w)).
struct WeightedMoments {
  Vector mean;
  Matrix covariance;
  double effective_sample_size = 0.0;
};

WeightedMoments weighted_moments(const std::vector<Vector>& samples, const std::vector<double>& log_w);

/// Largest tau in (0, 1] with ESS(w^tau) >= target_ess (1 when the raw weights
/// already reach it). Found by bisection; ESS is decreasing in tau.
double tempering_exponent(const std::vector<double>& log_w, double target_ess);

/// Two-component Gaussian random-walk proposal
///   center + (1 - beta) N(0, scale Sigma) + beta N(0, scale Sigma0),
/// realized as a mixture: the Sigma0 component is chosen with probability beta.
class ProposalKernel {
 public:
  ProposalKernel(const Matrix& Sigma, const Matrix& Sigma0, double beta, double scale,
                 double jitter, double jitter_floor);

  Vector propose(const Vector& center, Rng& rng) const;

 private:
  Matrix chol_;
  Matrix chol0_;
  double beta_;
};

Vector propose_gaussian(const Vector& center, const Matrix& Sigma, const Matrix& Sigma0,
                        double beta, double scale, Rng& rng, double jitter = 1e-10,
                        double jitter_floor = 1e-12);

/// Metropolis-Hastings test: log U < log_r_proposal - log_r_current.
bool mh_accept(double log_r_current, double log_r_proposal, Rng& rng);

/// Row-stochastic matrix reversible with respect to w:
///   T[k][l] = min(1, w_l / w_k) / N_par for k != l, rows completed on the diagonal.
struct TransitionMatrix {
  Matrix T;
  Vector w;

  Eigen::Index size() const { return T.rows(); }
};

TransitionMatrix build_transition_matrix(const Vector& w);

/// Same matrix from log weights; ratios are formed as exp(log_w_l - log_w_k).
TransitionMatrix build_transition_matrix_log(const Vector& log_w);

/// Index drawn from row `row` of T.
Eigen::Index sample_row(const TransitionMatrix& T, Eigen::Index row, Rng& rng);

struct ChainSample {
  Vector x;
  double log_density;
  double aux;
  int stage;
};

struct ChainResult {
  std::vector<ChainSample> samples;
  /// Index of the first record of stages 1, 2 and 3.
  std::array<std::size_t, 3> stage_marks{};
  /// Acceptance rate of stages 2 and 3 (stage 1 draws are always kept: 1).
  std::array<double, 3> acceptance_rate{};
  RunningMoments final_moments;
  int n_par = 1;
};

/// Raised when a density evaluation fails; carries the chain position.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(std::size_t iteration, int column, const std::string& what)
      : std::runtime_error("sampler failure at iteration " + std::to_string(iteration) +
                           ", column " + std::to_string(column) + ": " + what),
        iteration_(iteration),
        column_(column) {}

  std::size_t iteration() const { return iteration_; }
  int column() const { return column_; }

 private:
  std::size_t iteration_;
  int column_;
};

/// Three-stage sampler: prior draws with importance-weighted moments, fixed
/// covariance random-walk MH, then adaptive MH with the beta mixture proposal.
ChainResult run_single_chain(const SamplerConfig& config, const LogDensityFn& density,
                             const PriorSamplerFn& prior, Rng& rng);

/// Parallel multi-proposal variant: N_par proposals per iteration, evaluated
/// concurrently, resampled through the transition matrix.
ChainResult run_parallel_chain(const SamplerConfig& config, const LogDensityFn& density,
                               const PriorSamplerFn& prior, Rng& rng);

}  // namespace mixinv
