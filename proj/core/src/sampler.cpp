#include "mixinv/sampler.hpp"

#include "mixinv/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <future>
#include <thread>

namespace mixinv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector standard_normal(Eigen::Index dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    z(i) = normal(rng);
  }
  return z;
}

Matrix jittered_cholesky(const Matrix& Sigma, double scale, double jitter, double jitter_floor) {
  const Eigen::Index d = Sigma.rows();
  if (Sigma.cols() != d) {
    throw std::invalid_argument("ProposalKernel: covariance must be square");
  }
  Matrix S = 0.5 * (Sigma + Sigma.transpose());
  const double bump = jitter * S.trace() / static_cast<double>(std::max<Eigen::Index>(d, 1)) + jitter_floor;
  S.diagonal().array() += bump;
  Eigen::LLT<Matrix> llt(scale * S);
  if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite()) {
    throw NumericalError("ProposalKernel: covariance is not positive definite after jitter");
  }
  return llt.matrixL();
}

int worker_count(const SamplerConfig& config) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int requested = config.threads > 0 ? config.threads : hw;
  return std::clamp(requested, 1, std::max(config.n_par, 1));
}

// Evaluates all points; parallel over contiguous chunks when workers > 1.
// Failures are rethrown as SamplerError carrying the first failing column.
std::vector<Evaluation> evaluate_batch(const LogDensityFn& density, const std::vector<Vector>& points,
                                       int workers, std::size_t iteration) {
  std::vector<Evaluation> out(points.size());
  const auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      try {
        out[k] = density(points[k]);
      } catch (const SamplerError&) {
        throw;
      } catch (const std::exception& e) {
        throw SamplerError(iteration, static_cast<int>(k), e.what());
      }
    }
  };
  if (workers <= 1 || points.size() <= 1) {
    run(0, points.size());
    return out;
  }
  const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(workers), points.size());
  std::vector<std::future<void>> tasks;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * points.size() / chunks;
    const std::size_t end = (c + 1) * points.size() / chunks;
    tasks.push_back(std::async(std::launch::async, run, begin, end));
  }
  for (auto& task : tasks) {
    task.get();
  }
  return out;
}

Evaluation evaluate_one(const LogDensityFn& density, const Vector& x, std::size_t iteration) {
  try {
    return density(x);
  } catch (const std::exception& e) {
    throw SamplerError(iteration, 0, e.what());
  }
}

struct StageOneEstimate {
  Vector start;
  Evaluation start_eval;
  Matrix covariance;
  long weight_count;
};

// Stage 1 bookkeeping shared by both samplers: importance-weighted moments of
// the prior draws, and a starting point with positive density.
StageOneEstimate finish_stage_one(const std::vector<Vector>& draws, const std::vector<Evaluation>& evals,
                                  const LogDensityFn& density, double min_ess, std::size_t iteration) {
  std::vector<double> log_w;
  log_w.reserve(evals.size());
  for (const Evaluation& e : evals) {
    log_w.push_back(e.log_density);
  }
  const WeightedMoments wm = weighted_moments(draws, log_w);

  StageOneEstimate out;
  out.covariance = wm.covariance;
  double ess = wm.effective_sample_size;
  const double target = std::min(min_ess, 0.25 * static_cast<double>(draws.size()));
  if (ess < target) {
    // A handful of dominant draws gives a near-singular covariance and a
    // frozen stage 2; flatten the weights until enough draws contribute.
    const double tau = tempering_exponent(log_w, target);
    std::vector<double> tempered(log_w);
    for (double& v : tempered) v *= tau;
    const WeightedMoments flat = weighted_moments(draws, tempered);
    out.covariance = flat.covariance;
    ess = flat.effective_sample_size;
  }
  out.weight_count = std::max<long>(2, std::lround(ess));
  out.start = wm.mean;
  out.start_eval = evaluate_one(density, out.start, iteration);
  if (!(out.start_eval.log_density > kNegInf)) {
    // The weighted mean can fall outside a non-convex support; use the best draw.
    const auto best = std::max_element(log_w.begin(), log_w.end());
    const std::size_t i = static_cast<std::size_t>(best - log_w.begin());
    out.start = draws[i];
    out.start_eval = evals[i];
  }
  return out;
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(N1 >= 1 && N1 < N2 && N2 < N3)) {
    throw std::invalid_argument("SamplerConfig: need 1 <= N1 < N2 < N3");
  }
  if (!(N3 - N2 > std::max(N2 - N1, N1))) {
    throw std::invalid_argument("SamplerConfig: the adaptive stage must be the longest (N3 - N2 > max(N2 - N1, N1))");
  }
  if (n_par < 1) {
    throw std::invalid_argument("SamplerConfig: n_par must be at least 1");
  }
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("SamplerConfig: beta must lie in (0, 1)");
  }
  if (scale && !(*scale > 0.0)) {
    throw std::invalid_argument("SamplerConfig: scale must be positive");
  }
  if (!(jitter >= 0.0) || !(jitter_floor >= 0.0)) {
    throw std::invalid_argument("SamplerConfig: jitter must be non-negative");
  }
}

double SamplerConfig::proposal_scale(Eigen::Index dim) const {
  return scale ? *scale : 2.38 * 2.38 / static_cast<double>(dim);
}

RunningMoments::RunningMoments(Eigen::Index dim)
    : mean_(Vector::Zero(dim)), scatter_(Matrix::Zero(dim, dim)) {}

RunningMoments RunningMoments::from_estimate(long count, const Vector& mean, const Matrix& covariance) {
  RunningMoments m(mean.size());
  m.count_ = count;
  m.mean_ = mean;
  m.scatter_ = covariance * static_cast<double>(std::max<long>(count - 1, 0));
  return m;
}

void RunningMoments::update(const Vector& x) {
  if (x.size() != mean_.size()) {
    throw std::invalid_argument("RunningMoments::update: dimension mismatch");
  }
  ++count_;
  const Vector delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  scatter_.noalias() += delta * (x - mean_).transpose();
}

Matrix RunningMoments::covariance() const {
  if (count_ < 2) {
    return Matrix::Zero(mean_.size(), mean_.size());
  }
  const Matrix sym = 0.5 * (scatter_ + scatter_.transpose());
  return sym / static_cast<double>(count_ - 1);
}

RunningMoments running_moments_update(RunningMoments moments, const Vector& x) {
  moments.update(x);
  return moments;
}

WeightedMoments weighted_moments(const std::vector<Vector>& samples, const std::vector<double>& log_w) {
  if (samples.empty() || samples.size() != log_w.size()) {
    throw std::invalid_argument("weighted_moments: need one log weight per sample");
  }
  const double top = *std::max_element(log_w.begin(), log_w.end());
  if (!(top > kNegInf) || !std::isfinite(top)) {
    throw NumericalError("weighted_moments: no sample has positive weight");
  }
  const Eigen::Index dim = samples.front().size();
  std::vector<double> w(samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_w[i] - top);
    total += w[i];
  }
  WeightedMoments out;
  out.mean = Vector::Zero(dim);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] /= total;
    sum_sq += w[i] * w[i];
    if (w[i] > 0.0) {
      out.mean += w[i] * samples[i];
    }
  }
  out.covariance = Matrix::Zero(dim, dim);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) {
      const Vector d = samples[i] - out.mean;
      out.covariance.noalias() += w[i] * d * d.transpose();
    }
  }
  out.effective_sample_size = 1.0 / sum_sq;
  return out;
}

double tempering_exponent(const std::vector<double>& log_w, double target_ess) {
  const auto ess_at = [&](double tau) {
    double top = kNegInf;
    for (double v : log_w) {
      if (v > kNegInf) top = std::max(top, tau * v);
    }
    double sum = 0.0, sum_sq = 0.0;
    for (double v : log_w) {
      if (!(v > kNegInf)) continue;
      const double w = std::exp(tau * v - top);
      sum += w;
      sum_sq += w * w;
    }
    return sum * sum / sum_sq;
  };
  if (ess_at(1.0) >= target_ess) {
    return 1.0;
  }
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ess_at(mid) >= target_ess ? lo : hi) = mid;
  }
  return std::max(lo, std::numeric_limits<double>::min());
}

ProposalKernel::ProposalKernel(const Matrix& Sigma, const Matrix& Sigma0, double beta, double scale,
                               double jitter, double jitter_floor)
    : chol_(jittered_cholesky(Sigma, scale, jitter, jitter_floor)),
      chol0_(jittered_cholesky(Sigma0, scale, jitter, jitter_floor)),
      beta_(beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw std::invalid_argument("ProposalKernel: beta must lie in [0, 1]");
  }
  if (Sigma.rows() != Sigma0.rows()) {
    throw std::invalid_argument("ProposalKernel: covariance dimensions differ");
  }
}

Vector ProposalKernel::propose(const Vector& center, Rng& rng) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const bool fixed_component = uniform(rng) < beta_;
  const Vector z = standard_normal(center.size(), rng);
  return center + (fixed_component ? chol0_ : chol_) * z;
}

Vector propose_gaussian(const Vector& center, const Matrix& Sigma, const Matrix& Sigma0,
                        double beta, double scale, Rng& rng, double jitter, double jitter_floor) {
  return ProposalKernel(Sigma, Sigma0, beta, scale, jitter, jitter_floor).propose(center, rng);
}

bool mh_accept(double log_r_current, double log_r_proposal, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  if (!(log_r_proposal > kNegInf)) {
    return false;
  }
  return std::log(u) < log_r_proposal - log_r_current;
}

TransitionMatrix build_transition_matrix_log(const Vector& log_w) {
  const Eigen::Index size = log_w.size();
  if (size < 2) {
    throw std::invalid_argument("build_transition_matrix: need at least two weights");
  }
  if (!(log_w(0) > kNegInf) || std::isnan(log_w(0))) {
    throw std::invalid_argument("build_transition_matrix: the current state must have positive weight");
  }
  const double n_par = static_cast<double>(size - 1);
  TransitionMatrix out;
  out.T = Matrix::Zero(size, size);
  const double top = log_w.maxCoeff();
  out.w = (log_w.array() - top).exp().matrix();
  for (Eigen::Index k = 0; k < size; ++k) {
    double off = 0.0;
    for (Eigen::Index l = 0; l < size; ++l) {
      if (l == k) continue;
      double ratio;
      if (!(log_w(l) > kNegInf)) {
        ratio = 0.0;
      } else if (!(log_w(k) > kNegInf)) {
        ratio = 1.0;
      } else {
        ratio = std::min(1.0, std::exp(log_w(l) - log_w(k)));
      }
      out.T(k, l) = ratio / n_par;
      off += out.T(k, l);
    }
    out.T(k, k) = std::max(0.0, 1.0 - off);
  }
  return out;
}

TransitionMatrix build_transition_matrix(const Vector& w) {
  if ((w.array() < 0.0).any() || !w.allFinite()) {
    throw std::invalid_argument("build_transition_matrix: weights must be finite and non-negative");
  }
  if (w.size() >= 1 && !(w(0) > 0.0)) {
    throw std::invalid_argument("build_transition_matrix: the current state must have positive weight");
  }
  Vector log_w(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    log_w(i) = w(i) > 0.0 ? std::log(w(i)) : kNegInf;
  }
  TransitionMatrix out = build_transition_matrix_log(log_w);
  out.w = w;
  return out;
}

Eigen::Index sample_row(const TransitionMatrix& T, Eigen::Index row, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  const Eigen::Index size = T.size();
  for (Eigen::Index l = 0; l < size; ++l) {
    cumulative += T.T(row, l);
    if (u < cumulative) {
      return l;
    }
  }
  // Rounding left u above the last partial sum: take the last index with mass.
  for (Eigen::Index l = size - 1; l >= 0; --l) {
    if (T.T(row, l) > 0.0) return l;
  }
  return row;
}

ChainResult run_single_chain(const SamplerConfig& config, const LogDensityFn& density,
                             const PriorSamplerFn& prior, Rng& rng) {
  config.validate();
  ChainResult result;
  result.n_par = 1;
  result.samples.reserve(static_cast<std::size_t>(config.N3));

  // Stage 1: prior draws.
  std::vector<Vector> draws;
  std::vector<Evaluation> evals;
  for (int j = 1; j <= config.N1; ++j) {
    draws.push_back(prior(rng));
    evals.push_back(evaluate_one(density, draws.back(), static_cast<std::size_t>(j)));
    result.samples.push_back({draws.back(), evals.back().log_density, evals.back().aux, 1});
  }
  result.stage_marks[0] = 0;
  result.acceptance_rate[0] = 1.0;
  const Eigen::Index dim = draws.front().size();
  const double scale = config.proposal_scale(dim);

  StageOneEstimate s1 = finish_stage_one(draws, evals, density, config.min_stage1_ess, static_cast<std::size_t>(config.N1 + 1));
  RunningMoments moments = RunningMoments::from_estimate(s1.weight_count, s1.start, s1.covariance);

  // Stage 2: fixed covariance.
  result.stage_marks[1] = result.samples.size();
  Vector current = s1.start;
  Evaluation current_eval = s1.start_eval;
  result.samples.push_back({current, current_eval.log_density, current_eval.aux, 2});
  moments.update(current);
  {
    const ProposalKernel kernel(s1.covariance, s1.covariance, 0.0, scale, config.jitter, config.jitter_floor);
    long accepted = 0;
    for (int j = config.N1 + 2; j <= config.N2; ++j) {
      const Vector proposal = kernel.propose(current, rng);
      const Evaluation e = evaluate_one(density, proposal, static_cast<std::size_t>(j));
      if (mh_accept(current_eval.log_density, e.log_density, rng)) {
        current = proposal;
        current_eval = e;
        ++accepted;
      }
      result.samples.push_back({current, current_eval.log_density, current_eval.aux, 2});
      moments.update(current);
    }
    result.acceptance_rate[1] = static_cast<double>(accepted) / std::max(1, config.N2 - config.N1 - 1);
  }

  // Stage 3: adaptive covariance with the beta mixture.
  result.stage_marks[2] = result.samples.size();
  const Matrix Sigma0 = moments.covariance();
  {
    const Vector restart = moments.mean();
    const Evaluation restart_eval = evaluate_one(density, restart, static_cast<std::size_t>(config.N2 + 1));
    if (restart_eval.log_density > kNegInf) {
      current = restart;
      current_eval = restart_eval;
    }
  }
  result.samples.push_back({current, current_eval.log_density, current_eval.aux, 3});
  moments.update(current);
  long accepted = 0;
  for (int j = config.N2 + 2; j <= config.N3; ++j) {
    const Matrix Sigma = j >= config.N2 + 3 ? moments.covariance() : Sigma0;
    const ProposalKernel kernel(Sigma, Sigma0, config.beta, scale, config.jitter, config.jitter_floor);
    const Vector proposal = kernel.propose(current, rng);
    const Evaluation e = evaluate_one(density, proposal, static_cast<std::size_t>(j));
    if (mh_accept(current_eval.log_density, e.log_density, rng)) {
      current = proposal;
      current_eval = e;
      ++accepted;
    }
    result.samples.push_back({current, current_eval.log_density, current_eval.aux, 3});
    moments.update(current);
  }
  result.acceptance_rate[2] = static_cast<double>(accepted) / std::max(1, config.N3 - config.N2 - 1);
  result.final_moments = moments;
  return result;
}

namespace {

struct ParallelState {
  std::vector<Vector> columns;
  std::vector<Evaluation> evals;
};

// One propose / evaluate / resample sweep. Returns the number of accepted columns.
long parallel_sweep(const SamplerConfig& config, const LogDensityFn& density, const ProposalKernel& kernel,
                    ParallelState& state, int workers, std::size_t iteration, Rng& rng) {
  const int n_par = config.n_par;
  const Vector& retained = state.columns.back();
  std::vector<Vector> proposals(static_cast<std::size_t>(n_par));
  if (config.centering == ProposalCentering::Auxiliary) {
    const Vector hub = kernel.propose(retained, rng);
    for (Vector& p : proposals) {
      p = kernel.propose(hub, rng);
    }
  } else {
    for (int k = 0; k < n_par; ++k) {
      proposals[static_cast<std::size_t>(k)] = kernel.propose(state.columns[static_cast<std::size_t>(k)], rng);
    }
  }
  const std::vector<Evaluation> proposal_evals = evaluate_batch(density, proposals, workers, iteration);

  // Pool index 0 is the retained state, 1..n_par the proposals.
  Vector log_w(n_par + 1);
  log_w(0) = state.evals.back().log_density;
  for (int k = 0; k < n_par; ++k) {
    log_w(k + 1) = proposal_evals[static_cast<std::size_t>(k)].log_density;
  }
  const TransitionMatrix T = build_transition_matrix_log(log_w);

  const Vector retained_copy = retained;
  const Evaluation retained_eval = state.evals.back();
  const auto pool_point = [&](Eigen::Index i) -> const Vector& {
    return i == 0 ? retained_copy : proposals[static_cast<std::size_t>(i - 1)];
  };
  const auto pool_eval = [&](Eigen::Index i) -> const Evaluation& {
    return i == 0 ? retained_eval : proposal_evals[static_cast<std::size_t>(i - 1)];
  };

  long accepted = 0;
  Eigen::Index index = 0;
  for (int k = 0; k < n_par; ++k) {
    const Eigen::Index row = config.transition == TransitionMode::IndexChain ? index : k;
    index = sample_row(T, row, rng);
    state.columns[static_cast<std::size_t>(k)] = pool_point(index);
    state.evals[static_cast<std::size_t>(k)] = pool_eval(index);
    if (index != 0) ++accepted;
  }
  return accepted;
}

void record(ChainResult& result, RunningMoments& moments, const ParallelState& state, int stage) {
  for (std::size_t k = 0; k < state.columns.size(); ++k) {
    result.samples.push_back({state.columns[k], state.evals[k].log_density, state.evals[k].aux, stage});
    moments.update(state.columns[k]);
  }
}

}  // namespace

ChainResult run_parallel_chain(const SamplerConfig& config, const LogDensityFn& density,
                               const PriorSamplerFn& prior, Rng& rng) {
  config.validate();
  const int n_par = config.n_par;
  const int workers = worker_count(config);
  ChainResult result;
  result.n_par = n_par;
  result.samples.reserve(static_cast<std::size_t>(config.N3) * static_cast<std::size_t>(n_par));

  // Stage 1: independent prior draws for every column.
  std::vector<Vector> draws;
  std::vector<Evaluation> evals;
  for (int j = 1; j <= config.N1; ++j) {
    std::vector<Vector> batch(static_cast<std::size_t>(n_par));
    for (Vector& x : batch) {
      x = prior(rng);
    }
    const std::vector<Evaluation> batch_evals = evaluate_batch(density, batch, workers, static_cast<std::size_t>(j));
    for (std::size_t k = 0; k < batch.size(); ++k) {
      result.samples.push_back({batch[k], batch_evals[k].log_density, batch_evals[k].aux, 1});
      draws.push_back(std::move(batch[k]));
      evals.push_back(batch_evals[k]);
    }
  }
  result.stage_marks[0] = 0;
  result.acceptance_rate[0] = 1.0;
  const Eigen::Index dim = draws.front().size();
  const double scale = config.proposal_scale(dim);

  const StageOneEstimate s1 = finish_stage_one(draws, evals, density, config.min_stage1_ess, static_cast<std::size_t>(config.N1 + 1));
  RunningMoments moments = RunningMoments::from_estimate(s1.weight_count, s1.start, s1.covariance);

  // Stage 2.
  result.stage_marks[1] = result.samples.size();
  ParallelState state{std::vector<Vector>(static_cast<std::size_t>(n_par), s1.start),
                      std::vector<Evaluation>(static_cast<std::size_t>(n_par), s1.start_eval)};
  record(result, moments, state, 2);
  {
    const ProposalKernel kernel(s1.covariance, s1.covariance, 0.0, scale, config.jitter, config.jitter_floor);
    long accepted = 0;
    for (int j = config.N1 + 2; j <= config.N2; ++j) {
      accepted += parallel_sweep(config, density, kernel, state, workers, static_cast<std::size_t>(j), rng);
      record(result, moments, state, 2);
    }
    result.acceptance_rate[1] =
        static_cast<double>(accepted) / (static_cast<double>(n_par) * std::max(1, config.N2 - config.N1 - 1));
  }

  // Stage 3.
  result.stage_marks[2] = result.samples.size();
  const Matrix Sigma0 = moments.covariance();
  {
    const Vector restart = moments.mean();
    const Evaluation restart_eval = evaluate_one(density, restart, static_cast<std::size_t>(config.N2 + 1));
    if (restart_eval.log_density > kNegInf) {
      state.columns.assign(static_cast<std::size_t>(n_par), restart);
      state.evals.assign(static_cast<std::size_t>(n_par), restart_eval);
    }
  }
  record(result, moments, state, 3);
  long accepted = 0;
  for (int j = config.N2 + 2; j <= config.N3; ++j) {
    const Matrix Sigma = j >= config.N2 + 3 ? moments.covariance() : Sigma0;
    const ProposalKernel kernel(Sigma, Sigma0, config.beta, scale, config.jitter, config.jitter_floor);
    accepted += parallel_sweep(config, density, kernel, state, workers, static_cast<std::size_t>(j), rng);
    record(result, moments, state, 3);
  }
  result.acceptance_rate[2] =
      static_cast<double>(accepted) / (static_cast<double>(n_par) * std::max(1, config.N3 - config.N2 - 1));
  result.final_moments = moments;
  return result;
}

}  // namespace mixinv
