#include "mixinv/regselect.hpp"

#include "mixinv/errors.hpp"
#include "mixinv/posterior.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mixinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_grid(const std::vector<double>& grid, const char* who) {
  if (grid.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty C grid");
  }
  for (double C : grid) {
    if (!(C > 0.0)) {
      throw std::invalid_argument(std::string(who) + ": grid values must be positive");
    }
  }
}

// Index of the smallest score; later (larger C) entries win ties.
template <class Score>
std::size_t grid_argmin(const std::vector<double>& grid, const Score& score, double& best_value) {
  std::size_t best = 0;
  best_value = kInf;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double value = score(grid[i]);
    if (value <= best_value) {
      best_value = value;
      best = i;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::GCV:
      return "GCV";
    case SelectionMethod::CLS:
      return "CLS";
    case SelectionMethod::ML:
      return "ML";
  }
  return "?";
}

std::vector<double> log_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo) || count < 1) {
    throw std::invalid_argument("log_grid: need 0 < lo <= hi and count >= 1");
  }
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = lo;
    return grid;
  }
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < count; ++i) {
    grid[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
  }
  grid.back() = hi;
  return grid;
}

std::vector<double> default_C_grid() { return log_grid(1e-8, 1e2, 100); }

double gcv_score(const WhitenedOperator& B, const SpectralSummary& spectrum, double C,
                 const Vector& u, const SolverSettings& settings) {
  if (u.isZero(0.0)) {
    return 0.0;
  }
  const InfluenceTerms terms = influence_residual(B, spectrum, C, u, settings);
  return terms.residual_norm_sq / (terms.trace * terms.trace);
}

SelectionResult gcv_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                           const Vector& u, const std::vector<double>& C_grid,
                           const SolverSettings& settings) {
  check_grid(C_grid, "gcv_select");
  SelectionResult result;
  result.method = SelectionMethod::GCV;
  result.grid = C_grid;
  const std::size_t best = grid_argmin(
      C_grid, [&](double C) { return gcv_score(B, spectrum, C, u, settings); },
      result.criterion_value);
  result.C_star = C_grid[best];
  return result;
}

SelectionResult cls_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                           const Vector& u, double sigma, std::pair<double, double> bracket,
                           const SolverSettings& settings) {
  auto [lo, hi] = bracket;
  if (!(lo > 0.0) || !(hi > lo) || !(sigma > 0.0)) {
    throw std::invalid_argument("cls_select: need 0 < C_lo < C_hi and sigma > 0");
  }
  const double u_sq = u.squaredNorm();
  const double target = static_cast<double>(u.size()) * sigma * sigma;
  if (target > u_sq) {
    throw NoRootError("cls_select: n sigma^2 = " + std::to_string(target) +
                      " exceeds ||u||^2 = " + std::to_string(u_sq));
  }
  const auto residual = [&](double C) {
    return influence_residual(B, spectrum, C, u, settings).residual_norm_sq;
  };

  // The residual must increase with C over the bracket for bisection to be meaningful.
  const std::vector<double> probes = log_grid(lo, hi, 9);
  std::vector<double> probe_values;
  for (double C : probes) {
    probe_values.push_back(residual(C));
  }
  for (std::size_t i = 1; i < probe_values.size(); ++i) {
    if (probe_values[i] < probe_values[i - 1] - 1e-10 * u_sq) {
      throw NumericalError("cls_select: residual is not monotone on the bracket");
    }
  }
  const double r_lo = probe_values.front();
  const double r_hi = probe_values.back();
  if (target < r_lo || target > r_hi) {
    throw NoRootError("cls_select: target " + std::to_string(target) +
                      " outside the residual range [" + std::to_string(r_lo) + ", " +
                      std::to_string(r_hi) + "] of the bracket");
  }

  const double tol = 1e-8 * u_sq;
  double a = std::log10(lo);
  double b = std::log10(hi);
  double C_star = lo;
  double value = r_lo;
  if (std::abs(r_hi - target) <= tol) {
    C_star = hi;
    value = r_hi;
  }
  for (int it = 0; it < 200 && std::abs(value - target) > tol; ++it) {
    const double mid = 0.5 * (a + b);
    C_star = std::pow(10.0, mid);
    value = residual(C_star);
    if (value < target) {
      a = mid;
    } else {
      b = mid;
    }
  }
  if (std::abs(value - target) > tol) {
    throw NoRootError("cls_select: bisection stalled");
  }

  SelectionResult result;
  result.method = SelectionMethod::CLS;
  result.C_star = C_star;
  result.criterion_value = value;
  result.grid = {lo, hi};
  return result;
}

SelectionResult ml_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                          const Vector& u, const std::vector<double>& C_grid,
                          const SolverSettings& settings) {
  check_grid(C_grid, "ml_select");
  SelectionResult result;
  result.method = SelectionMethod::ML;
  result.grid = C_grid;
  const std::size_t best = grid_argmin(
      C_grid, [&](double C) { return ml_ratio(B, spectrum, C, u, settings); },
      result.criterion_value);
  result.C_star = C_grid[best];
  const InfluenceTerms terms = influence_residual(B, spectrum, result.C_star, u, settings);
  result.sigma_est = std::sqrt(terms.quad_form / static_cast<double>(u.size()));
  return result;
}

double tikhonov_objective(const ForwardModel& model, const Observation& obs, const Vector& m,
                          double C, const SolverSettings& settings) {
  if (!model.admissible(m)) {
    return kInf;
  }
  const LinearOperator A = model.assemble(m);
  const RegularizerMatrix& R = model.regularizer();
  const WhitenedOperator B = whiten_operator(A, R);
  const Vector g = R.solve(solve_whitened(B, C, obs.u, settings));
  return (A.matrix() * g - obs.u).squaredNorm() + C * R.apply(g).squaredNorm();
}

double pointwise_objective(const Vector& m, PointwiseMethod method, const ForwardModel& model,
                           const Observation& obs, const SelectionGrids& grids,
                           const SolverSettings& settings) {
  if (obs.u.isZero(0.0)) {
    return 0.0;
  }
  if (!model.admissible(m)) {
    return kInf;
  }
  check_grid(grids.C_grid, "pointwise_objective");
  const LinearOperator A = model.assemble(m);
  const WhitenedOperator B = whiten_operator(A, model.regularizer());
  const SpectralSummary spectrum = truncated_singular_values(B);
  double C = 0.0;
  if (method == PointwiseMethod::GCV) {
    C = gcv_select(B, spectrum, obs.u, grids.C_grid, settings).C_star;
  } else {
    if (!obs.sigma_known) {
      throw std::invalid_argument("pointwise_objective: discrepancy selection needs a known sigma");
    }
    try {
      C = cls_select(B, spectrum, obs.u, *obs.sigma_known,
                     {grids.C_grid.front(), grids.C_grid.back()}, settings)
              .C_star;
    } catch (const NoRootError&) {
      return kInf;
    }
  }
  return tikhonov_objective(model, obs, m, C, settings);
}

double global_gcv_objective(const Vector& m, const ForwardModel& model, const Observation& obs,
                            const SelectionGrids& grids, double* best_C,
                            const SolverSettings& settings) {
  if (!model.admissible(m)) {
    return kInf;
  }
  const WhitenedOperator B = whiten_operator(model.assemble(m), model.regularizer());
  const SpectralSummary spectrum = truncated_singular_values(B);
  const SelectionResult selected = gcv_select(B, spectrum, obs.u, grids.C_grid, settings);
  if (best_C != nullptr) {
    *best_C = selected.C_star;
  }
  return selected.criterion_value;
}

GlobalDiscrepancyResult global_discrepancy(const ForwardModel& model, const Observation& obs,
                                           double Err, const std::vector<Vector>& m_grid,
                                           const std::vector<double>& C_grid,
                                           double rel_threshold) {
  if (m_grid.empty()) {
    throw std::invalid_argument("global_discrepancy: empty m grid");
  }
  check_grid(C_grid, "global_discrepancy");
  GlobalDiscrepancyResult result;
  result.Err = Err;
  for (const Vector& m : m_grid) {
    double C_cls = 0.0;
    bool monotone = true;
    if (model.admissible(m)) {
      const WhitenedOperator B = whiten_operator(model.assemble(m), model.regularizer());
      const SpectralDecomposition svd = truncated_svd(B, rel_threshold);
      // Coefficients of u in the left singular basis; range(A_m) = range(B).
      const Vector coeffs = svd.left_vectors.transpose() * obs.u;
      const double off_range = (obs.u - svd.left_vectors * coeffs).norm();
      if (Err >= off_range) {
        // A g_min - pi(u) = -sum_j C / (s_j^2 + C) <u_j, u> u_j
        double previous = -kInf;
        for (double C : C_grid) {
          double dist_sq = 0.0;
          for (Eigen::Index j = 0; j < coeffs.size(); ++j) {
            const double s = svd.summary.singular_values[static_cast<std::size_t>(j)];
            const double shrink = C / (s * s + C);
            dist_sq += shrink * shrink * coeffs(j) * coeffs(j);
          }
          const double dist = std::sqrt(dist_sq);
          monotone = monotone && dist >= previous * (1.0 - 1e-12);
          previous = dist;
          if (dist <= Err) {
            C_cls = std::max(C_cls, C);
          }
        }
      }
    }
    result.per_m_values.emplace_back(m, C_cls);
    result.monotone.push_back(monotone);
    result.C_bold = std::max(result.C_bold, C_cls);
  }
  return result;
}

MultiStartResult minimize_f_C(const ForwardModel& model, const Observation& obs, double C_bold,
                              const std::vector<Vector>& starts, int budget,
                              const SolverSettings& settings) {
  if (!(C_bold > 0.0)) {
    throw std::invalid_argument("minimize_f_C: C must be positive");
  }
  NelderMeadOptions options;
  options.max_evaluations = budget;
  const Objective f = [&](const Vector& m) { return tikhonov_objective(model, obs, m, C_bold, settings); };
  return multistart_minimize(f, starts, model.parameter_bounds(), options);
}

}  // namespace mixinv
