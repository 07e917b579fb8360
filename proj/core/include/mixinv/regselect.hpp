#pragma once

#include "mixinv/forward_model.hpp"
#include "mixinv/linops.hpp"
#include "mixinv/local_search.hpp"

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace mixinv {

enum class SelectionMethod { GCV, CLS, ML };

std::string_view to_string(SelectionMethod method);

struct SelectionResult {
  double C_star = 0.0;
  double criterion_value = 0.0;
  SelectionMethod method = SelectionMethod::GCV;
  /// The C grid searched, or the (lo, hi) bracket for CLS.
  std::vector<double> grid;
  /// ML only: sqrt(u'(I - B B^#) u / n) at C_star.
  std::optional<double> sigma_est;
};

/// `count` log-uniformly spaced values from lo to hi inclusive, ascending.
std::vector<double> log_grid(double lo, double hi, int count);

/// 100-point log grid over [1e-8, 1e2].
std::vector<double> default_C_grid();

/// ||(I - B B^#) u||^2 / (tr(I - B B^#))^2.
double gcv_score(const WhitenedOperator& B, const SpectralSummary& spectrum, double C,
                 const Vector& u, const SolverSettings& settings = {});

/// Grid argmin of gcv_score; ties go to the larger C.
SelectionResult gcv_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                           const Vector& u, const std::vector<double>& C_grid,
                           const SolverSettings& settings = {});

/// Bisection (in log C) for ||u - B B^# u||^2 = n sigma^2 on [C_lo, C_hi].
/// Throws NoRootError when the target is outside the residual range of the bracket.
SelectionResult cls_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                           const Vector& u, double sigma, std::pair<double, double> bracket,
                           const SolverSettings& settings = {});

/// Grid argmin of ml_ratio with the matching noise estimate; ties go to the larger C.
SelectionResult ml_select(const WhitenedOperator& B, const SpectralSummary& spectrum,
                          const Vector& u, const std::vector<double>& C_grid,
                          const SolverSettings& settings = {});

/// Tikhonov functional at its minimizer: ||A_m g_min - u||^2 + C ||R g_min||^2.
/// +inf when m is not admissible.
double tikhonov_objective(const ForwardModel& model, const Observation& obs, const Vector& m,
                          double C, const SolverSettings& settings = {});

enum class PointwiseMethod { GCV, CLS };

struct SelectionGrids {
  std::vector<double> C_grid = default_C_grid();
};

/// Selects C for this m alone (GCV on the grid, or discrepancy on the grid
/// bracket with obs.sigma_known), then evaluates the Tikhonov functional.
/// A missing discrepancy root yields +inf.
double pointwise_objective(const Vector& m, PointwiseMethod method, const ForwardModel& model,
                           const Observation& obs, const SelectionGrids& grids,
                           const SolverSettings& settings = {});

/// Smallest GCV score over the C grid at this m (+inf when inadmissible).
/// The minimizing C is written to best_C when given.
double global_gcv_objective(const Vector& m, const ForwardModel& model, const Observation& obs,
                            const SelectionGrids& grids, double* best_C = nullptr,
                            const SolverSettings& settings = {});

struct GlobalDiscrepancyResult {
  /// max over the grid of per-m values; 0 when no grid point qualifies.
  double C_bold = 0.0;
  /// (m_i, C_CLS(m_i)) for every grid point.
  std::vector<std::pair<Vector, double>> per_m_values;
  double Err = 0.0;
  /// Whether ||A g_min - pi(u)|| was found nondecreasing along the C grid at m_i.
  std::vector<bool> monotone;
};

/// For each m_i: pi(u) is the projection of u onto range(A_{m_i}). When
/// Err >= ||u - pi(u)||, C_CLS(m_i) is the largest grid C with
/// ||A g_min - pi(u)|| <= Err; otherwise 0.
GlobalDiscrepancyResult global_discrepancy(const ForwardModel& model, const Observation& obs,
                                           double Err, const std::vector<Vector>& m_grid,
                                           const std::vector<double>& C_grid,
                                           double rel_threshold = kDefaultRelThreshold);

/// Multi-start simplex minimization of m -> tikhonov_objective(m, C_bold)
/// over the model's admissible box.
MultiStartResult minimize_f_C(const ForwardModel& model, const Observation& obs, double C_bold,
                              const std::vector<Vector>& starts, int budget,
                              const SolverSettings& settings = {});

}  // namespace mixinv
