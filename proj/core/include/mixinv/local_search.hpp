#pragma once

#include "mixinv/linops.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace mixinv {

using Bounds = std::vector<std::pair<double, double>>;
using Objective = std::function<double(const Vector&)>;

struct NelderMeadOptions {
  int max_evaluations = 400;
  /// Initial simplex edge as a fraction of each box width.
  double initial_step = 0.05;
  double f_tol = 1e-10;
  /// Simplex diameter tolerance as a fraction of the box width.
  double x_tol = 1e-8;
};

struct LocalMinimum {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Nelder-Mead simplex search; every trial point is clamped onto the box.
/// Objective values of +inf (infeasible) are handled as ordinary worst points.
LocalMinimum nelder_mead(const Objective& f, const Vector& start, const Bounds& bounds,
                         const NelderMeadOptions& options = {});

struct MultiStartResult {
  Vector best;
  double best_value = 0.0;
  /// One entry per start, sorted by ascending objective value.
  std::vector<LocalMinimum> local_minima;
  /// Some start stopped on its evaluation budget before converging.
  bool budget_exhausted = false;
};

MultiStartResult multistart_minimize(const Objective& f, const std::vector<Vector>& starts,
                                     const Bounds& bounds, const NelderMeadOptions& options = {});

/// Uniform tensor grid with `per_axis` points on each coordinate of the box.
std::vector<Vector> box_grid(const Bounds& bounds, int per_axis);

}  // namespace mixinv
