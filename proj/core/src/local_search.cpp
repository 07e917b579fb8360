#include "mixinv/local_search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mixinv {

namespace {

Vector clamp(Vector x, const Bounds& bounds) {
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const auto [lo, hi] = bounds[static_cast<std::size_t>(k)];
    x(k) = std::clamp(x(k), lo, hi);
  }
  return x;
}

double sanitize(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

}  // namespace

LocalMinimum nelder_mead(const Objective& f, const Vector& start, const Bounds& bounds,
                         const NelderMeadOptions& options) {
  const Eigen::Index dim = start.size();
  if (dim < 1 || static_cast<Eigen::Index>(bounds.size()) != dim) {
    throw std::invalid_argument("nelder_mead: start and bounds dimensions differ");
  }
  int evaluations = 0;
  // Hard cap: once the budget is spent, trial points score +inf unevaluated.
  const auto eval = [&](const Vector& x) {
    if (evaluations >= options.max_evaluations) {
      return std::numeric_limits<double>::infinity();
    }
    ++evaluations;
    return sanitize(f(x));
  };

  Vector width(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    width(k) = bounds[static_cast<std::size_t>(k)].second - bounds[static_cast<std::size_t>(k)].first;
  }

  std::vector<Vector> simplex;
  std::vector<double> values;
  simplex.push_back(clamp(start, bounds));
  values.push_back(eval(simplex[0]));
  for (Eigen::Index k = 0; k < dim; ++k) {
    Vector x = simplex[0];
    const double step = options.initial_step * width(k);
    // Step inward when the start sits on the upper face.
    x(k) = (x(k) + step <= bounds[static_cast<std::size_t>(k)].second) ? x(k) + step : x(k) - step;
    simplex.push_back(clamp(x, bounds));
    values.push_back(eval(simplex.back()));
  }

  std::vector<std::size_t> order(simplex.size());
  bool converged = false;
  while (evaluations < options.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second_worst = order[order.size() - 2];

    double diameter = 0.0;
    for (const Vector& x : simplex) {
      diameter = std::max(diameter, ((x - simplex[best]).array() / width.array()).abs().maxCoeff());
    }
    const bool flat = std::isfinite(values[worst]) &&
                      std::abs(values[worst] - values[best]) <=
                          options.f_tol * (std::abs(values[best]) + options.f_tol);
    if (flat && diameter <= options.x_tol * 1e3) {
      converged = true;
      break;
    }
    if (diameter <= options.x_tol) {
      converged = true;
      break;
    }

    Vector centroid = Vector::Zero(dim);
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(dim);

    const Vector reflected = clamp(centroid + (centroid - simplex[worst]), bounds);
    const double f_reflected = eval(reflected);
    if (f_reflected < values[best]) {
      const Vector expanded = clamp(centroid + 2.0 * (centroid - simplex[worst]), bounds);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        simplex[worst] = expanded;
        values[worst] = f_expanded;
      } else {
        simplex[worst] = reflected;
        values[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < values[second_worst]) {
      simplex[worst] = reflected;
      values[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < values[worst];
    const Vector contracted = outside ? clamp(centroid + 0.5 * (reflected - centroid), bounds)
                                      : clamp(centroid + 0.5 * (simplex[worst] - centroid), bounds);
    const double f_contracted = eval(contracted);
    if (f_contracted < (outside ? f_reflected : values[worst])) {
      simplex[worst] = contracted;
      values[worst] = f_contracted;
      continue;
    }
    for (std::size_t i = 0; i < simplex.size(); ++i) {
      if (i == best) continue;
      simplex[i] = clamp(simplex[best] + 0.5 * (simplex[i] - simplex[best]), bounds);
      values[i] = eval(simplex[i]);
    }
  }

  const auto best_it = std::min_element(values.begin(), values.end());
  const std::size_t best = static_cast<std::size_t>(best_it - values.begin());
  return {simplex[best], values[best], evaluations, converged};
}

MultiStartResult multistart_minimize(const Objective& f, const std::vector<Vector>& starts,
                                     const Bounds& bounds, const NelderMeadOptions& options) {
  if (starts.empty()) {
    throw std::invalid_argument("multistart_minimize: no starting points");
  }
  MultiStartResult result;
  for (const Vector& start : starts) {
    LocalMinimum local = nelder_mead(f, start, bounds, options);
    result.budget_exhausted = result.budget_exhausted || !local.converged;
    result.local_minima.push_back(std::move(local));
  }
  std::stable_sort(result.local_minima.begin(), result.local_minima.end(),
                   [](const LocalMinimum& a, const LocalMinimum& b) { return a.value < b.value; });
  result.best = result.local_minima.front().x;
  result.best_value = result.local_minima.front().value;
  return result;
}

std::vector<Vector> box_grid(const Bounds& bounds, int per_axis) {
  if (per_axis < 1 || bounds.empty()) {
    throw std::invalid_argument("box_grid: need a non-empty box and at least one point per axis");
  }
  const std::size_t dim = bounds.size();
  std::size_t total = 1;
  for (std::size_t k = 0; k < dim; ++k) total *= static_cast<std::size_t>(per_axis);
  std::vector<Vector> points;
  points.reserve(total);
  for (std::size_t index = 0; index < total; ++index) {
    Vector x(static_cast<Eigen::Index>(dim));
    std::size_t rest = index;
    for (std::size_t k = 0; k < dim; ++k) {
      const int i = static_cast<int>(rest % static_cast<std::size_t>(per_axis));
      rest /= static_cast<std::size_t>(per_axis);
      const auto [lo, hi] = bounds[k];
      x(static_cast<Eigen::Index>(k)) =
          per_axis == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (per_axis - 1);
    }
    points.push_back(std::move(x));
  }
  return points;
}

}  // namespace mixinv
