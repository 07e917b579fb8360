#pragma once

#include "mixinv/linops.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mixinv {

/// Measured data u, with the noise level when it is known.
struct Observation {
  Vector u;
  std::optional<double> sigma_known;
  std::string provenance;
};

/// Map m -> A_m together with the fixed regularizer R.
///
/// Implementations must be safe to call concurrently: assemble() may not
/// mutate the model.
class ForwardModel {
 public:
  virtual ~ForwardModel() = default;

  virtual Eigen::Index parameter_count() const = 0;
  virtual Eigen::Index measurement_count() const = 0;
  virtual Eigen::Index source_count() const = 0;

  /// Admissible box for m, one (lower, upper) pair per coordinate.
  virtual std::vector<std::pair<double, double>> parameter_bounds() const = 0;

  /// True when assemble(m) is defined (for instance, the source lies below
  /// the measurement surface).
  virtual bool admissible(const Vector& m) const = 0;

  virtual LinearOperator assemble(const Vector& m) const = 0;

  virtual const RegularizerMatrix& regularizer() const = 0;
};

}  // namespace mixinv
