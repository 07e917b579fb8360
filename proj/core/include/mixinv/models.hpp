#pragma once

#include "mixinv/forward_model.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mixinv {

struct Point2 {
  double x1 = 0.0;
  double x2 = 0.0;
};

/// Regular nx1 x nx2 grid of source nodes over a horizontal rectangle.
/// Node j = i1 + nx1 * i2 sits at (lo1 + i1 * h1, lo2 + i2 * h2).
struct SourceGrid {
  int nx1 = 20;
  int nx2 = 20;
  double lo1 = 0.0;
  double hi1 = 40.0;
  double lo2 = 0.0;
  double hi2 = 40.0;

  int size() const { return nx1 * nx2; }
  double spacing1() const { return nx1 > 1 ? (hi1 - lo1) / (nx1 - 1) : 0.0; }
  double spacing2() const { return nx2 > 1 ? (hi2 - lo2) / (nx2 - 1) : 0.0; }
  Point2 node(int j) const;
  /// Horizontal area attached to every node.
  double cell_area() const;
};

/// eps0 * I + L with L the 5-point graph Laplacian of the grid under
/// zero-flux boundaries. SPD with smallest eigenvalue eps0.
RegularizerMatrix make_R(const SourceGrid& grid, double eps0);

/// Cosine-tapered bump: amplitude * (1 + cos(pi r / radius)) / 2 inside the radius.
struct Bump {
  Point2 center;
  double radius = 1.0;
  double amplitude = 1.0;
};

Vector synth_slip(const SourceGrid& grid, const std::vector<Bump>& bumps);

/// Deterministic scatter of n stations over a rectangle (seeded uniform draws).
std::vector<Point2> scatter_stations(int n, Point2 lo, Point2 hi, std::uint64_t seed);

/// Planar source with m = (a, b, d / depth_scale).
///
/// Source node j is lifted onto x3 = a x1 + b x2 + d and observed at surface
/// stations through the kernel area_j / (4 pi r^2).
class PlanarSourceModel final : public ForwardModel {
 public:
  struct Options {
    SourceGrid grid;
    std::vector<Point2> stations;
    double eps0 = 1e-2;
    double depth_scale = 100.0;
    std::vector<std::pair<double, double>> bounds{{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
  };

  explicit PlanarSourceModel(Options options);

  Eigen::Index parameter_count() const override { return 3; }
  Eigen::Index measurement_count() const override {
    return static_cast<Eigen::Index>(options_.stations.size());
  }
  Eigen::Index source_count() const override { return options_.grid.size(); }
  std::vector<std::pair<double, double>> parameter_bounds() const override {
    return options_.bounds;
  }
  bool admissible(const Vector& m) const override;
  LinearOperator assemble(const Vector& m) const override;
  const RegularizerMatrix& regularizer() const override { return R_; }

  const Options& options() const { return options_; }
  /// Shallowest point of the plane over the grid footprint (x3 value).
  double highest_point(const Vector& m) const;

 private:
  Options options_;
  RegularizerMatrix R_;
};

/// Default desk-scale configuration: 20 x 20 grid and 51 scattered stations.
PlanarSourceModel::Options default_planar_options(std::uint64_t station_seed = 17);

struct GroundTruth {
  Vector m_true;
  Vector g_true;
  double sigma_true = 0.0;
  double noise_ratio = 0.0;
  Vector u_clean;
};

/// u = A_{m_true} g_true + sigma * N(0, I) with sqrt(n) sigma / ||u_clean|| = noise_ratio.
std::pair<Observation, GroundTruth> generate_observations(const ForwardModel& model,
                                                          const Vector& m_true,
                                                          const Vector& g_true,
                                                          double noise_ratio,
                                                          std::mt19937_64& rng);

/// U diag(s) V' with seeded random orthonormal factors and s_j = 10^(-decay_rate (j-1)).
LinearOperator dense_test_operator(std::uint64_t seed, Eigen::Index n, Eigen::Index p,
                                   double decay_rate);

}  // namespace mixinv
