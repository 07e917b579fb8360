#include "mixinv/models.hpp"

#include "mixinv/errors.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <string>

namespace mixinv {

Point2 SourceGrid::node(int j) const {
  const int i1 = j % nx1;
  const int i2 = j / nx1;
  return {lo1 + i1 * spacing1(), lo2 + i2 * spacing2()};
}

double SourceGrid::cell_area() const {
  const double h1 = nx1 > 1 ? spacing1() : (hi1 - lo1);
  const double h2 = nx2 > 1 ? spacing2() : (hi2 - lo2);
  return h1 * h2;
}

RegularizerMatrix make_R(const SourceGrid& grid, double eps0) {
  if (!(eps0 > 0.0)) {
    throw std::invalid_argument("make_R: eps0 must be positive");
  }
  if (grid.nx1 < 1 || grid.nx2 < 1) {
    throw std::invalid_argument("make_R: empty grid");
  }
  const int p = grid.size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(5 * p));
  for (int i2 = 0; i2 < grid.nx2; ++i2) {
    for (int i1 = 0; i1 < grid.nx1; ++i1) {
      const int j = i1 + grid.nx1 * i2;
      int degree = 0;
      const auto link = [&](int k) {
        triplets.emplace_back(j, k, -1.0);
        ++degree;
      };
      if (i1 > 0) link(j - 1);
      if (i1 + 1 < grid.nx1) link(j + 1);
      if (i2 > 0) link(j - grid.nx1);
      if (i2 + 1 < grid.nx2) link(j + grid.nx1);
      triplets.emplace_back(j, j, eps0 + degree);
    }
  }
  SparseMatrix R(p, p);
  R.setFromTriplets(triplets.begin(), triplets.end());
  return RegularizerMatrix(std::move(R));
}

Vector synth_slip(const SourceGrid& grid, const std::vector<Bump>& bumps) {
  Vector g = Vector::Zero(grid.size());
  for (const Bump& bump : bumps) {
    if (!(bump.radius > 0.0)) {
      throw std::invalid_argument("synth_slip: bump radius must be positive");
    }
    for (int j = 0; j < grid.size(); ++j) {
      const Point2 x = grid.node(j);
      const double r = std::hypot(x.x1 - bump.center.x1, x.x2 - bump.center.x2);
      if (r < bump.radius) {
        g(j) += bump.amplitude * 0.5 * (1.0 + std::cos(std::numbers::pi * r / bump.radius));
      }
    }
  }
  return g;
}

std::vector<Point2> scatter_stations(int n, Point2 lo, Point2 hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u1(lo.x1, hi.x1);
  std::uniform_real_distribution<double> u2(lo.x2, hi.x2);
  std::vector<Point2> stations(static_cast<std::size_t>(n));
  for (Point2& s : stations) {
    s.x1 = u1(rng);
    s.x2 = u2(rng);
  }
  return stations;
}

PlanarSourceModel::PlanarSourceModel(Options options)
    : options_(std::move(options)), R_(make_R(options_.grid, options_.eps0)) {
  if (options_.stations.empty()) {
    throw std::invalid_argument("PlanarSourceModel: no stations");
  }
  if (options_.bounds.size() != 3) {
    throw std::invalid_argument("PlanarSourceModel: expected three parameter bounds");
  }
  if (!(options_.depth_scale > 0.0)) {
    throw std::invalid_argument("PlanarSourceModel: depth_scale must be positive");
  }
}

double PlanarSourceModel::highest_point(const Vector& m) const {
  const SourceGrid& g = options_.grid;
  const double a = m(0);
  const double b = m(1);
  const double d = options_.depth_scale * m(2);
  // The plane is affine, so its maximum over the rectangle is attained at a corner.
  const double x1 = a >= 0.0 ? g.hi1 : g.lo1;
  const double x2 = b >= 0.0 ? g.hi2 : g.lo2;
  return a * x1 + b * x2 + d;
}

bool PlanarSourceModel::admissible(const Vector& m) const {
  return m.size() == 3 && m.allFinite() && highest_point(m) < 0.0;
}

LinearOperator PlanarSourceModel::assemble(const Vector& m) const {
  if (m.size() != 3) {
    throw std::invalid_argument("PlanarSourceModel::assemble: expected m = (a, b, d)");
  }
  if (!admissible(m)) {
    throw GeometryError("PlanarSourceModel::assemble: plane reaches the surface (highest point " +
                        std::to_string(highest_point(m)) + ")");
  }
  const SourceGrid& grid = options_.grid;
  const Eigen::Index n = measurement_count();
  const Eigen::Index p = source_count();
  const double d = options_.depth_scale * m(2);

  Eigen::ArrayXd nx1(p), nx2(p), depth_sq(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const Point2 x = grid.node(static_cast<int>(j));
    nx1(j) = x.x1;
    nx2(j) = x.x2;
  }
  depth_sq = (m(0) * nx1 + m(1) * nx2 + d).square();

  const double weight = grid.cell_area() / (4.0 * std::numbers::pi);
  Matrix A(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2& s = options_.stations[static_cast<std::size_t>(i)];
    A.row(i) = (weight / ((nx1 - s.x1).square() + (nx2 - s.x2).square() + depth_sq)).matrix().transpose();
  }
  return LinearOperator(std::move(A));
}

PlanarSourceModel::Options default_planar_options(std::uint64_t station_seed) {
  PlanarSourceModel::Options options;
  options.grid = SourceGrid{20, 20, 0.0, 40.0, 0.0, 40.0};
  options.stations = scatter_stations(51, {-10.0, -10.0}, {50.0, 50.0}, station_seed);
  return options;
}

std::pair<Observation, GroundTruth> generate_observations(const ForwardModel& model,
                                                          const Vector& m_true,
                                                          const Vector& g_true,
                                                          double noise_ratio,
                                                          std::mt19937_64& rng) {
  if (!(noise_ratio >= 0.0)) {
    throw std::invalid_argument("generate_observations: noise_ratio must be non-negative");
  }
  GroundTruth truth;
  truth.m_true = m_true;
  truth.g_true = g_true;
  truth.noise_ratio = noise_ratio;
  truth.u_clean = model.assemble(m_true).matrix() * g_true;

  const double n = static_cast<double>(truth.u_clean.size());
  const double clean_norm = truth.u_clean.norm();
  if (noise_ratio > 0.0 && clean_norm == 0.0) {
    throw std::invalid_argument("generate_observations: zero clean signal cannot carry relative noise");
  }
  truth.sigma_true = noise_ratio * clean_norm / std::sqrt(n);

  Observation obs;
  obs.u = truth.u_clean;
  if (truth.sigma_true > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < obs.u.size(); ++i) {
      obs.u(i) += truth.sigma_true * normal(rng);
    }
  }
  obs.sigma_known = truth.sigma_true;
  obs.provenance = "synthetic";
  return {std::move(obs), std::move(truth)};
}

LinearOperator dense_test_operator(std::uint64_t seed, Eigen::Index n, Eigen::Index p,
                                   double decay_rate) {
  if (n < 1 || n > p) {
    throw std::invalid_argument("dense_test_operator: requires 1 <= n <= p");
  }
  if (!(decay_rate >= 0.0)) {
    throw std::invalid_argument("dense_test_operator: decay_rate must be non-negative");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix G(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        G(i, j) = normal(rng);
      }
    }
    return G;
  };
  const Matrix U = Eigen::HouseholderQR<Matrix>(gaussian(n, n)).householderQ();
  const Matrix V = Eigen::HouseholderQR<Matrix>(gaussian(p, n)).householderQ() * Matrix::Identity(p, n);
  Vector s(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    s(j) = std::pow(10.0, -decay_rate * static_cast<double>(j));
  }
  return LinearOperator(U * s.asDiagonal() * V.transpose());
}

}  // namespace mixinv
