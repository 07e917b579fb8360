#include "mixinv/errors.hpp"
#include "mixinv/models.hpp"
#include "mixinv/regselect.hpp"
#include "testing_util.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <numbers>

using namespace mixinv;
using mixinv::testing::Gen;
using mixinv::testing::rel_diff;

namespace {

PlanarSourceModel small_model(std::vector<Point2> stations, int nodes = 6) {
  PlanarSourceModel::Options o;
  o.grid.nx1 = o.grid.nx2 = nodes;
  o.grid.hi1 = o.grid.hi2 = 10.0;
  o.stations = std::move(stations);
  return PlanarSourceModel(o);
}

}  // namespace

TEST(SourceGrid, NodesAndArea) {
  SourceGrid g;
  EXPECT_EQ(g.size(), 400);
  const Point2 p = g.node(21);  // i1 = 1, i2 = 1
  EXPECT_NEAR(p.x1, 40.0 / 19.0, 1e-14);
  EXPECT_NEAR(p.x2, 40.0 / 19.0, 1e-14);
  EXPECT_NEAR(g.cell_area(), std::pow(40.0 / 19.0, 2), 1e-12);
}

TEST(DefaultPlanarOptions, DeskScale) {
  const PlanarSourceModel model(default_planar_options());
  EXPECT_EQ(model.measurement_count(), 51);
  EXPECT_EQ(model.source_count(), 400);
  EXPECT_EQ(model.parameter_count(), 3);
}

TEST(Assemble, StationAboveNodeGivesVerticalDistance) {
  const SourceGrid grid = small_model({{0.0, 0.0}}).options().grid;
  const int j = 14;
  const Point2 above = grid.node(j);
  const PlanarSourceModel model = small_model({above});
  const double h = 7.0;
  const LinearOperator A = model.assemble(Vector{{0.0, 0.0, -h / 100.0}});
  EXPECT_LT(rel_diff(A.matrix()(0, j), grid.cell_area() / (4.0 * std::numbers::pi * h * h)), 1e-14);
}

TEST(Assemble, FlatPlaneDependsOnHorizontalDistanceOnly) {
  // Stations offset by (+3, 0) and (0, +3) from node 0 and by (-3, 0) from the last node.
  const SourceGrid grid = small_model({{0.0, 0.0}}).options().grid;
  const Point2 first = grid.node(0), last = grid.node(grid.size() - 1);
  const PlanarSourceModel model =
      small_model({{first.x1 + 3.0, first.x2}, {first.x1, first.x2 + 3.0}, {last.x1 - 3.0, last.x2}});
  const Matrix A = model.assemble(Vector{{0.0, 0.0, -0.05}}).matrix();
  EXPECT_LT(rel_diff(A(0, 0), A(1, 0)), 1e-14);
  EXPECT_LT(rel_diff(A(0, 0), A(2, grid.size() - 1)), 1e-14);
}

TEST(Assemble, InadmissiblePlaneThrows) {
  const PlanarSourceModel model(default_planar_options());
  const Vector shallow{{0.5, 0.0, -0.1}};  // rises to -10 + 20 = 10 at the far edge
  EXPECT_FALSE(model.admissible(shallow));
  EXPECT_THROW(model.assemble(shallow), GeometryError);
  EXPECT_THROW(model.assemble(Vector{{0.0, 0.0, 0.0}}), GeometryError);
  EXPECT_TRUE(model.admissible(Vector{{-0.12, -0.26, -0.14}}));
  EXPECT_NEAR(model.highest_point(Vector{{-0.12, -0.26, -0.14}}), -14.0, 1e-12);
}

// Property: entries are positive and shrink as the plane deepens.
TEST(Assemble, PositiveAndDecreasingWithDepthProperty) {
  const PlanarSourceModel model(default_planar_options());
  Gen gen(71);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = gen.uniform(-0.2, 0.2), b = gen.uniform(-0.2, 0.2);
    const double d = -0.1 - gen.uniform(0.0, 0.1);
    const Matrix A1 = model.assemble(Vector{{a, b, d}}).matrix();
    const Matrix A2 = model.assemble(Vector{{a, b, d - 0.05}}).matrix();
    EXPECT_GT(A1.minCoeff(), 0.0);
    EXPECT_TRUE((A2.array() < A1.array()).all());
    EXPECT_TRUE(A1.allFinite());
  }
}

// Property: A_m is Lipschitz in m near an interior point.
TEST(Assemble, ContinuityProperty) {
  const PlanarSourceModel model(default_planar_options());
  const Vector m{{-0.12, -0.26, -0.14}};
  const Matrix A = model.assemble(m).matrix();
  Gen gen(72);
  double L = 0.0;
  std::vector<Vector> deltas;
  for (int i = 0; i < 100; ++i) {
    const Vector delta = gen.vector(3) * 1e-3;
    deltas.push_back(delta);
    L = std::max(L, (model.assemble(m + delta).matrix() - A).norm() / delta.norm());
  }
  ASSERT_TRUE(std::isfinite(L));
  ASSERT_GT(L, 0.0);
  // Halving every step keeps the ratio under the estimated constant.
  for (const Vector& delta : deltas) {
    EXPECT_LE((model.assemble(m + 0.5 * delta).matrix() - A).norm(), 1.05 * L * 0.5 * delta.norm());
  }
}

TEST(MakeR, ConstantsAreScaledByEps0) {
  SourceGrid g;
  g.nx1 = 7;
  g.nx2 = 5;
  const RegularizerMatrix R = make_R(g, 0.03);
  const Vector c = Vector::Constant(35, 2.5);
  EXPECT_NEAR(R.apply(c).norm(), 0.03 * c.norm(), 1e-13);
  EXPECT_LE(R.nonzeros(), 5 * 35);
  EXPECT_THROW(make_R(g, 0.0), std::invalid_argument);
}

TEST(MakeR, SmallestEigenvalueIsEps0) {
  SourceGrid g;
  g.nx1 = g.nx2 = 10;
  const RegularizerMatrix R = make_R(g, 1e-2);
  const Matrix dense = Matrix(R.matrix());
  EXPECT_EQ(dense, dense.transpose());
  const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(dense).eigenvalues();
  EXPECT_GE(eig.minCoeff(), 1e-2 * (1.0 - 1e-10));
  EXPECT_NEAR(eig.minCoeff(), 1e-2, 1e-10);
  EXPECT_NEAR(R.smallest_singular_value(), 1e-2, 1e-6);
}

TEST(SynthSlip, EmptyUnitAndAdditive) {
  SourceGrid g;
  EXPECT_EQ(synth_slip(g, {}).norm(), 0.0);
  const Point2 c = g.node(10 + 20 * 10);
  const Vector one = synth_slip(g, {{c, 6.0, 1.0}});
  EXPECT_DOUBLE_EQ(one.maxCoeff(), 1.0);
  EXPECT_DOUBLE_EQ(one(10 + 20 * 10), 1.0);
  EXPECT_GE(one.minCoeff(), 0.0);
  const Bump left{{8.0, 8.0}, 5.0, 0.6}, right{{30.0, 30.0}, 6.0, 1.3};
  EXPECT_LT((synth_slip(g, {left, right}) - synth_slip(g, {left}) - synth_slip(g, {right})).norm(), 1e-15);
}

TEST(ScatterStations, DeterministicAndInBox) {
  const auto a = scatter_stations(51, {-10.0, -10.0}, {50.0, 50.0}, 17);
  const auto b = scatter_stations(51, {-10.0, -10.0}, {50.0, 50.0}, 17);
  ASSERT_EQ(a.size(), 51u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x1, b[i].x1);
    EXPECT_EQ(a[i].x2, b[i].x2);
    EXPECT_GE(a[i].x1, -10.0);
    EXPECT_LE(a[i].x2, 50.0);
  }
}

TEST(GenerateObservations, NoiselessAndReproducible) {
  const PlanarSourceModel model(default_planar_options());
  const Vector m{{-0.12, -0.26, -0.14}};
  const Vector g = synth_slip(model.options().grid, {{{20.0, 20.0}, 10.0, 1.0}});
  std::mt19937_64 r1(7), r2(7);
  const auto [obs0, truth0] = generate_observations(model, m, g, 0.0, r1);
  EXPECT_EQ(obs0.u, truth0.u_clean);
  EXPECT_LT((truth0.u_clean - model.assemble(m).matrix() * g).norm(), 1e-15 * truth0.u_clean.norm());
  std::mt19937_64 r3(7);
  const auto [obs1, truth1] = generate_observations(model, m, g, 0.05, r2);
  const auto [obs2, truth2] = generate_observations(model, m, g, 0.05, r3);
  EXPECT_EQ(obs1.u, obs2.u);
  EXPECT_NEAR(std::sqrt(51.0) * truth1.sigma_true / truth1.u_clean.norm(), 0.05, 1e-15);
  ASSERT_TRUE(obs1.sigma_known.has_value());
  EXPECT_EQ(*obs1.sigma_known, truth1.sigma_true);
  EXPECT_THROW(generate_observations(model, m, Vector::Zero(400), 0.05, r1), std::invalid_argument);
}

TEST(GenerateObservations, NoiseNormFollowsChi) {
  const PlanarSourceModel model(default_planar_options());
  const Vector m{{-0.12, -0.26, -0.14}};
  const Vector g = synth_slip(model.options().grid, {{{20.0, 20.0}, 10.0, 1.0}});
  std::mt19937_64 rng(73);
  double sum = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto [obs, truth] = generate_observations(model, m, g, 0.1, rng);
    sum += (obs.u - truth.u_clean).norm() / truth.sigma_true;
  }
  // chi_51 has mean close to sqrt(50.5) and standard deviation close to 1/sqrt(2).
  EXPECT_NEAR(sum / 100.0, std::sqrt(50.5), 3.0 / std::sqrt(2.0) / 10.0);
}

TEST(DenseTestOperator, PrescribedSpectrum) {
  const Vector flat = Eigen::JacobiSVD<Matrix>(dense_test_operator(1, 4, 7, 0.0).matrix()).singularValues();
  EXPECT_LT((flat - Vector::Ones(4)).cwiseAbs().maxCoeff(), 1e-12);
  const Vector s = Eigen::JacobiSVD<Matrix>(dense_test_operator(2, 5, 8, 0.5).matrix()).singularValues();
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_LT(rel_diff(s(j), std::pow(10.0, -0.5 * j)), 1e-10);
  EXPECT_LT(rel_diff(s(0) / s(4), std::pow(10.0, 0.5 * 4)), 1e-10);
  EXPECT_THROW(dense_test_operator(3, 9, 8, 0.5), std::invalid_argument);
}

// Deeper planes need a larger source to produce the same surface data.
TEST(DepthIntensityTradeoff, DeeperPlaneNeedsLargerSource) {
  PlanarSourceModel::Options o;
  o.grid.nx1 = o.grid.nx2 = 10;
  o.grid.hi1 = o.grid.hi2 = 20.0;
  for (int i = 0; i < 5; ++i)
    for (int k = 0; k < 5; ++k) o.stations.push_back({-5.0 + 7.5 * i, -5.0 + 7.5 * k});
  const PlanarSourceModel model(o);
  const Vector g_true = synth_slip(o.grid, {{{10.0, 10.0}, 8.0, 1.0}});
  std::mt19937_64 rng(74);
  const auto [obs, truth] = generate_observations(model, Vector{{0.0, 0.0, -0.08}}, g_true, 0.02, rng);
  const double target = 25.0 * truth.sigma_true * truth.sigma_true;

  double previous_norm = 0.0;
  for (double d : {-0.05, -0.08, -0.11}) {
    const LinearOperator A = model.assemble(Vector{{0.0, 0.0, d}});
    const WhitenedOperator B = whiten_operator(A, model.regularizer());
    const SelectionResult sel = cls_select(B, truncated_singular_values(B), obs.u, truth.sigma_true, {1e-12, 1e4});
    EXPECT_LE(std::abs(sel.criterion_value - target), 1e-8 * obs.u.squaredNorm());
    const double norm = solve_gmin(A, model.regularizer(), sel.C_star, obs.u).norm();
    EXPECT_GT(norm, previous_norm) << "d = " << d;
    previous_norm = norm;
  }
}
