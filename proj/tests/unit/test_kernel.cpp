#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "coherence/kernel.hpp"
#include "test_util.hpp"

namespace coherence {
namespace {

using testing::error_code_of;
using testing::full_graph;
using testing::pairwise_sq;

std::shared_ptr<const SparseDistanceGraph> share(SparseDistanceGraph g) {
  return std::make_shared<const SparseDistanceGraph>(std::move(g));
}

TEST(TuneBandwidth, OneDistanceMatchesClosedForm) {
  const std::size_t n = 5;
  const double c = 2.0;
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Constant(n, n, c);
  d2.diagonal().setZero();
  const auto tuning = tune_bandwidth(full_graph(d2));
  EXPECT_DOUBLE_EQ(tuning.median_sq_dist, c);

  // Slope of log Sigma in log eps for Sigma = (n + (n^2 - n) e^{-c/eps}) / n^2.
  auto slope = [&](double eps) {
    const double e = (n * n - n) * std::exp(-c / eps);
    return e * (c / eps) / (n + e);
  };
  double best_eps = 0.0;
  double best = -1.0;
  for (int s = 0; s <= 600000; ++s) {
    const double eps = c * std::pow(10.0, -3.0 + 6.0 * s / 600000.0);
    if (slope(eps) > best) {
      best = slope(eps);
      best_eps = eps;
    }
  }
  const double step = std::pow(10.0, 6.0 / 200.0 / 2.0);  // one grid step in sigma
  EXPECT_LE(tuning.sigma_star / std::sqrt(best_eps), step * (1 + 1e-12));
  EXPECT_GE(tuning.sigma_star / std::sqrt(best_eps), 1.0 / step * (1 - 1e-12));
  EXPECT_NEAR(tuning.m_est, 2.0 * best, 0.05);
}

TEST(TuneBandwidth, GridAndSumsAgreeWithBruteForce) {
  const auto traj = circle_flow(1.0, 2.0 * std::numbers::pi / 1000.0, 1000);
  const Eigen::MatrixXd d2 = pairwise_sq(traj.states());
  const auto tuning = tune_bandwidth(full_graph(d2));
  ASSERT_EQ(tuning.grid.size(), kTuningGridSize);
  EXPECT_TRUE(std::find(tuning.grid.begin(), tuning.grid.end(), tuning.sigma_star) !=
              tuning.grid.end());
  for (std::size_t g : {0u, 50u, 100u, 150u, 200u}) {
    const double eps = tuning.grid[g] * tuning.grid[g];
    const double sum = (-d2.array() / eps).exp().mean();
    EXPECT_NEAR(tuning.kernel_sums[g], sum, 1e-10 * sum);
    EXPECT_GT(tuning.kernel_sums[g], 0.0);
  }
}

TEST(TuneBandwidth, CircleDimensionNearOne) {
  const auto traj = circle_flow(1.0, 2.0 * std::numbers::pi / 1000.0, 1000);
  const auto graph = build_knn_graph(traj, DelayConfig(1, traj.dt()), default_knn(traj.size()));
  const auto tuning = tune_bandwidth(graph);
  EXPECT_GE(tuning.m_est, 0.8);
  EXPECT_LE(tuning.m_est, 1.2);
  EXPECT_FALSE(tuning.flat_spectrum);
}

TEST(TuneBandwidth, IdenticalPointsAreDegenerate) {
  StateMatrix s = StateMatrix::Constant(10, 2, 3.0);
  const StateTrajectory traj(s, 0.1);
  const auto g = build_knn_graph(traj, DelayConfig(1, 0.1), 4);
  EXPECT_EQ(error_code_of([&] { tune_bandwidth(g); }), ErrorCode::kDegenerateData);
}

TEST(TuneBandwidth, RejectsNonPositiveRho) {
  const auto g = full_graph(pairwise_sq(testing::random_states(5, 2, 1)));
  const std::vector<double> rho{1, 1, 0, 1, 1};
  EXPECT_EQ(error_code_of([&] { tune_bandwidth(g, rho); }), ErrorCode::kInput);
}

TEST(BandwidthFunction, IdenticalPointsShareRho) {
  const auto g = full_graph(Eigen::MatrixXd::Zero(2, 2));
  const auto rho = bandwidth_function(g, 0.7, 1.0);
  EXPECT_EQ(rho[0], rho[1]);
  EXPECT_DOUBLE_EQ(rho[0], 1.0);
}

TEST(BandwidthFunction, SingleNeighbourClosedForm) {
  const double sigma_bar = 1.3;
  Eigen::MatrixXd d2(2, 2);
  d2 << 0, sigma_bar * sigma_bar, sigma_bar * sigma_bar, 0;
  const auto rho = bandwidth_function(full_graph(d2), sigma_bar, 1.0);
  const double expected = 2.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(rho[0], expected, 1e-14);
  EXPECT_NEAR(rho[1], expected, 1e-14);
}

TEST(BandwidthFunction, DenserRegionHasSmallerRho) {
  StateMatrix pts(40, 2);
  const StateMatrix a = testing::random_states(30, 2, 2, 0.1);
  const StateMatrix b = testing::random_states(10, 2, 3, 1.0);
  pts.topRows(30) = a;
  pts.bottomRows(10) = b.rowwise() + Eigen::RowVector2d(5.0, 0.0);
  const Eigen::MatrixXd d2 = pairwise_sq(pts);
  const double sigma_bar = 0.5;
  const double m = 2.0;
  const auto rho = bandwidth_function(full_graph(d2), sigma_bar, m);
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (Eigen::Index i = 0; i < 40; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < 40; ++j) sum += std::exp(-d2(i, j) / (sigma_bar * sigma_bar));
    EXPECT_NEAR(rho[static_cast<std::size_t>(i)], std::pow(sum / 40.0, -1.0 / m), 1e-12);
    (i < 30 ? mean_a : mean_b) += rho[static_cast<std::size_t>(i)];
  }
  EXPECT_LT(mean_a / 30.0, mean_b / 10.0);
}

TEST(BandwidthFunction, UnderflowNamesTheRow) {
  SparseDistanceGraph g;
  g.n = 2;
  g.k = 1;
  g.row_ptr = {0, 1, 2};
  g.cols = {1, 0};
  g.sq_dists = {1e6, 1e6};
  try {
    bandwidth_function(g, 1e-3, 1.0);
    FAIL() << "expected an isolated-sample error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIsolatedSample);
    EXPECT_NE(std::string(e.what()).find("row 0"), std::string::npos);
  }
}

TEST(VariableBandwidthKernel, DiagonalIsOne) {
  const auto g = share(full_graph(pairwise_sq(testing::random_states(6, 3, 4))));
  const std::vector<double> rho{1, 2, 3, 0.5, 0.7, 1.1};
  const auto k = variable_bandwidth_kernel(g, 0.9, rho);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(k.values[i * 6 + i], 1.0);
  EXPECT_EQ(k.kind, KernelKind::kVariableBandwidth);
}

TEST(VariableBandwidthKernel, UnitRhoIsFixedGaussian) {
  const Eigen::MatrixXd d2 = pairwise_sq(testing::random_states(7, 2, 5));
  const auto g = share(full_graph(d2));
  const std::vector<double> ones(7, 1.0);
  const auto a = variable_bandwidth_kernel(g, 1.7, ones);
  const auto b = variable_bandwidth_kernel(g, 1.7);
  EXPECT_EQ(a.values, b.values);
  for (Eigen::Index i = 0; i < 7; ++i) {
    for (Eigen::Index j = 0; j < 7; ++j) {
      EXPECT_EQ(b.values[static_cast<std::size_t>(i * 7 + j)], std::exp(-d2(i, j) / (1.7 * 1.7)));
    }
  }
}

TEST(VariableBandwidthKernel, ClosedFormEntry) {
  Eigen::MatrixXd d2(2, 2);
  d2 << 0, 2, 2, 0;
  const std::vector<double> rho{1.0, 2.0};
  const auto k = variable_bandwidth_kernel(share(full_graph(d2)), 1.0, rho);
  EXPECT_DOUBLE_EQ(k.values[1], std::exp(-1.0));
  EXPECT_DOUBLE_EQ(k.values[2], std::exp(-1.0));
}

TEST(BistochasticFactor, TwoByTwoHandComputation) {
  const double a = 0.3;
  Eigen::MatrixXd d2(2, 2);
  d2 << 0, -std::log(a), -std::log(a), 0;
  const auto f = bistochastic_factor(variable_bandwidth_kernel(share(full_graph(d2)), 1.0));
  const double u = (1.0 + a) / 2.0;
  EXPECT_NEAR(f.u()[0], u, 1e-15);
  EXPECT_NEAR(f.u()[1], u, 1e-15);
  EXPECT_NEAR(f.v()[0], 1.0, 1e-15);
  EXPECT_NEAR(f.v()[1], 1.0, 1e-15);
  Eigen::Matrix2d g_expected;
  g_expected << 1.0, a, a, 1.0;
  g_expected /= 2.0 * u;
  EXPECT_LE((f.dense_g() - g_expected).cwiseAbs().maxCoeff(), 1e-15);
  const Eigen::Vector2d row_sums = f.dense_markov() * Eigen::Vector2d::Ones();
  EXPECT_LE((row_sums - Eigen::Vector2d::Ones()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BistochasticFactor, MarkovSymmetricPsdOnRandomData) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto traj = testing::random_walk(150 + 10 * seed, 2, seed);
    auto g = share(build_knn_graph(traj, DelayConfig(3, traj.dt()), 12));
    const auto tuning = tune_bandwidth(*g);
    const auto f = bistochastic_factor(variable_bandwidth_kernel(g, tuning.sigma_star));
    for (double s : markov_row_sums(f)) EXPECT_NEAR(s, 1.0, 1e-10);
    const Eigen::MatrixXd k = f.dense_markov();
    EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), 1.0, 1e-8);
    for (double v : f.u()) EXPECT_GT(v, 0.0);
    for (double v : f.v()) EXPECT_GT(v, 0.0);
  }
}

TEST(BistochasticFactor, ImplicitProductsMatchDense) {
  const auto f = testing::random_factor(40, 3, 7, 1.5);
  const Eigen::MatrixXd g = f.dense_g();
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(40, -1.0, 2.0);
  Eigen::VectorXd y(40);
  Eigen::VectorXd scratch(40);
  f.apply_g(testing::cspan(x), testing::mspan(y));
  EXPECT_LE((y - g * x).cwiseAbs().maxCoeff(), 1e-14);
  f.apply_gt(testing::cspan(x), testing::mspan(y));
  EXPECT_LE((y - g.transpose() * x).cwiseAbs().maxCoeff(), 1e-14);
  f.apply_markov(testing::cspan(x), testing::mspan(y), testing::mspan(scratch));
  EXPECT_LE((y - g * (g.transpose() * x)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildKernel, FixedModeHasUnitRho) {
  const auto traj = testing::random_walk(300, 2, 8);
  auto g = share(build_knn_graph(traj, DelayConfig(1, traj.dt()), 20));
  KernelSettings settings;
  settings.mode = BandwidthMode::kFixed;
  const auto build = build_kernel(g, settings);
  for (double r : build.rho) EXPECT_EQ(r, 1.0);
  EXPECT_EQ(build.sigma, build.base_tuning.sigma_star);
  settings.sigma = 0.25;
  EXPECT_EQ(build_kernel(g, settings).sigma, 0.25);
}

TEST(BuildKernel, VariableModeTunesTwice) {
  const auto traj = testing::random_walk(300, 2, 9);
  auto g = share(build_knn_graph(traj, DelayConfig(2, traj.dt()), 20));
  const auto build = build_kernel(g, {});
  ASSERT_TRUE(build.final_tuning.has_value());
  EXPECT_EQ(build.sigma, build.final_tuning->sigma_star);
  EXPECT_EQ(build.sigma_bar, build.base_tuning.sigma_star);
  EXPECT_EQ(build.m, build.base_tuning.m_est);
  const auto rho = bandwidth_function(*g, build.sigma_bar, build.m);
  EXPECT_EQ(rho, build.rho);
}

TEST(FactorIo, RoundTrip) {
  const auto dir = testing::scratch_dir("factor_io");
  const auto f = testing::random_factor(30, 2, 10, 1.0);
  save_factor(f, dir / "f.bin");
  const auto h = load_factor(dir / "f.bin");
  EXPECT_EQ(h.u(), f.u());
  EXPECT_EQ(h.v(), f.v());
  EXPECT_EQ(h.kappa().values, f.kappa().values);
  EXPECT_TRUE(h.dense_g() == f.dense_g());
}

}  // namespace
}  // namespace coherence
