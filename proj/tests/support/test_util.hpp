#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coherence/delay.hpp"
#include "coherence/error.hpp"
#include "coherence/kernel.hpp"
#include "coherence/trajectory.hpp"

namespace coherence::testing {

inline StateMatrix random_states(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                 double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  StateMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// A random walk, so nearby samples are close and neighbourhoods are local.
inline StateTrajectory random_walk(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                   double step = 0.1) {
  StateMatrix m = random_states(rows, cols, seed, step);
  for (Eigen::Index i = 1; i < m.rows(); ++i) m.row(i) += m.row(i - 1);
  return StateTrajectory(std::move(m), 0.01, 0.0, "random-walk");
}

/// Quasi-periodic flow on a torus embedded in R^4 with incommensurate rates.
inline StateTrajectory torus_flow(std::size_t rows, double dt, double a = 1.0,
                                  double b = std::sqrt(2.0)) {
  StateMatrix m(static_cast<Eigen::Index>(rows), 4);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double t = static_cast<double>(i) * dt;
    m(i, 0) = std::cos(a * t);
    m(i, 1) = std::sin(a * t);
    m(i, 2) = std::cos(b * t);
    m(i, 3) = std::sin(b * t);
  }
  return StateTrajectory(std::move(m), dt, 0.0, "torus");
}

/// Graph holding every pair, built from a dense squared-distance matrix.
inline SparseDistanceGraph full_graph(const Eigen::MatrixXd& d2) {
  SparseDistanceGraph g;
  g.n = static_cast<std::size_t>(d2.rows());
  g.k = g.n;
  g.symmetrized = true;
  g.row_ptr.push_back(0);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      g.cols.push_back(static_cast<std::uint32_t>(j));
      g.sq_dists.push_back(d2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    g.row_ptr.push_back(g.cols.size());
  }
  return g;
}

/// Dense squared Euclidean distances between rows.
inline Eigen::MatrixXd pairwise_sq(const StateMatrix& x) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
  }
  return d2;
}

/// Fixed-bandwidth bistochastic factor on a full graph of random points.
inline BistochasticFactor random_factor(std::size_t n, std::size_t dim, std::uint64_t seed,
                                        double sigma) {
  auto graph = std::make_shared<const SparseDistanceGraph>(
      full_graph(pairwise_sq(random_states(n, dim, seed))));
  return bistochastic_factor(variable_bandwidth_kernel(graph, sigma));
}

inline std::span<const double> cspan(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<double> mspan(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a coherence::Error");
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("coherence_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace coherence::testing
