#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "coherence/trajectory.hpp"

namespace coherence {

/// Number of delays Q and sampling interval dt; the embedding window is
/// T = Q * dt.
class DelayConfig {
 public:
  DelayConfig(std::size_t delays, double dt);

  /// Q = max(1, round(T / dt)); T = 0 maps to a single delay.
  static DelayConfig from_window(double window, double dt);

  std::size_t delays() const noexcept { return delays_; }
  double dt() const noexcept { return dt_; }
  double window() const noexcept { return window_; }

 private:
  std::size_t delays_;
  double dt_;
  double window_;
};

/// Number of delay-embedded samples, n = N_total - Q + 1.
std::size_t embedded_count(const StateTrajectory& traj, const DelayConfig& cfg);

/// k nearest neighbours per sample under the averaged delay distance, stored
/// row-compressed. Before symmetrization every row holds exactly k entries
/// ordered by (distance, index) with the sample itself first; after
/// symmetrization rows are the union of both directions ordered by index.
struct SparseDistanceGraph {
  std::size_t n = 0;
  std::size_t k = 0;
  std::size_t delays = 1;
  double dt = 1.0;
  bool symmetrized = false;
  std::vector<std::uint64_t> row_ptr;  // n + 1 offsets
  std::vector<std::uint32_t> cols;
  std::vector<double> sq_dists;

  std::size_t nnz() const noexcept { return cols.size(); }
  std::size_t row_begin(std::size_t i) const { return static_cast<std::size_t>(row_ptr[i]); }
  std::size_t row_end(std::size_t i) const { return static_cast<std::size_t>(row_ptr[i + 1]); }
  std::span<const std::uint32_t> neighbors(std::size_t i) const {
    return {cols.data() + row_begin(i), row_end(i) - row_begin(i)};
  }
  std::span<const double> distances(std::size_t i) const {
    return {sq_dists.data() + row_begin(i), row_end(i) - row_begin(i)};
  }
  double window() const noexcept { return static_cast<double>(delays) * dt; }
};

/// (1/Q) sum_{q<Q} |y_{i+q} - y_{j+q}|^2 by direct summation.
double delay_sq_distance(const StateTrajectory& traj, const DelayConfig& cfg, std::size_t i,
                         std::size_t j);

/// Averaged delay distance between an external window of Q consecutive
/// observations and training sample j.
double delay_sq_distance_to(const StateMatrix& window, const StateTrajectory& traj,
                            std::size_t j);

/// max(ceil(sqrt(n)), 50), capped at n - 1.
std::size_t default_knn(std::size_t n);

/// Exact per-row top-k scan using the anti-diagonal recursion
/// S(i+1, j+1) = S(i, j) - D(i, j) + D(i+Q, j+Q), restarted from a direct sum
/// every kRecursionRestart rows. Not symmetrized.
SparseDistanceGraph knn_scan(const StateTrajectory& traj, const DelayConfig& cfg, std::size_t k);

inline constexpr std::size_t kRecursionRestart = 1024;

/// Union of neighbour sets. A pair found in both rows keeps the distance
/// computed for the lower row index, so stored distances are symmetric.
SparseDistanceGraph symmetrize(const SparseDistanceGraph& graph);

/// knn_scan followed by symmetrize.
SparseDistanceGraph build_knn_graph(const StateTrajectory& traj, const DelayConfig& cfg,
                                    std::size_t k);

/// Dense n x n averaged delay distances through the same row recursion.
Eigen::MatrixXd delay_distance_matrix(const StateTrajectory& traj, const DelayConfig& cfg);

/// Header line of JSON followed by little-endian row_ptr (u64), cols (u32)
/// and sq_dists (f64) blocks.
void save_graph(const SparseDistanceGraph& graph, const std::filesystem::path& path);
SparseDistanceGraph load_graph(const std::filesystem::path& path);

}  // namespace coherence
