#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include <Eigen/Core>

namespace coherence {

/// y = A x for a symmetric operator A.
using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

struct LanczosOptions {
  std::size_t num_eigs = 1;
  std::size_t basis_size = 0;  // 0 picks max(2 * num_eigs + 20, num_eigs + 40), capped at n
  std::size_t max_restarts = 2000;
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
};

struct LanczosResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // unit Euclidean columns
  Eigen::VectorXd residuals;
  std::size_t matvecs = 0;
  std::size_t restarts = 0;
  bool converged = false;
};

/// Largest eigenpairs of a symmetric operator by thick-restart Lanczos with
/// full reorthogonalization. Residuals are recomputed explicitly from the
/// stored operator images rather than estimated from the recurrence.
LanczosResult lanczos_largest(std::size_t n, const LinearOperator& apply,
                              const LanczosOptions& options);

}  // namespace coherence
