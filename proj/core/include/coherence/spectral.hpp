#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "coherence/kernel.hpp"

namespace coherence {

/// Leading eigenpairs in the empirical inner product <f, g>_N = (1/n) f.g:
/// each column has (1/n) sum phi^2 = 1 and its first entry of magnitude above
/// kSignThreshold is positive.
struct EigenDecomposition {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // n x l
  Eigen::VectorXd residuals;     // |K phi - lambda phi|_N

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
  std::size_t samples() const { return static_cast<std::size_t>(eigenvectors.rows()); }
};

inline constexpr double kSignThreshold = 1e-8;
inline constexpr double kEigenResidualTolerance = 1e-8;
inline constexpr double kDegeneracyThreshold = 1e-6;
inline constexpr std::size_t kDefaultNumEigs = 21;
inline constexpr std::size_t kDenseOracleMaxSize = 2000;

struct SolverOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-10;
  std::size_t basis_size = 0;
  std::size_t max_restarts = 2000;
};

/// Leading l eigenpairs of K = G G^T through the matvec f -> G (G^T f).
EigenDecomposition leading_eigenpairs(const BistochasticFactor& factor, std::size_t ell,
                                      const SolverOptions& options = {});

/// Direct symmetric eigensolver for small validation problems.
EigenDecomposition dense_eigen_oracle(const Eigen::MatrixXd& k, std::size_t ell);

/// Empirical normalization and sign convention applied in place.
void normalize_eigenvectors(Eigen::MatrixXd& vectors);

struct GapReport {
  std::size_t j1 = 0;
  std::size_t j2 = 0;
  double lambda_T = 0.0;
  double nu_T = 0.0;
  double gamma_T = 0.0;
  double delta_T = 0.0;
  double delta_tilde_T = 0.0;
  double eta_T = 0.0;
  double T = 0.0;
  bool numerically_degenerate = false;
};

/// Gap diagnostics for a consecutive pair. gamma is the exact minimum over the
/// other computed eigenvalues; for a consecutive sorted pair the nearest
/// competitors are its sorted neighbours, so the computed spectrum suffices
/// as long as the lower neighbour was computed.
GapReport spectral_gaps(const EigenDecomposition& eig, std::size_t j1, std::size_t j2, double T);

std::string gap_report_json(const GapReport& report);
GapReport parse_gap_report(const std::string& json_text);

/// Header row of eigenvalues, then one row per sample with one column per
/// eigenvector (17 significant digits).
void save_eigenpairs(const EigenDecomposition& eig, const std::filesystem::path& path);
EigenDecomposition load_eigenpairs(const std::filesystem::path& path);

}  // namespace coherence
