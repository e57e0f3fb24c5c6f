#include "coherence/lanczos.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "coherence/error.hpp"

namespace coherence {
namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Two passes of classical Gram-Schmidt against the first `cols` basis vectors.
void orthogonalize(const MatrixXd& basis, Index cols, VectorXd& w) {
  if (cols == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    const VectorXd coeffs = basis.leftCols(cols).transpose() * w;
    w.noalias() -= basis.leftCols(cols) * coeffs;
  }
}

VectorXd random_unit(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v / v.norm();
}

// Next basis direction orthogonal to the first `cols` columns. Falls back to
// random directions when the residual has collapsed.
VectorXd next_direction(const MatrixXd& basis, Index cols, VectorXd f, double scale,
                        std::mt19937_64& rng) {
  double norm = f.norm();
  for (int attempt = 0; norm <= 1e-13 * scale && attempt < 8; ++attempt) {
    f = random_unit(basis.rows(), rng);
    orthogonalize(basis, cols, f);
    norm = f.norm();
    scale = 1.0;
  }
  require(norm > 0.0, ErrorCode::kSolver, "Lanczos basis could not be extended");
  return f / norm;
}

}  // namespace

LanczosResult lanczos_largest(std::size_t n, const LinearOperator& apply,
                              const LanczosOptions& options) {
  const std::size_t nev = options.num_eigs;
  require(nev >= 1 && nev <= n, ErrorCode::kRange, "number of eigenpairs must lie in [1, n]");
  std::size_t m = options.basis_size;
  if (m == 0) m = std::max(2 * nev + 20, nev + 40);
  m = std::clamp(m, std::min(nev + 1, n), n);
  const Index rows = static_cast<Index>(n);
  const Index cols = static_cast<Index>(m);
  const Index want = static_cast<Index>(nev);
  // Number of Ritz vectors kept across a restart.
  const Index keep = std::min<Index>(cols - 1, want + (cols - want) / 2);

  std::mt19937_64 rng(options.seed);
  MatrixXd basis(rows, cols);
  MatrixXd images(rows, cols);
  basis.col(0) = random_unit(rows, rng);

  LanczosResult result;
  Index filled = 0;  // columns of `basis` whose images are known
  Index start = 0;   // first column still to be multiplied
  double scale = 1.0;
  VectorXd w(rows);

  for (std::size_t restart = 0;; ++restart) {
    for (Index j = start; j < cols; ++j) {
      apply(std::span<const double>(basis.col(j).data(), n), std::span<double>(w.data(), n));
      images.col(j) = w;
      ++result.matvecs;
      filled = j + 1;
      if (j + 1 == cols) break;
      scale = std::max(scale, w.norm());
      orthogonalize(basis, j + 1, w);
      basis.col(j + 1) = next_direction(basis, j + 1, w, scale, rng);
    }

    MatrixXd projected = basis.leftCols(filled).transpose() * images.leftCols(filled);
    projected = 0.5 * (projected + projected.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(projected);
    require(solver.info() == Eigen::Success, ErrorCode::kSolver,
            "projected eigenproblem failed");
    // Descending order.
    const VectorXd theta = solver.eigenvalues().reverse();
    const MatrixXd ritz = solver.eigenvectors().rowwise().reverse();

    const MatrixXd x = basis.leftCols(filled) * ritz.leftCols(want);
    const MatrixXd ax = images.leftCols(filled) * ritz.leftCols(want);
    VectorXd residuals(want);
    for (Index i = 0; i < want; ++i) residuals[i] = (ax.col(i) - theta[i] * x.col(i)).norm();

    const bool converged = residuals.maxCoeff() <= options.tolerance;
    if (converged || restart >= options.max_restarts || cols == rows) {
      result.values = theta.head(want);
      result.vectors = x;
      result.residuals = residuals;
      result.restarts = restart;
      result.converged = converged;
      return result;
    }

    // Thick restart: keep the leading Ritz vectors with their images and
    // continue from the residual of the last operator image.
    VectorXd f = images.col(cols - 1);
    orthogonalize(basis, cols, f);
    const MatrixXd kept_basis = basis * ritz.leftCols(keep);
    const MatrixXd kept_images = images * ritz.leftCols(keep);
    basis.leftCols(keep) = kept_basis;
    images.leftCols(keep) = kept_images;
    orthogonalize(basis, keep, f);
    basis.col(keep) = next_direction(basis, keep, f, scale, rng);
    start = keep;
  }
}

}  // namespace coherence
