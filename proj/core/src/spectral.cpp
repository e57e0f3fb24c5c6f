#include "coherence/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/lanczos.hpp"

namespace coherence {

void normalize_eigenvectors(Eigen::MatrixXd& vectors) {
  const double root_n = std::sqrt(static_cast<double>(vectors.rows()));
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    auto column = vectors.col(c);
    const double norm = column.norm();
    require(norm > 0.0, ErrorCode::kSolver, "zero eigenvector");
    column *= root_n / norm;
    for (Eigen::Index r = 0; r < column.size(); ++r) {
      if (std::abs(column[r]) > kSignThreshold) {
        if (column[r] < 0.0) column = -column;
        break;
      }
    }
  }
}

EigenDecomposition leading_eigenpairs(const BistochasticFactor& factor, std::size_t ell,
                                      const SolverOptions& options) {
  const std::size_t n = factor.n();
  require(ell >= 2 && ell <= n, ErrorCode::kRange,
          "number of eigenpairs must lie in [2, n], got " + std::to_string(ell));
  std::vector<double> scratch(n);
  const LinearOperator apply = [&](std::span<const double> x, std::span<double> y) {
    factor.apply_markov(x, y, scratch);
  };
  LanczosOptions lanczos;
  lanczos.num_eigs = ell;
  lanczos.seed = options.seed;
  lanczos.tolerance = options.tolerance;
  lanczos.basis_size = options.basis_size;
  lanczos.max_restarts = options.max_restarts;
  LanczosResult solved = lanczos_largest(n, apply, lanczos);

  EigenDecomposition eig;
  eig.eigenvalues = solved.values;
  eig.eigenvectors = std::move(solved.vectors);
  normalize_eigenvectors(eig.eigenvectors);

  // Residuals of the normalized pairs, recomputed through the operator.
  eig.residuals.resize(static_cast<Eigen::Index>(ell));
  Eigen::VectorXd image(static_cast<Eigen::Index>(n));
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t c = 0; c < ell; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    apply(std::span<const double>(eig.eigenvectors.col(col).data(), n),
          std::span<double>(image.data(), n));
    eig.residuals[col] =
        (image - eig.eigenvalues[col] * eig.eigenvectors.col(col)).norm() * inv_root_n;
  }
  if (eig.residuals.maxCoeff() > kEigenResidualTolerance) {
    std::ostringstream message;
    message << "eigensolver did not converge after " << solved.restarts << " restarts ("
            << solved.matvecs << " matvecs); residuals:";
    for (Eigen::Index c = 0; c < eig.residuals.size(); ++c) message << ' ' << eig.residuals[c];
    fail(ErrorCode::kSolver, message.str());
  }
  return eig;
}

EigenDecomposition dense_eigen_oracle(const Eigen::MatrixXd& k, std::size_t ell) {
  require(k.rows() == k.cols(), ErrorCode::kShape, "matrix is not square");
  const auto n = static_cast<std::size_t>(k.rows());
  require(n <= kDenseOracleMaxSize, ErrorCode::kSize, "dense oracle is limited to n <= 2000");
  require(ell >= 1 && ell <= n, ErrorCode::kRange, "number of eigenpairs must lie in [1, n]");
  require((k - k.transpose()).cwiseAbs().maxCoeff() <= 1e-10, ErrorCode::kInput,
          "matrix is not symmetric within 1e-10");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
  require(solver.info() == Eigen::Success, ErrorCode::kSolver, "dense eigensolver failed");
  const auto count = static_cast<Eigen::Index>(ell);
  EigenDecomposition eig;
  eig.eigenvalues = solver.eigenvalues().reverse().head(count);
  eig.eigenvectors = solver.eigenvectors().rowwise().reverse().leftCols(count);
  normalize_eigenvectors(eig.eigenvectors);
  eig.residuals.resize(count);
  const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index c = 0; c < count; ++c) {
    eig.residuals[c] =
        (k * eig.eigenvectors.col(c) - eig.eigenvalues[c] * eig.eigenvectors.col(c)).norm() *
        inv_root_n;
  }
  return eig;
}

GapReport spectral_gaps(const EigenDecomposition& eig, std::size_t j1, std::size_t j2, double T) {
  const std::size_t ell = eig.size();
  require(j1 != j2, ErrorCode::kInput, "pair indices must differ");
  require(j1 < ell && j2 < ell, ErrorCode::kRange, "pair index outside the computed spectrum");
  const std::size_t lo = std::min(j1, j2);
  const std::size_t hi = std::max(j1, j2);
  require(hi - lo == 1, ErrorCode::kInput, "pair must be consecutive in the sorted spectrum");
  require(T >= 0.0, ErrorCode::kRange, "window must be non-negative");
  const double a = eig.eigenvalues[static_cast<Eigen::Index>(j1)];
  const double b = eig.eigenvalues[static_cast<Eigen::Index>(j2)];
  require(a > 0.0 && b > 0.0, ErrorCode::kDegeneratePair, "pair eigenvalue is not positive");
  require(hi + 1 < ell, ErrorCode::kInsufficientEigs,
          "the eigenvalue below the pair was not computed; increase the number of eigenpairs");

  GapReport report;
  report.j1 = j1;
  report.j2 = j2;
  report.T = T;
  report.nu_T = std::max(a, b);
  report.lambda_T = std::min(a, b);
  double gamma = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < ell; ++j) {
    if (j == j1 || j == j2) continue;
    const double u = eig.eigenvalues[static_cast<Eigen::Index>(j)];
    gamma = std::min({gamma, std::abs(report.lambda_T - u), std::abs(report.nu_T - u)});
  }
  report.gamma_T = gamma;
  report.delta_T = (report.nu_T - report.lambda_T) / std::sqrt(2.0);
  report.delta_tilde_T = report.delta_T / report.nu_T;
  report.eta_T = report.gamma_T * report.lambda_T * T;
  report.numerically_degenerate =
      report.nu_T - report.lambda_T <= kDegeneracyThreshold * report.nu_T;
  return report;
}

std::string gap_report_json(const GapReport& r) {
  const nlohmann::json json = {{"j1", r.j1},
                               {"j2", r.j2},
                               {"T", r.T},
                               {"lambda_T", r.lambda_T},
                               {"nu_T", r.nu_T},
                               {"gamma_T", r.gamma_T},
                               {"delta_T", r.delta_T},
                               {"delta_tilde_T", r.delta_tilde_T},
                               {"delta_over_gamma", r.delta_T / r.gamma_T},
                               {"eta_T", r.eta_T},
                               {"numerically_degenerate", r.numerically_degenerate},
                               {"gamma_scope", "computed spectrum; consecutive pair"}};
  return json.dump(2) + "\n";
}

GapReport parse_gap_report(const std::string& json_text) {
  GapReport r;
  try {
    const auto json = nlohmann::json::parse(json_text);
    r.j1 = json.at("j1").get<std::size_t>();
    r.j2 = json.at("j2").get<std::size_t>();
    r.T = json.at("T").get<double>();
    r.lambda_T = json.at("lambda_T").get<double>();
    r.nu_T = json.at("nu_T").get<double>();
    r.gamma_T = json.at("gamma_T").get<double>();
    r.delta_T = json.at("delta_T").get<double>();
    r.delta_tilde_T = json.at("delta_tilde_T").get<double>();
    r.eta_T = json.at("eta_T").get<double>();
    r.numerically_degenerate = json.at("numerically_degenerate").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad gap report: ") + e.what());
  }
  return r;
}

namespace {

std::string format17(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

}  // namespace

void save_eigenpairs(const EigenDecomposition& eig, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  std::string line;
  for (Eigen::Index c = 0; c < eig.eigenvalues.size(); ++c) {
    if (c > 0) line += ',';
    line += format17(eig.eigenvalues[c]);
  }
  out << line << '\n';
  for (Eigen::Index r = 0; r < eig.eigenvectors.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < eig.eigenvectors.cols(); ++c) {
      if (c > 0) line += ',';
      line += format17(eig.eigenvectors(r, c));
    }
    out << line << '\n';
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

EigenDecomposition load_eigenpairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line);
    if (rows.empty()) width = cells.size();
    require(cells.size() == width, ErrorCode::kRaggedRows,
            path.string() + ": ragged row at line " + std::to_string(line_no));
    std::vector<double> values(width);
    for (std::size_t c = 0; c < width; ++c) {
      require(io::parse_double(cells[c], values[c]), ErrorCode::kParse,
              path.string() + ": bad number at line " + std::to_string(line_no));
    }
    rows.push_back(std::move(values));
  }
  require(rows.size() >= 2, ErrorCode::kParse, path.string() + ": no eigenvector rows");
  EigenDecomposition eig;
  const auto cols = static_cast<Eigen::Index>(width);
  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  eig.eigenvalues = Eigen::Map<const Eigen::VectorXd>(rows[0].data(), cols);
  eig.eigenvectors.resize(n, cols);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) eig.eigenvectors(r, c) = rows[static_cast<std::size_t>(r + 1)][static_cast<std::size_t>(c)];
  }
  eig.residuals = Eigen::VectorXd::Zero(cols);
  return eig;
}

}  // namespace coherence
