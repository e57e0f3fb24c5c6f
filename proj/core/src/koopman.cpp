#include "coherence/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/lanczos.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

SampledFunction::SampledFunction(Eigen::VectorXcd v) : values(std::move(v)) {
  require(values.allFinite(), ErrorCode::kNonFinite, "sampled function has non-finite entries");
}

SampledFunction SampledFunction::from_real(std::span<const double> real) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(real.size()));
  for (std::size_t i = 0; i < real.size(); ++i) v[static_cast<Eigen::Index>(i)] = real[i];
  return SampledFunction(std::move(v));
}

Complex inner(const SampledFunction& f, const SampledFunction& g) {
  require(f.values.size() == g.values.size(), ErrorCode::kShape, "length mismatch");
  require(f.values.size() > 0, ErrorCode::kShape, "empty function");
  return f.values.dot(g.values) / static_cast<double>(f.values.size());
}

double norm(const SampledFunction& f) { return std::sqrt(std::real(inner(f, f))); }

SampledFunction shift(const SampledFunction& f, std::size_t q) {
  const std::size_t n = f.measure_size();
  require(q <= n, ErrorCode::kRange, "shift exceeds the sample count");
  const auto nn = static_cast<Eigen::Index>(n);
  const auto qq = static_cast<Eigen::Index>(q);
  SampledFunction out;
  out.values = Eigen::VectorXcd::Zero(nn);
  out.values.head(nn - qq) = f.values.tail(nn - qq);
  return out;
}

SampledFunction fd_generator(const SampledFunction& f, double dt) {
  require(dt > 0.0, ErrorCode::kRange, "dt must be positive");
  const auto n = f.values.size();
  SampledFunction out;
  out.values.resize(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) out.values[i] = (f.values[i + 1] - f.values[i]) / dt;
  if (n > 0) out.values[n - 1] = -f.values[n - 1] / dt;
  return out;
}

double generator_frequency(const SampledFunction& phi, const SampledFunction& psi, double dt) {
  return 0.5 * (std::real(inner(phi, fd_generator(psi, dt))) -
                std::real(inner(psi, fd_generator(phi, dt))));
}

CoherentObservable make_observable(const EigenDecomposition& eig, std::size_t j1, std::size_t j2,
                                   double dt) {
  const std::size_t ell = eig.size();
  require(j1 < ell && j2 < ell, ErrorCode::kRange, "pair index outside the computed spectrum");
  require(j1 != j2, ErrorCode::kInput, "pair indices must differ");
  require(std::max(j1, j2) - std::min(j1, j2) == 1, ErrorCode::kInput,
          "pair must be consecutive in the sorted spectrum");
  CoherentObservable obs;
  obs.phi_index = std::min(j1, j2);
  obs.psi_index = std::max(j1, j2);
  obs.phi_eigenvalue = eig.eigenvalues[static_cast<Eigen::Index>(obs.phi_index)];
  obs.psi_eigenvalue = eig.eigenvalues[static_cast<Eigen::Index>(obs.psi_index)];
  require(obs.phi_eigenvalue > 0.0 && obs.psi_eigenvalue > 0.0, ErrorCode::kDegeneratePair,
          "pair eigenvalue is not positive");
  obs.nu_T = std::max(obs.phi_eigenvalue, obs.psi_eigenvalue);
  obs.lambda_T = std::min(obs.phi_eigenvalue, obs.psi_eigenvalue);
  obs.phi = eig.eigenvectors.col(static_cast<Eigen::Index>(obs.phi_index));
  obs.psi = eig.eigenvectors.col(static_cast<Eigen::Index>(obs.psi_index));

  const auto phi_f = SampledFunction::from_real({obs.phi.data(), static_cast<std::size_t>(obs.phi.size())});
  const auto psi_f = SampledFunction::from_real({obs.psi.data(), static_cast<std::size_t>(obs.psi.size())});
  obs.omega_raw = generator_frequency(phi_f, psi_f, dt);
  obs.omega = obs.omega_raw;
  if (obs.omega_raw < 0.0) {
    obs.psi = -obs.psi;
    obs.omega = -obs.omega_raw;
    obs.psi_negated = true;
  }
  Eigen::VectorXcd z(obs.phi.size());
  const double inv_root2 = 1.0 / std::sqrt(2.0);
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = Complex(obs.phi[i], obs.psi[i]) * inv_root2;
  obs.z = SampledFunction(std::move(z));
  return obs;
}

namespace {

std::vector<Complex> lagged_sums(const Eigen::VectorXcd& z, std::size_t q_max) {
  const auto n = static_cast<std::size_t>(z.size());
  require(q_max < n, ErrorCode::kRange, "maximum lag must be below the sample count");
  std::vector<Complex> sums(q_max + 1);
  parallel_for(0, q_max + 1, 16, [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const auto len = static_cast<Eigen::Index>(n - q);
      sums[q] = z.head(len).dot(z.segment(static_cast<Eigen::Index>(q), len));
    }
  });
  return sums;
}

}  // namespace

std::vector<Complex> autocorrelation(const CoherentObservable& z, std::size_t q_max, double dt) {
  require(dt > 0.0, ErrorCode::kRange, "dt must be positive");
  auto sums = lagged_sums(z.z.values, q_max);
  const double inv_n = 1.0 / static_cast<double>(z.z.values.size());
  for (auto& s : sums) s *= inv_n;
  return sums;
}

std::vector<Complex> autocorrelation_unbiased(const CoherentObservable& z, std::size_t q_max) {
  auto sums = lagged_sums(z.z.values, q_max);
  const auto n = static_cast<double>(z.z.values.size());
  for (std::size_t q = 0; q < sums.size(); ++q) sums[q] /= n - static_cast<double>(q);
  return sums;
}

Decomposition decomposition_diagnostics(const SampledFunction& z, std::size_t q) {
  const SampledFunction shifted = shift(z, q);
  const SampledFunction conj_z(z.values.conjugate());
  Decomposition d;
  d.alpha = inner(z, shifted);
  d.beta = inner(conj_z, shifted);
  const Eigen::VectorXcd r = shifted.values - d.alpha * z.values - d.beta * conj_z.values;
  d.r_norm = r.norm() / std::sqrt(static_cast<double>(r.size()));
  d.shifted_norm = norm(shifted);
  d.pair_overlap = std::abs(inner(z, conj_z));
  d.non_orthogonal_pair = d.pair_overlap > kPairOverlapWarning;
  return d;
}

Decomposition decomposition_diagnostics(const CoherentObservable& z, std::size_t q) {
  return decomposition_diagnostics(z.z, q);
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kAnalytic:
      return "analytic";
    case Provenance::kEmpirical:
      return "empirical";
    case Provenance::kUser:
      return "user";
  }
  return "unknown";
}

void refresh_derived_constants(BoundConstants& c) {
  c.C1 = 2.0 * c.h_c1 * c.d2_sup;
  c.C2 = 2.0 * c.h_c1 * c.d2_c1;
}

namespace {

double plain_sq_distance(const StateMatrix& states, std::size_t i, std::size_t j) {
  return (states.row(static_cast<Eigen::Index>(i)) - states.row(static_cast<Eigen::Index>(j)))
      .squaredNorm();
}

}  // namespace

BoundConstants estimate_constants(const StateTrajectory& traj, const SparseDistanceGraph& graph,
                                  const KernelParams& params,
                                  const std::optional<VectorField>& field) {
  require(params.sigma > 0.0, ErrorCode::kInput, "sigma must be positive");
  require(params.rho.empty() || params.rho.size() == graph.n, ErrorCode::kShape,
          "bandwidth vector has the wrong length");
  require(graph.n + graph.delays - 1 <= traj.size(), ErrorCode::kShape,
          "graph does not match the trajectory");
  const StateMatrix& states = traj.states();
  const double dt = traj.dt();

  BoundConstants c;
  // Gaussian shape h(u) = exp(-u) evaluated at u = d2 / (sigma^2 rho_i rho_j):
  // sup|h| = 1 and the derivative in d2 is bounded by the largest scaling.
  double min_rho_product = 1.0;
  if (!params.rho.empty()) {
    min_rho_product = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < graph.n; ++i) {
      for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
        min_rho_product = std::min(min_rho_product, params.rho[i] * params.rho[graph.cols[p]]);
      }
    }
  }
  c.h_c1 = 1.0 + 1.0 / (params.sigma * params.sigma * min_rho_product);
  c.h_c1_source = Provenance::kAnalytic;

  const std::size_t total = traj.size();
  double d2_sup = 0.0;
  double d2_rate = 0.0;
  for (std::size_t i = 0; i < graph.n; ++i) {
    for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
      const std::size_t j = graph.cols[p];
      const double d2 = plain_sq_distance(states, i, j);
      d2_sup = std::max(d2_sup, d2);
      if (i + 1 < total && j + 1 < total) {
        d2_rate = std::max(d2_rate, std::abs(plain_sq_distance(states, i + 1, j + 1) - d2) / dt);
      }
    }
  }
  c.d2_sup = d2_sup;
  c.d2_c1 = d2_sup + d2_rate;

  if (field) {
    require(field->dimension == traj.dimension(), ErrorCode::kShape,
            "vector field dimension does not match the trajectory");
    std::vector<double> velocity(traj.dimension());
    double vmax = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      field->evaluate({states.row(static_cast<Eigen::Index>(i)).data(), traj.dimension()},
                      velocity);
      double sq = 0.0;
      for (double v : velocity) sq += v * v;
      vmax = std::max(vmax, std::sqrt(sq));
    }
    c.vfield_norm = vmax;
    c.vfield_source = Provenance::kAnalytic;
  } else {
    require(total >= 5, ErrorCode::kEstimation,
            "velocity estimation needs at least five samples");
    double vmax = 0.0;
    double diff_max = 0.0;
    double v4_max = 0.0;
    for (std::size_t i = 2; i + 2 < total; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::RowVectorXd v2 = (states.row(ii + 1) - states.row(ii - 1)) / (2.0 * dt);
      const Eigen::RowVectorXd v4 = (-states.row(ii + 2) + 8.0 * states.row(ii + 1) -
                                     8.0 * states.row(ii - 1) + states.row(ii - 2)) /
                                    (12.0 * dt);
      vmax = std::max(vmax, v2.norm());
      v4_max = std::max(v4_max, v4.norm());
      diff_max = std::max(diff_max, (v2 - v4).norm());
    }
    if (v4_max > 0.0) {
      require(diff_max <= kVelocityResidualLimit * v4_max, ErrorCode::kEstimation,
              "dt too coarse for finite-difference velocities (relative stencil disagreement " +
                  io::format_double(diff_max / v4_max) + ")");
    }
    c.vfield_norm = vmax;
    c.vfield_source = Provenance::kEmpirical;
  }
  refresh_derived_constants(c);
  return c;
}

TheoremBounds theorem_bounds(const GapReport& gaps, const BoundConstants& c,
                             std::span<const double> t_grid) {
  require(gaps.T > 0.0, ErrorCode::kRange, "bounds need a positive window");
  require(gaps.lambda_T > 0.0, ErrorCode::kDegeneratePair, "bounds need a positive eigenvalue");
  TheoremBounds b;
  b.t.assign(t_grid.begin(), t_grid.end());
  const std::size_t count = t_grid.size();
  b.s.resize(count);
  b.S.resize(count);
  b.eps_tilde.resize(count);
  b.eps.resize(count);
  b.unbounded = !(gaps.gamma_T > 0.0);
  const double inf = std::numeric_limits<double>::infinity();
  const double prefactor = c.C2 * c.vfield_norm * (1.0 + gaps.delta_tilde_T) / gaps.lambda_T;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = t_grid[k];
    require(t >= 0.0, ErrorCode::kRange, "bound times must be non-negative");
    if (b.unbounded) {
      b.s[k] = b.S[k] = b.eps_tilde[k] = b.eps[k] = inf;
      continue;
    }
    b.s[k] = (c.C1 * t / gaps.T + 3.0 * gaps.delta_T) / gaps.gamma_T;
    const double integral =
        (c.C1 * t * t / (2.0 * gaps.T) + 3.0 * gaps.delta_T * t) / gaps.gamma_T;
    b.S[k] = prefactor * integral;
    const double root = std::sqrt(b.S[k]);
    b.eps_tilde[k] = b.s[k] + root;
    b.eps[k] = b.s[k] + 3.0 * root;
  }
  return b;
}

namespace {

std::vector<double> residuals_impl(const SampledFunction& z, double omega,
                                   std::span<const std::size_t> q_grid, double dt, bool tail) {
  const auto n = z.measure_size();
  std::vector<double> out(q_grid.size());
  for (std::size_t k = 0; k < q_grid.size(); ++k) {
    const std::size_t q = q_grid[k];
    require(q <= n, ErrorCode::kRange, "lag exceeds the sample count");
    if (tail) {
      require(q < n, ErrorCode::kRange, "tail-corrected residual needs q < n");
    }
    const Complex phase = std::polar(1.0, omega * static_cast<double>(q) * dt);
    const auto len = static_cast<Eigen::Index>(n - q);
    double sum = (z.values.segment(static_cast<Eigen::Index>(q), len) - phase * z.values.head(len))
                     .squaredNorm();
    double denom = static_cast<double>(n - q);
    if (!tail) {
      sum += z.values.tail(static_cast<Eigen::Index>(q)).squaredNorm();
      denom = static_cast<double>(n);
    }
    out[k] = std::sqrt(sum / denom);
  }
  return out;
}

}  // namespace

std::vector<double> pseudospectral_residual(const SampledFunction& z, double omega,
                                            std::span<const std::size_t> q_grid, double dt) {
  return residuals_impl(z, omega, q_grid, dt, false);
}

std::vector<double> pseudospectral_residual_tail_corrected(const SampledFunction& z, double omega,
                                                           std::span<const std::size_t> q_grid,
                                                           double dt) {
  return residuals_impl(z, omega, q_grid, dt, true);
}

double commutator_norm(const StateTrajectory& traj, const DelayConfig& cfg, std::size_t q,
                       double sigma) {
  require(sigma > 0.0, ErrorCode::kInput, "sigma must be positive");
  const std::size_t n = embedded_count(traj, cfg);
  require(n <= kCommutatorMaxSize, ErrorCode::kSize,
          "commutator check is limited to n <= 2000 samples");
  require(q <= n, ErrorCode::kRange, "shift exceeds the sample count");
  if (q == 0 || q == n) return 0.0;
  const Eigen::MatrixXd kernel =
      (-delay_distance_matrix(traj, cfg) / (sigma * sigma)).array().exp().matrix() /
      static_cast<double>(n);
  const auto nn = static_cast<Eigen::Index>(n);
  const auto qq = static_cast<Eigen::Index>(q);
  // (U K)_ij = K_{i+q, j}; (K U)_ij = K_{i, j-q}.
  Eigen::MatrixXd comm = Eigen::MatrixXd::Zero(nn, nn);
  comm.topRows(nn - qq) = kernel.bottomRows(nn - qq);
  comm.rightCols(nn - qq) -= kernel.leftCols(nn - qq);

  const double frob2 = comm.squaredNorm();
  if (frob2 == 0.0) return 0.0;
  Eigen::VectorXd tmp(nn);
  const LinearOperator gram = [&](std::span<const double> x, std::span<double> y) {
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), nn);
    Eigen::Map<Eigen::VectorXd> yv(y.data(), nn);
    tmp.noalias() = comm * xv;
    yv.noalias() = comm.transpose() * tmp;
  };
  LanczosOptions options;
  options.num_eigs = 1;
  options.tolerance = 1e-12 * frob2;
  const LanczosResult top = lanczos_largest(n, gram, options);
  require(top.converged, ErrorCode::kSolver, "commutator norm iteration did not converge");
  return std::sqrt(std::max(0.0, top.values[0]));
}

CoherenceReport coherence_report(const CoherentObservable& z, const GapReport& gaps,
                                 const std::optional<BoundConstants>& constants,
                                 std::size_t q_max, double dt) {
  CoherenceReport report;
  report.dt = dt;
  report.omega = z.omega;
  report.gaps = gaps;
  report.constants = constants;
  report.alpha = autocorrelation(z, q_max, dt);
  report.alpha_unbiased = autocorrelation_unbiased(z, q_max);
  std::vector<std::size_t> lags(q_max + 1);
  std::vector<double> times(q_max + 1);
  for (std::size_t q = 0; q <= q_max; ++q) {
    lags[q] = q;
    times[q] = static_cast<double>(q) * dt;
  }
  report.residuals = pseudospectral_residual(z.z, z.omega, lags, dt);
  report.residuals_tail_corrected = pseudospectral_residual_tail_corrected(z.z, z.omega, lags, dt);
  report.beta.resize(q_max + 1);
  report.r_norm.resize(q_max + 1);
  parallel_for(0, q_max + 1, 8, [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const Decomposition d = decomposition_diagnostics(z.z, q);
      report.beta[q] = d.beta;
      report.r_norm[q] = d.r_norm;
    }
  });
  const Decomposition d0 = decomposition_diagnostics(z.z, 0);
  if (d0.non_orthogonal_pair) {
    report.warnings.push_back("z and its conjugate are not orthogonal (|<z, z*>| = " +
                              io::format_double(d0.pair_overlap) + ")");
  }
  if (constants && gaps.T > 0.0) {
    report.bounds = theorem_bounds(gaps, *constants, times);
    if (report.bounds.unbounded) report.warnings.push_back("zero spectral gap; bounds are unbounded");
  }
  return report;
}

namespace {

nlohmann::json complex_array(const std::vector<Complex>& values) {
  nlohmann::json re = nlohmann::json::array();
  nlohmann::json im = nlohmann::json::array();
  for (const auto& v : values) {
    re.push_back(v.real());
    im.push_back(v.imag());
  }
  return {{"re", re}, {"im", im}};
}

nlohmann::json finite_or_null(const std::vector<double>& values) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : values) {
    if (std::isfinite(v)) {
      out.push_back(v);
    } else {
      out.push_back(nullptr);
    }
  }
  return out;
}

std::string csv_number(const std::vector<double>& values, std::size_t k) {
  if (k >= values.size()) return "";
  const double v = values[k];
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return io::format_double(v);
}

}  // namespace

std::string coherence_report_json(const CoherenceReport& r) {
  nlohmann::json json;
  json["dt"] = r.dt;
  json["omega"] = r.omega;
  json["alpha"] = complex_array(r.alpha);
  json["alpha_unbiased"] = complex_array(r.alpha_unbiased);
  json["alpha_unbiased_note"] = "normalized by 1/(n - q); not the 1/n convention";
  json["beta"] = complex_array(r.beta);
  json["r_norm"] = r.r_norm;
  json["residuals"] = r.residuals;
  json["residuals_tail_corrected"] = r.residuals_tail_corrected;
  json["gaps"] = nlohmann::json::parse(gap_report_json(r.gaps));
  if (r.constants) {
    const BoundConstants& c = *r.constants;
    json["constants"] = {
        {"C1", {{"value", c.C1}, {"provenance", to_string(c.C1_source)}}},
        {"C2", {{"value", c.C2}, {"provenance", to_string(c.C2_source)}}},
        {"vfield_norm", {{"value", c.vfield_norm}, {"provenance", to_string(c.vfield_source)}}},
        {"h_c1", {{"value", c.h_c1}, {"provenance", to_string(c.h_c1_source)}}},
        {"d2_sup", {{"value", c.d2_sup}, {"provenance", to_string(c.d2_sup_source)}}},
        {"d2_c1", {{"value", c.d2_c1}, {"provenance", to_string(c.d2_c1_source)}}}};
    const bool certified = c.C1_source == Provenance::kUser && c.C2_source == Provenance::kUser &&
                           c.vfield_source == Provenance::kUser;
    json["bounds_status"] = certified ? "certified-constant" : "estimated-constant";
  }
  if (!r.bounds.t.empty()) {
    json["bounds"] = {{"s", finite_or_null(r.bounds.s)},
                      {"S", finite_or_null(r.bounds.S)},
                      {"eps_tilde", finite_or_null(r.bounds.eps_tilde)},
                      {"eps", finite_or_null(r.bounds.eps)},
                      {"unbounded", r.bounds.unbounded}};
  }
  json["warnings"] = r.warnings;
  return json.dump(2) + "\n";
}

std::string coherence_report_csv(const CoherenceReport& r) {
  std::ostringstream out;
  out << "t,re_alpha,im_alpha,abs_alpha,s,S,eps_tilde,eps,residual,residual_tail_corrected\n";
  for (std::size_t q = 0; q < r.alpha.size(); ++q) {
    out << io::format_double(static_cast<double>(q) * r.dt) << ','
        << io::format_double(r.alpha[q].real()) << ',' << io::format_double(r.alpha[q].imag())
        << ',' << io::format_double(std::abs(r.alpha[q])) << ',' << csv_number(r.bounds.s, q)
        << ',' << csv_number(r.bounds.S, q) << ',' << csv_number(r.bounds.eps_tilde, q) << ','
        << csv_number(r.bounds.eps, q) << ',' << csv_number(r.residuals, q) << ','
        << csv_number(r.residuals_tail_corrected, q) << '\n';
  }
  return out.str();
}

}  // namespace coherence
