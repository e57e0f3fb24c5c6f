#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coherence/delay.hpp"
#include "coherence/spectral.hpp"
#include "coherence/trajectory.hpp"

namespace coherence {

using Complex = std::complex<double>;

/// Complex samples at x_0 .. x_{n-1} with <f, g>_N = (1/n) sum conj(f) g.
struct SampledFunction {
  Eigen::VectorXcd values;

  SampledFunction() = default;
  explicit SampledFunction(Eigen::VectorXcd v);
  static SampledFunction from_real(std::span<const double> real);

  std::size_t measure_size() const { return static_cast<std::size_t>(values.size()); }
};

Complex inner(const SampledFunction& f, const SampledFunction& g);
double norm(const SampledFunction& f);

/// (U^q f)_i = f_{i+q}, zero past the end of the trajectory.
SampledFunction shift(const SampledFunction& f, std::size_t q);

/// ((U - I) f / dt) with the last entry equal to -f_{n-1} / dt.
SampledFunction fd_generator(const SampledFunction& f, double dt);

/// Im <z, V z>_N for z = (phi + i psi) / sqrt(2), i.e. (<phi, V psi>_N - <psi, V phi>_N) / 2.
/// Exactly antisymmetric in (phi, psi).
double generator_frequency(const SampledFunction& phi, const SampledFunction& psi, double dt);

/// z = (phi + i psi) / sqrt(2) built from eigenvectors of a consecutive pair.
/// phi is always the lower index of the pair; psi is negated when needed so
/// that omega >= 0.
struct CoherentObservable {
  SampledFunction z;
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
  std::size_t phi_index = 0;
  std::size_t psi_index = 0;
  double phi_eigenvalue = 0.0;
  double psi_eigenvalue = 0.0;
  double lambda_T = 0.0;
  double nu_T = 0.0;
  double omega = 0.0;
  double omega_raw = 0.0;  // before the orientation convention
  bool psi_negated = false;
};

CoherentObservable make_observable(const EigenDecomposition& eig, std::size_t j1, std::size_t j2,
                                   double dt);

/// alpha[q] = (1/n) sum_{i < n-q} conj(z_i) z_{i+q}, q = 0 .. q_max.
std::vector<Complex> autocorrelation(const CoherentObservable& z, std::size_t q_max, double dt);
/// Same sums normalized by 1/(n-q).
std::vector<Complex> autocorrelation_unbiased(const CoherentObservable& z, std::size_t q_max);

struct Decomposition {
  Complex alpha;
  Complex beta;
  double r_norm = 0.0;
  double shifted_norm = 0.0;  // |U^q z|_N
  double pair_overlap = 0.0;  // |<z, z*>_N|
  bool non_orthogonal_pair = false;
};

inline constexpr double kPairOverlapWarning = 1e-6;

/// U^q z = alpha z + beta z* + r.
Decomposition decomposition_diagnostics(const SampledFunction& z, std::size_t q);
Decomposition decomposition_diagnostics(const CoherentObservable& z, std::size_t q);

enum class Provenance { kAnalytic, kEmpirical, kUser };
std::string_view to_string(Provenance p);

struct BoundConstants {
  double C1 = 0.0;
  double C2 = 0.0;
  double vfield_norm = 0.0;
  double h_c1 = 0.0;
  double d2_sup = 0.0;
  double d2_c1 = 0.0;
  Provenance C1_source = Provenance::kEmpirical;
  Provenance C2_source = Provenance::kEmpirical;
  Provenance vfield_source = Provenance::kEmpirical;
  Provenance h_c1_source = Provenance::kAnalytic;
  Provenance d2_sup_source = Provenance::kEmpirical;
  Provenance d2_c1_source = Provenance::kEmpirical;
};

/// Kernel parameters entering the Gaussian shape exp(-d2 / (sigma^2 rho_i rho_j)).
struct KernelParams {
  double sigma = 1.0;
  std::vector<double> rho;  // empty means rho == 1
};

inline constexpr double kVelocityResidualLimit = 0.02;

/// Sample-based lower estimates of the bound constants. Without a vector
/// field, velocities come from central differences and are cross-checked
/// against a fourth-order stencil.
BoundConstants estimate_constants(const StateTrajectory& traj, const SparseDistanceGraph& graph,
                                  const KernelParams& params,
                                  const std::optional<VectorField>& field = std::nullopt);

/// Recomputes C1 and C2 from the component constants.
void refresh_derived_constants(BoundConstants& constants);

struct TheoremBounds {
  std::vector<double> t;
  std::vector<double> s;
  std::vector<double> S;
  std::vector<double> eps_tilde;
  std::vector<double> eps;
  bool unbounded = false;
};

/// s_t = (C1 t / T + 3 delta) / gamma, S_t = (C2 |V| (1 + delta~) / lambda) int_0^t s_u du,
/// eps~ = s + sqrt(S), eps = s + 3 sqrt(S). A zero gap gives infinite bounds.
TheoremBounds theorem_bounds(const GapReport& gaps, const BoundConstants& constants,
                             std::span<const double> t_grid);

/// |U^q z - e^{i omega q dt} z|_N including the zero-padded tail.
std::vector<double> pseudospectral_residual(const SampledFunction& z, double omega,
                                            std::span<const std::size_t> q_grid, double dt);
/// Same residual restricted to i < n - q and normalized by 1/(n - q).
std::vector<double> pseudospectral_residual_tail_corrected(const SampledFunction& z, double omega,
                                                           std::span<const std::size_t> q_grid,
                                                           double dt);

/// Largest singular value of U^q K - K U^q for the dense fixed-bandwidth
/// Gaussian K = exp(-d2_T / sigma^2) / n on the delay-embedded samples.
double commutator_norm(const StateTrajectory& traj, const DelayConfig& cfg, std::size_t q,
                       double sigma);

inline constexpr std::size_t kCommutatorMaxSize = 2000;

struct CoherenceReport {
  double dt = 0.0;
  std::vector<Complex> alpha;
  std::vector<Complex> alpha_unbiased;
  double omega = 0.0;
  GapReport gaps;
  std::optional<BoundConstants> constants;
  TheoremBounds bounds;
  std::vector<double> residuals;
  std::vector<double> residuals_tail_corrected;
  std::vector<Complex> beta;
  std::vector<double> r_norm;
  std::vector<std::string> warnings;
};

CoherenceReport coherence_report(const CoherentObservable& z, const GapReport& gaps,
                                 const std::optional<BoundConstants>& constants,
                                 std::size_t q_max, double dt);

std::string coherence_report_json(const CoherenceReport& report);
/// Columns t, Re alpha, Im alpha, |alpha|, s, S, eps~, eps, residual,
/// residual_tail_corrected.
std::string coherence_report_csv(const CoherenceReport& report);

}  // namespace coherence
