#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "coherence/delay.hpp"
#include "coherence/kernel.hpp"
#include "coherence/koopman.hpp"
#include "coherence/trajectory.hpp"

namespace coherence {

/// Everything needed to evaluate the continuous representative
/// zeta(x) = (1/sqrt 2) (1/n) sum_l kappa(x, l) w_l / (u(x) v_l)
/// of a coherent observable at a new delay history, where
/// w_l = (1/n) sum_j kappa_lj (phi_j / lambda_phi + i psi_j / lambda_psi) / u_j.
struct FeatureModel {
  StateMatrix states;  // training observations, n + Q - 1 rows
  std::size_t delays = 1;
  double dt = 1.0;
  BandwidthMode mode = BandwidthMode::kVariable;
  double sigma_bar = 0.0;
  double m = 0.0;
  double sigma = 0.0;
  std::vector<double> rho;
  std::vector<double> u;
  std::vector<double> v;
  Eigen::VectorXd phi;
  Eigen::VectorXd psi;
  double phi_eigenvalue = 0.0;
  double psi_eigenvalue = 0.0;
  double omega = 0.0;
  Eigen::VectorXcd w;

  std::size_t n() const { return u.size(); }
};

FeatureModel build_feature_model(const StateTrajectory& traj, const DelayConfig& cfg,
                                 const KernelBuild& kernel, const CoherentObservable& z);

/// zeta at the point whose last Q observations (oldest first) form `query`.
Complex extend_feature(const FeatureModel& model, const StateMatrix& query);

/// Batch evaluation, one query per element.
std::vector<Complex> extend_features(const FeatureModel& model,
                                     const std::vector<StateMatrix>& queries);

std::string feature_model_json(const FeatureModel& model);
FeatureModel parse_feature_model(const std::string& json_text);
void save_feature_model(const FeatureModel& model, const std::filesystem::path& path);
FeatureModel load_feature_model(const std::filesystem::path& path);

}  // namespace coherence
