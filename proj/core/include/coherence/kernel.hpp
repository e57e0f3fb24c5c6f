#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "coherence/delay.hpp"

namespace coherence {

enum class BandwidthRole { kBase, kFinal };

/// Result of the kernel-sum slope heuristic. The grid is over the bandwidth
/// sigma with sigma^2 log-spaced across six decades around the median
/// (scaled) squared distance; slopes are d log Sigma / d log sigma^2, so the
/// dimension estimate is twice the largest slope.
struct BandwidthTuning {
  std::vector<double> grid;
  std::vector<double> kernel_sums;
  std::vector<double> slopes;
  double median_sq_dist = 0.0;
  double sigma_star = 0.0;
  double m_est = 0.0;
  double max_slope = 0.0;
  BandwidthRole role = BandwidthRole::kBase;
  bool flat_spectrum = false;
};

inline constexpr std::size_t kTuningGridSize = 201;
inline constexpr double kFlatSlopeThreshold = 0.05;

BandwidthTuning tune_bandwidth(const SparseDistanceGraph& graph,
                               std::span<const double> rho = {},
                               BandwidthRole role = BandwidthRole::kBase);

/// rho_i = ((1/n) sum_j exp(-d2_ij / sigma_bar^2))^(-1/m) over stored
/// neighbours.
std::vector<double> bandwidth_function(const SparseDistanceGraph& graph, double sigma_bar,
                                       double m);

enum class KernelKind { kBaseGaussian, kVariableBandwidth, kBistochasticFactor };

/// Kernel values on the support of a distance graph.
struct SparseKernel {
  std::shared_ptr<const SparseDistanceGraph> topology;
  std::vector<double> values;
  KernelKind kind = KernelKind::kBaseGaussian;

  std::size_t n() const { return topology->n; }
};

/// exp(-d2_ij / (sigma^2 rho_i rho_j)). An empty rho means rho == 1, which
/// yields the fixed-bandwidth Gaussian.
SparseKernel variable_bandwidth_kernel(std::shared_ptr<const SparseDistanceGraph> graph,
                                       double sigma, std::span<const double> rho = {});

/// Bistochastic normalization of a symmetric kernel kappa. With
/// u = (1/n) kappa 1 and v = (1/n) kappa u^-1, the factor
/// G_il = (1/n) kappa_il / (u_i sqrt(v_l)) gives the symmetric Markov kernel
/// matrix K = G G^T (K 1 = 1). G is kept implicit: it is applied through the
/// stored kappa and the two scaling vectors.
class BistochasticFactor {
 public:
  BistochasticFactor(SparseKernel kappa, std::vector<double> u, std::vector<double> v);

  std::size_t n() const { return kappa_.n(); }
  const SparseKernel& kappa() const { return kappa_; }
  const std::vector<double>& u() const { return u_; }
  const std::vector<double>& v() const { return v_; }

  /// Entry G_il for the p-th stored neighbour l of row i.
  double g_entry(std::size_t i, std::size_t p) const;

  void apply_g(std::span<const double> x, std::span<double> y) const;
  void apply_gt(std::span<const double> x, std::span<double> y) const;
  /// y = G (G^T x); `scratch` has length n.
  void apply_markov(std::span<const double> x, std::span<double> y,
                    std::span<double> scratch) const;

  Eigen::MatrixXd dense_g() const;
  Eigen::MatrixXd dense_markov() const;

 private:
  SparseKernel kappa_;
  std::vector<double> u_;
  std::vector<double> v_;
  std::vector<double> inv_u_;
  std::vector<double> inv_sqrt_v_;
};

BistochasticFactor bistochastic_factor(SparseKernel kappa);

/// K 1, which equals 1 for a Markov kernel.
std::vector<double> markov_row_sums(const BistochasticFactor& factor);

enum class BandwidthMode { kVariable, kFixed };

struct KernelSettings {
  BandwidthMode mode = BandwidthMode::kVariable;
  std::optional<double> sigma;      // final bandwidth override
  std::optional<double> dimension;  // m override
};

/// Both tuning passes plus normalization. In fixed mode the single tuning
/// pass sets sigma and rho is identically 1.
struct KernelBuild {
  BandwidthTuning base_tuning;
  std::optional<BandwidthTuning> final_tuning;
  std::vector<double> rho;
  double sigma_bar = 0.0;
  double sigma = 0.0;
  double m = 0.0;
  BandwidthMode mode = BandwidthMode::kVariable;
  std::shared_ptr<const BistochasticFactor> factor;
  std::vector<std::string> warnings;
};

KernelBuild build_kernel(std::shared_ptr<const SparseDistanceGraph> graph,
                         const KernelSettings& settings);

std::string tuning_report_json(const KernelBuild& build);

/// Header line of JSON followed by row_ptr, cols, kappa, u, v blocks.
void save_factor(const BistochasticFactor& factor, const std::filesystem::path& path);
BistochasticFactor load_factor(const std::filesystem::path& path);

}  // namespace coherence
