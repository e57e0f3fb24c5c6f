#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coherence/delay.hpp"
#include "coherence/kernel.hpp"
#include "coherence/koopman.hpp"
#include "coherence/nystrom.hpp"
#include "coherence/spectral.hpp"
#include "coherence/trajectory.hpp"

namespace coherence {

struct SourceConfig {
  std::string generator;  // "l63", "circle", or empty for a file source
  std::vector<double> x0{1.0, 1.0, 1.0};
  double spinup = 640.0;
  double freq = 1.0;
  std::filesystem::path path;
  TrajectoryFormat format = TrajectoryFormat::kCsv;
  std::vector<std::size_t> observe;  // empty keeps every column
};

struct ConstantOverrides {
  std::optional<double> C1;
  std::optional<double> C2;
  std::optional<double> vfield_norm;
};

struct PipelineConfig {
  SourceConfig source;
  std::optional<double> dt;
  std::optional<std::size_t> delays;
  std::optional<double> window;
  std::optional<std::size_t> num_samples;  // embedded samples N; empty uses the whole file
  std::optional<std::size_t> knn;
  std::optional<double> sigma;
  std::optional<double> dimension;
  BandwidthMode mode = BandwidthMode::kVariable;
  std::size_t num_eigs = kDefaultNumEigs;
  std::optional<std::pair<std::size_t, std::size_t>> pair;  // empty means (1, 2)
  std::size_t lags = 1000;
  std::size_t extract_length = 1000;
  std::filesystem::path output_dir = "coherence_out";
  std::uint64_t seed = 0;
  unsigned threads = 0;
  ConstantOverrides constants;

  DelayConfig delay_config() const;
  /// T = Q dt, with the single-delay case reported as T = 0.
  double effective_window() const;
  std::pair<std::size_t, std::size_t> chosen_pair() const;
};

PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_json(const PipelineConfig& config);
/// Checks counts and cross-field consistency; throws a config error.
void validate_config(const PipelineConfig& config);

// Artifact names inside the output directory.
inline constexpr const char* kTrajectoryFile = "trajectory.csv";
inline constexpr const char* kGraphFile = "graph.bin";
inline constexpr const char* kTuningFile = "tuning.json";
inline constexpr const char* kFactorFile = "factor.bin";
inline constexpr const char* kEigenFile = "eigenpairs.csv";
inline constexpr const char* kGapFile = "gaps.json";
inline constexpr const char* kCoherenceJsonFile = "coherence.json";
inline constexpr const char* kCoherenceCsvFile = "coherence.csv";
inline constexpr const char* kExtractFile = "eigenfunctions.csv";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kSweepCsvFile = "sweep.csv";
inline constexpr const char* kSweepJsonFile = "sweep.json";

// Individual stages. Each wraps errors with the stage name.
StateTrajectory stage_generate(const PipelineConfig& config);
SparseDistanceGraph stage_embed(const PipelineConfig& config, const StateTrajectory& traj);
KernelBuild stage_kernel(const PipelineConfig& config,
                         std::shared_ptr<const SparseDistanceGraph> graph);
EigenDecomposition stage_eigs(const PipelineConfig& config, const BistochasticFactor& factor);

struct AnalysisResult {
  GapReport gaps;
  CoherentObservable observable;
  CoherenceReport coherence;
  FeatureModel model;
  bool short_window = false;
  std::vector<std::string> warnings;
};

AnalysisResult stage_analyze(const PipelineConfig& config, const StateTrajectory& traj,
                             const SparseDistanceGraph& graph, const KernelBuild& kernel,
                             const EigenDecomposition& eig);

/// Restores a kernel build from the tuning report and factor artifacts.
KernelBuild load_kernel_build(const std::filesystem::path& tuning_path,
                              const std::filesystem::path& factor_path);

// Artifact writers used by both the staged CLI and the full pipeline.
void write_trajectory_artifact(const std::filesystem::path& dir, const StateTrajectory& traj);
void write_kernel_artifacts(const std::filesystem::path& dir, const KernelBuild& kernel);
void write_analysis_artifacts(const std::filesystem::path& dir, const PipelineConfig& config,
                              const AnalysisResult& analysis);

struct ReportBundle {
  std::filesystem::path output_dir;
  std::vector<std::filesystem::path> files;  // relative to output_dir, manifest last
  KernelBuild kernel;
  EigenDecomposition eig;
  AnalysisResult analysis;
};

/// All stages end to end, then the manifest. Files written by a failed run
/// are removed before the error propagates.
ReportBundle run_pipeline(const PipelineConfig& config);

/// manifest.json listing SHA-256 digests of `files` (relative to `dir`).
void write_manifest(const std::filesystem::path& dir, const PipelineConfig& config,
                    const std::vector<std::filesystem::path>& files, const std::string& summary_json);

struct SweepRow {
  double T = 0.0;
  std::size_t delays = 1;
  bool ok = false;
  std::string error;
  GapReport gaps;
  double subspace_overlap = 1.0;  // with the previous successful window
  bool possible_crossing = false;
};

/// One run per window on a single trajectory long enough for the largest
/// window; every window shares the same base points. Tracks lambda_2 and
/// nu = lambda_1.
std::vector<SweepRow> sweep_windows(const PipelineConfig& config, const std::vector<double>& windows);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_json(const std::vector<SweepRow>& rows);

}  // namespace coherence
