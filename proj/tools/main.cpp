#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"
#include "coherence/pipeline.hpp"

namespace fs = std::filesystem;
using namespace coherence;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct Overrides {
  std::string config_path;
  std::optional<std::string> output_dir;
  std::optional<std::string> generator;
  std::optional<std::string> input;
  std::optional<std::string> format;
  std::optional<std::vector<double>> x0;
  std::optional<double> spinup;
  std::optional<double> freq;
  std::optional<double> dt;
  std::optional<std::size_t> delays;
  std::optional<double> window;
  std::optional<std::size_t> num_samples;
  std::optional<std::string> knn;
  std::optional<std::string> sigma;
  std::optional<std::string> dimension;
  std::optional<std::string> bandwidth_mode;
  std::optional<std::size_t> num_eigs;
  std::optional<std::vector<std::size_t>> pair;
  std::optional<std::size_t> lags;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config_path, "JSON pipeline configuration");
  cmd->add_option("-o,--output-dir", o.output_dir, "Output directory");
  cmd->add_option("--generator", o.generator, "Built-in source: l63 or circle");
  cmd->add_option("--input", o.input, "Trajectory file instead of a generator");
  cmd->add_option("--format", o.format, "Input format: csv or raw-float64");
  cmd->add_option("--x0", o.x0, "Initial state for l63")->delimiter(',');
  cmd->add_option("--spinup", o.spinup, "Discarded transient duration");
  cmd->add_option("--freq", o.freq, "Circle rotation frequency");
  cmd->add_option("--dt", o.dt, "Sampling interval");
  auto* delays = cmd->add_option("-Q,--delays", o.delays, "Number of delays");
  cmd->add_option("-T,--window", o.window, "Embedding window Q * dt")->excludes(delays);
  cmd->add_option("-N,--num-samples", o.num_samples, "Embedded sample count");
  cmd->add_option("--knn", o.knn, "Neighbours per sample or auto");
  cmd->add_option("--sigma", o.sigma, "Final bandwidth or auto");
  cmd->add_option("--dimension", o.dimension, "Dimension estimate m or auto");
  cmd->add_option("--bandwidth-mode", o.bandwidth_mode, "variable or fixed")
      ->check(CLI::IsMember({"variable", "fixed"}));
  cmd->add_option("-l,--num-eigs", o.num_eigs, "Number of eigenpairs");
  cmd->add_option("--pair", o.pair, "Eigenvector pair j1,j2")->delimiter(',')->expected(2);
  cmd->add_option("--lags", o.lags, "Largest lag q_max");
  cmd->add_option("--seed", o.seed, "Seed for the eigensolver start vector");
  cmd->add_option("--threads", o.threads, "Worker cap (also COHERENCE_THREADS)");
}

template <typename T>
std::optional<T> auto_or_number(const std::string& text, const char* name) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    if constexpr (std::is_integral_v<T>) {
      const unsigned long long value = std::stoull(text, &used);
      if (used == text.size()) return static_cast<T>(value);
    } else {
      const double value = std::stod(text, &used);
      if (used == text.size()) return value;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kConfig, std::string(name) + " must be auto or a number, got \"" + text + "\"");
}

PipelineConfig resolve_config(const Overrides& o) {
  PipelineConfig c;
  if (!o.config_path.empty()) c = load_pipeline_config(o.config_path);
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.generator) {
    c.source.generator = *o.generator;
    c.source.path.clear();
  }
  if (o.input) {
    c.source.generator.clear();
    c.source.path = *o.input;
  }
  if (o.format) {
    const auto format = parse_trajectory_format(*o.format);
    require(format.has_value(), ErrorCode::kConfig, "unknown trajectory format " + *o.format);
    c.source.format = *format;
  }
  if (o.x0) c.source.x0 = *o.x0;
  if (o.spinup) c.source.spinup = *o.spinup;
  if (o.freq) c.source.freq = *o.freq;
  if (o.dt) c.dt = *o.dt;
  if (o.delays) {
    c.delays = *o.delays;
    c.window.reset();
  }
  if (o.window) {
    c.window = *o.window;
    c.delays.reset();
  }
  if (o.num_samples) c.num_samples = *o.num_samples;
  if (o.knn) c.knn = auto_or_number<std::size_t>(*o.knn, "--knn");
  if (o.sigma) c.sigma = auto_or_number<double>(*o.sigma, "--sigma");
  if (o.dimension) c.dimension = auto_or_number<double>(*o.dimension, "--dimension");
  if (o.bandwidth_mode) {
    c.mode = *o.bandwidth_mode == "fixed" ? BandwidthMode::kFixed : BandwidthMode::kVariable;
  }
  if (o.num_eigs) c.num_eigs = *o.num_eigs;
  if (o.pair) c.pair = std::pair{(*o.pair)[0], (*o.pair)[1]};
  if (o.lags) c.lags = *o.lags;
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (c.threads > 0) set_num_threads(c.threads);
  return c;
}

StateTrajectory load_cached_trajectory(const PipelineConfig& c) {
  return load_trajectory(c.output_dir / kTrajectoryFile, TrajectoryFormat::kCsv);
}

// The cached trajectory carries its own dt; the delay settings still come
// from the configuration.
PipelineConfig with_cached_dt(PipelineConfig c, const StateTrajectory& traj) {
  c.dt = traj.dt();
  return c;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorCode::kIo, "cannot create " + dir.string());
}

void log(const std::string& message) { std::cerr << "coherence: " << message << '\n'; }

int cmd_generate(const Overrides& o) {
  const PipelineConfig c = resolve_config(o);
  const StateTrajectory traj = stage_generate(c);
  ensure_dir(c.output_dir);
  write_trajectory_artifact(c.output_dir, traj);
  log("wrote " + std::to_string(traj.size()) + " states to " +
      (c.output_dir / kTrajectoryFile).string());
  return 0;
}

int cmd_embed(const Overrides& o) {
  const PipelineConfig base = resolve_config(o);
  const StateTrajectory traj = load_cached_trajectory(base);
  const PipelineConfig c = with_cached_dt(base, traj);
  const SparseDistanceGraph graph = stage_embed(c, traj);
  save_graph(graph, c.output_dir / kGraphFile);
  log("graph with n = " + std::to_string(graph.n) + ", nnz = " + std::to_string(graph.nnz()));
  return 0;
}

int cmd_kernel(const Overrides& o) {
  const PipelineConfig c = resolve_config(o);
  auto graph = std::make_shared<const SparseDistanceGraph>(load_graph(c.output_dir / kGraphFile));
  const KernelBuild kernel = stage_kernel(c, graph);
  write_kernel_artifacts(c.output_dir, kernel);
  for (const auto& w : kernel.warnings) log("warning: " + w);
  log("sigma_bar = " + io::format_double(kernel.sigma_bar) +
      ", sigma = " + io::format_double(kernel.sigma) + ", m = " + io::format_double(kernel.m));
  return 0;
}

int cmd_eigs(const Overrides& o) {
  const PipelineConfig c = resolve_config(o);
  const BistochasticFactor factor = load_factor(c.output_dir / kFactorFile);
  const EigenDecomposition eig = stage_eigs(c, factor);
  save_eigenpairs(eig, c.output_dir / kEigenFile);
  std::string values;
  for (Eigen::Index i = 0; i < eig.eigenvalues.size(); ++i) {
    values += (i ? " " : "") + io::format_double(eig.eigenvalues[i]);
  }
  log("eigenvalues: " + values);
  return 0;
}

int cmd_analyze(const Overrides& o) {
  const PipelineConfig base = resolve_config(o);
  const fs::path& dir = base.output_dir;
  const StateTrajectory traj = load_cached_trajectory(base);
  const PipelineConfig c = with_cached_dt(base, traj);
  const SparseDistanceGraph graph = load_graph(dir / kGraphFile);
  const KernelBuild kernel = load_kernel_build(dir / kTuningFile, dir / kFactorFile);
  const EigenDecomposition eig = load_eigenpairs(dir / kEigenFile);
  const AnalysisResult analysis = stage_analyze(c, traj, graph, kernel, eig);
  write_analysis_artifacts(dir, c, analysis);
  for (const auto& w : analysis.warnings) log("warning: " + w);
  log("omega = " + io::format_double(analysis.observable.omega));
  return 0;
}

int cmd_report(const Overrides& o) {
  const PipelineConfig c = resolve_config(o);
  const ReportBundle bundle = run_pipeline(c);
  for (const auto& w : bundle.analysis.warnings) log("warning: " + w);
  const GapReport& g = bundle.analysis.gaps;
  std::cout << "lambda_T " << io::format_double(g.lambda_T) << "\nnu_T "
            << io::format_double(g.nu_T) << "\ngamma_T " << io::format_double(g.gamma_T)
            << "\ndelta_tilde_T " << io::format_double(g.delta_tilde_T) << "\nomega "
            << io::format_double(bundle.analysis.observable.omega) << "\nmanifest "
            << (bundle.output_dir / kManifestFile).string() << '\n';
  return 0;
}

int cmd_sweep(const Overrides& o, const std::vector<double>& windows) {
  const PipelineConfig c = resolve_config(o);
  const std::vector<SweepRow> rows = sweep_windows(c, windows);
  ensure_dir(c.output_dir);
  io::write_text(c.output_dir / kSweepCsvFile, sweep_csv(rows));
  io::write_text(c.output_dir / kSweepJsonFile, sweep_json(rows));
  std::cout << sweep_csv(rows);
  for (const auto& r : rows) {
    if (!r.ok) log("window T = " + io::format_double(r.T) + " failed: " + r.error);
  }
  return 0;
}

StateMatrix read_query(const fs::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = io::split_csv_line(line);
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      require(io::parse_double(cells[c], row[c]) && std::isfinite(row[c]), ErrorCode::kParse,
              path.string() + ": bad number at line " + std::to_string(line_no));
    }
    require(rows.empty() || row.size() == rows.front().size(), ErrorCode::kRaggedRows,
            path.string() + ": ragged row at line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::kParse, path.string() + ": empty query");
  StateMatrix query(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      query(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return query;
}

int cmd_extend(const std::string& model_path, const std::string& query_path,
               const std::optional<std::string>& output) {
  const FeatureModel model = load_feature_model(model_path);
  const Complex zeta = extend_feature(model, read_query(query_path));
  const nlohmann::json result = {{"re", zeta.real()},
                                 {"im", zeta.imag()},
                                 {"abs", std::abs(zeta)},
                                 {"arg", std::arg(zeta)}};
  const std::string text = result.dump(2) + "\n";
  if (output) {
    io::write_text(*output, text);
  } else {
    std::cout << text;
  }
  return 0;
}

int exit_code(ErrorCode code) {
  switch (classify(code)) {
    case ErrorClass::kConfig:
      return kExitConfig;
    case ErrorClass::kIo:
      return kExitIo;
    case ErrorClass::kNumeric:
      return kExitNumeric;
  }
  return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coherent observables from delay-embedded time series"};
  app.require_subcommand(1);
  Overrides o;

  auto* generate = app.add_subcommand("generate", "Generate or load a trajectory");
  auto* embed = app.add_subcommand("embed", "Build the delay-coordinate kNN graph");
  auto* kernel = app.add_subcommand("kernel", "Tune bandwidths and normalize the kernel");
  auto* eigs = app.add_subcommand("eigs", "Leading eigenpairs of the Markov kernel");
  auto* analyze = app.add_subcommand("analyze", "Coherence diagnostics from cached stages");
  auto* report = app.add_subcommand("report", "Run every stage and write the manifest");
  auto* sweep = app.add_subcommand("sweep", "Spectral gap diagnostics across windows");
  auto* extend = app.add_subcommand("extend", "Evaluate the coherent feature at a new point");
  for (auto* cmd : {generate, embed, kernel, eigs, analyze, report, sweep}) add_common(cmd, o);

  std::vector<double> windows;
  sweep->add_option("--windows", windows, "Comma-separated list of windows T")
      ->delimiter(',')
      ->required();

  std::string model_path;
  std::string query_path;
  std::optional<std::string> extend_output;
  extend->add_option("--model", model_path, "model.json from analyze or report")->required();
  extend->add_option("--query", query_path, "CSV of Q consecutive observations")->required();
  extend->add_option("--output", extend_output, "Write the JSON result to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*generate) return cmd_generate(o);
    if (*embed) return cmd_embed(o);
    if (*kernel) return cmd_kernel(o);
    if (*eigs) return cmd_eigs(o);
    if (*analyze) return cmd_analyze(o);
    if (*report) return cmd_report(o);
    if (*sweep) return cmd_sweep(o, windows);
    if (*extend) return cmd_extend(model_path, query_path, extend_output);
  } catch (const Error& e) {
    std::cerr << "coherence: error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "coherence: I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "coherence: error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
