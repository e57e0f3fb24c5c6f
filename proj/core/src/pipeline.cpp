#include "coherence/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

namespace fs = std::filesystem;
using nlohmann::json;

DelayConfig PipelineConfig::delay_config() const {
  require(dt.has_value(), ErrorCode::kConfig, "dt is not set");
  if (delays) return DelayConfig(*delays, *dt);
  return DelayConfig::from_window(window.value_or(0.0), *dt);
}

double PipelineConfig::effective_window() const {
  const DelayConfig cfg = delay_config();
  return cfg.delays() == 1 ? 0.0 : cfg.window();
}

std::pair<std::size_t, std::size_t> PipelineConfig::chosen_pair() const {
  return pair.value_or(std::pair<std::size_t, std::size_t>{1, 2});
}

namespace {

const std::set<std::string> kConfigKeys = {
    "source", "dt",    "delays", "window", "num_samples", "knn",     "sigma",
    "dimension", "bandwidth_mode", "num_eigs", "pair", "lags", "extract_length",
    "output_dir", "seed", "threads", "constants"};
const std::set<std::string> kSourceKeys = {"generator", "x0",     "spinup", "freq",
                                           "path",      "format", "observe"};

template <typename T>
std::optional<T> auto_or(const json& value, const char* key) {
  if (value.is_string()) {
    require(value.get<std::string>() == "auto", ErrorCode::kConfig,
            std::string(key) + " must be \"auto\" or a number");
    return std::nullopt;
  }
  if constexpr (std::is_integral_v<T>) {
    require(value.is_number_integer() && value.get<long long>() >= 0, ErrorCode::kConfig,
            std::string(key) + " must be a non-negative integer");
  } else {
    require(value.is_number(), ErrorCode::kConfig, std::string(key) + " must be a number");
  }
  return value.get<T>();
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  PipelineConfig config;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  require(root.is_object(), ErrorCode::kConfig, "config must be a JSON object");
  try {
    for (const auto& [key, value] : root.items()) {
      require(kConfigKeys.contains(key), ErrorCode::kConfig, "unknown config key \"" + key + "\"");
    }
    if (root.contains("source")) {
      const json& src = root["source"];
      require(src.is_object(), ErrorCode::kConfig, "source must be an object");
      for (const auto& [key, value] : src.items()) {
        require(kSourceKeys.contains(key), ErrorCode::kConfig,
                "unknown source key \"" + key + "\"");
      }
      config.source.generator = src.value("generator", "");
      if (src.contains("x0")) config.source.x0 = src["x0"].get<std::vector<double>>();
      config.source.spinup = src.value("spinup", config.source.spinup);
      config.source.freq = src.value("freq", config.source.freq);
      if (src.contains("path")) config.source.path = src["path"].get<std::string>();
      if (src.contains("format")) {
        const auto format = parse_trajectory_format(src["format"].get<std::string>());
        require(format.has_value(), ErrorCode::kConfig, "unknown trajectory format");
        config.source.format = *format;
      }
      if (src.contains("observe")) {
        config.source.observe = src["observe"].get<std::vector<std::size_t>>();
      }
    }
    if (root.contains("dt")) config.dt = root["dt"].get<double>();
    if (root.contains("delays")) config.delays = root["delays"].get<std::size_t>();
    if (root.contains("window")) config.window = root["window"].get<double>();
    if (root.contains("num_samples")) {
      config.num_samples = auto_or<std::size_t>(root["num_samples"], "num_samples");
    }
    if (root.contains("knn")) config.knn = auto_or<std::size_t>(root["knn"], "knn");
    if (root.contains("sigma")) config.sigma = auto_or<double>(root["sigma"], "sigma");
    if (root.contains("dimension")) {
      config.dimension = auto_or<double>(root["dimension"], "dimension");
    }
    if (root.contains("bandwidth_mode")) {
      const auto mode = root["bandwidth_mode"].get<std::string>();
      require(mode == "variable" || mode == "fixed", ErrorCode::kConfig,
              "bandwidth_mode must be \"variable\" or \"fixed\"");
      config.mode = mode == "fixed" ? BandwidthMode::kFixed : BandwidthMode::kVariable;
    }
    if (root.contains("num_eigs")) config.num_eigs = root["num_eigs"].get<std::size_t>();
    if (root.contains("pair")) {
      const json& pair = root["pair"];
      if (pair.is_string()) {
        require(pair.get<std::string>() == "auto", ErrorCode::kConfig,
                "pair must be \"auto\" or [j1, j2]");
      } else {
        const auto values = pair.get<std::vector<std::size_t>>();
        require(values.size() == 2, ErrorCode::kConfig, "pair must hold two indices");
        config.pair = std::pair{values[0], values[1]};
      }
    }
    if (root.contains("lags")) config.lags = root["lags"].get<std::size_t>();
    if (root.contains("extract_length")) {
      config.extract_length = root["extract_length"].get<std::size_t>();
    }
    if (root.contains("output_dir")) config.output_dir = root["output_dir"].get<std::string>();
    if (root.contains("seed")) config.seed = root["seed"].get<std::uint64_t>();
    if (root.contains("threads")) config.threads = root["threads"].get<unsigned>();
    if (root.contains("constants")) {
      const json& c = root["constants"];
      for (const auto& [key, value] : c.items()) {
        require(key == "C1" || key == "C2" || key == "vfield_norm", ErrorCode::kConfig,
                "unknown constants key \"" + key + "\"");
      }
      if (c.contains("C1")) config.constants.C1 = c["C1"].get<double>();
      if (c.contains("C2")) config.constants.C2 = c["C2"].get<double>();
      if (c.contains("vfield_norm")) config.constants.vfield_norm = c["vfield_norm"].get<double>();
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("bad config value: ") + e.what());
  }
  return config;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return parse_pipeline_config(io::read_text(path));
}

std::string pipeline_config_json(const PipelineConfig& c) {
  json source = {{"generator", c.source.generator}};
  if (c.source.generator == "l63") {
    source["x0"] = c.source.x0;
    source["spinup"] = c.source.spinup;
  } else if (c.source.generator == "circle") {
    source["freq"] = c.source.freq;
  } else {
    source["path"] = c.source.path.string();
    source["format"] = c.source.format == TrajectoryFormat::kCsv ? "csv" : "raw-float64";
  }
  if (!c.source.observe.empty()) source["observe"] = c.source.observe;
  json root = {{"source", source}};
  if (c.dt) root["dt"] = *c.dt;
  if (c.delays) root["delays"] = *c.delays;
  if (c.window) root["window"] = *c.window;
  root["num_samples"] = c.num_samples ? json(*c.num_samples) : json("auto");
  root["knn"] = c.knn ? json(*c.knn) : json("auto");
  root["sigma"] = c.sigma ? json(*c.sigma) : json("auto");
  root["dimension"] = c.dimension ? json(*c.dimension) : json("auto");
  root["bandwidth_mode"] = c.mode == BandwidthMode::kFixed ? "fixed" : "variable";
  root["num_eigs"] = c.num_eigs;
  root["pair"] = c.pair ? json::array({c.pair->first, c.pair->second}) : json("auto");
  root["lags"] = c.lags;
  root["extract_length"] = c.extract_length;
  root["output_dir"] = c.output_dir.string();
  root["seed"] = c.seed;
  root["threads"] = c.threads;
  json constants = json::object();
  if (c.constants.C1) constants["C1"] = *c.constants.C1;
  if (c.constants.C2) constants["C2"] = *c.constants.C2;
  if (c.constants.vfield_norm) constants["vfield_norm"] = *c.constants.vfield_norm;
  if (!constants.empty()) root["constants"] = constants;
  return root.dump(2) + "\n";
}

void validate_config(const PipelineConfig& c) {
  const std::string& gen = c.source.generator;
  require(gen.empty() || gen == "l63" || gen == "circle", ErrorCode::kConfig,
          "unknown generator \"" + gen + "\"");
  if (gen.empty()) {
    require(!c.source.path.empty(), ErrorCode::kConfig,
            "source needs a generator or an input path");
  } else {
    require(c.dt.has_value(), ErrorCode::kConfig, "generated sources need dt");
    require(c.num_samples.has_value(), ErrorCode::kConfig, "generated sources need num_samples");
  }
  if (gen == "l63") {
    require(c.source.x0.size() == 3, ErrorCode::kConfig, "l63 needs a 3-component x0");
    require(c.source.spinup >= 0.0, ErrorCode::kConfig, "spinup must be non-negative");
  }
  if (c.dt) require(*c.dt > 0.0 && std::isfinite(*c.dt), ErrorCode::kConfig, "dt must be positive");
  require(!(c.delays && c.window), ErrorCode::kConfig, "set either delays or window, not both");
  if (c.delays) require(*c.delays >= 1, ErrorCode::kConfig, "delays must be at least 1");
  if (c.num_samples) require(*c.num_samples >= 3, ErrorCode::kConfig, "num_samples must be >= 3");
  if (c.knn) require(*c.knn >= 1, ErrorCode::kConfig, "knn must be positive");
  if (c.sigma) require(*c.sigma > 0.0, ErrorCode::kConfig, "sigma must be positive");
  if (c.dimension) require(*c.dimension > 0.0, ErrorCode::kConfig, "dimension must be positive");
  require(c.num_eigs >= 3, ErrorCode::kConfig, "num_eigs must be at least 3");
  const auto [j1, j2] = c.chosen_pair();
  require(j1 != j2 && std::max(j1, j2) - std::min(j1, j2) == 1, ErrorCode::kConfig,
          "pair must be two consecutive indices");
  require(std::max(j1, j2) + 1 < c.num_eigs, ErrorCode::kConfig,
          "num_eigs must exceed the pair's larger index by at least two");
  if (c.num_samples) {
    require(c.num_eigs <= *c.num_samples, ErrorCode::kConfig, "num_eigs exceeds num_samples");
    require(c.lags < *c.num_samples, ErrorCode::kConfig, "lags must be below num_samples");
  }
  if (c.dt) (void)c.delay_config();
}

namespace {

template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + stage + ": " + e.what());
  }
}

std::optional<VectorField> analytic_field(const PipelineConfig& config) {
  if (!config.source.observe.empty()) return std::nullopt;
  if (config.source.generator == "l63") return lorenz63_field();
  if (config.source.generator == "circle") {
    const double freq = config.source.freq;
    return VectorField{2, [freq](std::span<const double> x, std::span<double> dx) {
                         dx[0] = -freq * x[1];
                         dx[1] = freq * x[0];
                       }};
  }
  return std::nullopt;
}

}  // namespace

StateTrajectory stage_generate(const PipelineConfig& config) {
  return in_stage("generate", [&] {
    validate_config(config);
    const std::string& gen = config.source.generator;
    if (gen.empty()) {
      StateTrajectory traj = load_trajectory(config.source.path, config.source.format, config.dt);
      if (!config.source.observe.empty()) traj = traj.observe(config.source.observe);
      const PipelineConfig with_dt = [&] {
        PipelineConfig c = config;
        c.dt = traj.dt();
        return c;
      }();
      const DelayConfig cfg = with_dt.delay_config();
      if (config.num_samples) {
        const std::size_t total = *config.num_samples + cfg.delays() - 1;
        require(traj.size() >= total, ErrorCode::kConfig,
                "input trajectory has " + std::to_string(traj.size()) + " rows, need " +
                    std::to_string(total));
        traj = traj.head(total);
      }
      return traj;
    }
    const DelayConfig cfg = config.delay_config();
    const std::size_t total = *config.num_samples + cfg.delays() - 1;
    StateTrajectory traj = gen == "l63"
                               ? integrate_l63(config.source.x0, *config.dt, total,
                                               config.source.spinup)
                               : circle_flow(config.source.freq, *config.dt, total);
    if (!config.source.observe.empty()) traj = traj.observe(config.source.observe);
    return traj;
  });
}

SparseDistanceGraph stage_embed(const PipelineConfig& config, const StateTrajectory& traj) {
  return in_stage("embed", [&] {
    PipelineConfig c = config;
    c.dt = traj.dt();
    const DelayConfig cfg = c.delay_config();
    const std::size_t n = embedded_count(traj, cfg);
    const std::size_t k = config.knn ? std::min(*config.knn, n - 1) : default_knn(n);
    return build_knn_graph(traj, cfg, k);
  });
}

KernelBuild stage_kernel(const PipelineConfig& config,
                         std::shared_ptr<const SparseDistanceGraph> graph) {
  return in_stage("kernel", [&] {
    KernelSettings settings;
    settings.mode = config.mode;
    settings.sigma = config.sigma;
    settings.dimension = config.dimension;
    return build_kernel(std::move(graph), settings);
  });
}

EigenDecomposition stage_eigs(const PipelineConfig& config, const BistochasticFactor& factor) {
  return in_stage("eigs", [&] {
    SolverOptions options;
    options.seed = config.seed;
    require(config.num_eigs <= factor.n(), ErrorCode::kConfig, "num_eigs exceeds the sample count");
    return leading_eigenpairs(factor, config.num_eigs, options);
  });
}

AnalysisResult stage_analyze(const PipelineConfig& config, const StateTrajectory& traj,
                             const SparseDistanceGraph& graph, const KernelBuild& kernel,
                             const EigenDecomposition& eig) {
  return in_stage("analyze", [&] {
    AnalysisResult result;
    PipelineConfig c = config;
    c.dt = traj.dt();
    const DelayConfig cfg = c.delay_config();
    const double dt = traj.dt();
    const auto [j1, j2] = c.chosen_pair();
    const double T = c.effective_window();
    result.short_window = cfg.delays() == 1;
    result.warnings = kernel.warnings;
    if (result.short_window) {
      result.warnings.push_back("short-window regime: a single delay (T = 0)");
    }
    result.gaps = spectral_gaps(eig, j1, j2, T);
    if (result.gaps.numerically_degenerate) {
      result.warnings.push_back("chosen pair is numerically degenerate");
    }
    result.observable = make_observable(eig, j1, j2, dt);

    std::optional<BoundConstants> constants;
    try {
      KernelParams params;
      params.sigma = kernel.sigma;
      if (kernel.mode == BandwidthMode::kVariable) params.rho = kernel.rho;
      BoundConstants estimated = estimate_constants(traj, graph, params, analytic_field(c));
      if (c.constants.vfield_norm) {
        estimated.vfield_norm = *c.constants.vfield_norm;
        estimated.vfield_source = Provenance::kUser;
      }
      if (c.constants.C1) {
        estimated.C1 = *c.constants.C1;
        estimated.C1_source = Provenance::kUser;
      }
      if (c.constants.C2) {
        estimated.C2 = *c.constants.C2;
        estimated.C2_source = Provenance::kUser;
      }
      constants = estimated;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEstimation) throw;
      result.warnings.push_back(std::string("bound constants unavailable: ") + e.what());
    }
    const std::size_t n = eig.samples();
    const std::size_t lags = std::min(c.lags, n - 1);
    result.coherence = coherence_report(result.observable, result.gaps, constants, lags, dt);
    for (const auto& w : result.coherence.warnings) result.warnings.push_back(w);
    result.coherence.warnings = result.warnings;
    result.model = build_feature_model(traj, cfg, kernel, result.observable);
    return result;
  });
}

KernelBuild load_kernel_build(const fs::path& tuning_path, const fs::path& factor_path) {
  KernelBuild build;
  try {
    const json tuning = json::parse(io::read_text(tuning_path));
    build.mode = tuning.at("mode").get<std::string>() == "fixed" ? BandwidthMode::kFixed
                                                                  : BandwidthMode::kVariable;
    build.sigma_bar = tuning.at("sigma_bar").get<double>();
    build.sigma = tuning.at("sigma").get<double>();
    build.m = tuning.at("m").get<double>();
    build.rho = tuning.at("rho").get<std::vector<double>>();
    build.warnings = tuning.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, tuning_path.string() + ": " + e.what());
  }
  build.factor = std::make_shared<const BistochasticFactor>(load_factor(factor_path));
  require(build.rho.size() == build.factor->n(), ErrorCode::kParse,
          "tuning report does not match the factor");
  return build;
}

void write_trajectory_artifact(const fs::path& dir, const StateTrajectory& traj) {
  save_trajectory(traj, dir / kTrajectoryFile, TrajectoryFormat::kCsv);
}

void write_kernel_artifacts(const fs::path& dir, const KernelBuild& kernel) {
  io::write_text(dir / kTuningFile, tuning_report_json(kernel));
  save_factor(*kernel.factor, dir / kFactorFile);
}

void write_analysis_artifacts(const fs::path& dir, const PipelineConfig& config,
                              const AnalysisResult& analysis) {
  io::write_text(dir / kGapFile, gap_report_json(analysis.gaps));
  json coherence = json::parse(coherence_report_json(analysis.coherence));
  coherence["phi_index"] = analysis.observable.phi_index;
  coherence["psi_index"] = analysis.observable.psi_index;
  coherence["psi_negated"] = analysis.observable.psi_negated;
  coherence["omega_raw"] = analysis.observable.omega_raw;
  coherence["short_window"] = analysis.short_window;
  io::write_text(dir / kCoherenceJsonFile, coherence.dump(2) + "\n");
  io::write_text(dir / kCoherenceCsvFile, coherence_report_csv(analysis.coherence));

  const CoherentObservable& z = analysis.observable;
  const auto count = std::min<std::size_t>(config.extract_length,
                                           static_cast<std::size_t>(z.phi.size()));
  const double dt = analysis.coherence.dt;
  std::ostringstream extract;
  extract << "t,phi,psi,re_z,im_z,abs_z\n";
  for (std::size_t i = 0; i < count; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Complex value = z.z.values[ii];
    extract << io::format_double(static_cast<double>(i) * dt) << ','
            << io::format_double(z.phi[ii]) << ',' << io::format_double(z.psi[ii]) << ','
            << io::format_double(value.real()) << ',' << io::format_double(value.imag()) << ','
            << io::format_double(std::abs(value)) << '\n';
  }
  io::write_text(dir / kExtractFile, extract.str());
  save_feature_model(analysis.model, dir / kModelFile);
}

void write_manifest(const fs::path& dir, const PipelineConfig& config,
                    const std::vector<fs::path>& files, const std::string& summary_json) {
  json entries = json::array();
  for (const auto& file : files) {
    entries.push_back({{"name", file.generic_string()},
                       {"bytes", fs::file_size(dir / file)},
                       {"sha256", io::sha256_file(dir / file)}});
  }
  const json manifest = {{"format", "coherence-manifest"},
                         {"version", 1},
                         {"config", json::parse(pipeline_config_json(config))},
                         {"files", entries},
                         {"summary", json::parse(summary_json)}};
  io::write_text(dir / kManifestFile, manifest.dump(2) + "\n");
}

namespace {

std::string summary_json(const KernelBuild& kernel, const EigenDecomposition& eig,
                         const AnalysisResult& analysis) {
  std::vector<double> eigenvalues(eig.eigenvalues.data(),
                                  eig.eigenvalues.data() + eig.eigenvalues.size());
  const json summary = {{"eigenvalues", eigenvalues},
                        {"sigma_bar", kernel.sigma_bar},
                        {"sigma", kernel.sigma},
                        {"m", kernel.m},
                        {"lambda_T", analysis.gaps.lambda_T},
                        {"nu_T", analysis.gaps.nu_T},
                        {"gamma_T", analysis.gaps.gamma_T},
                        {"delta_tilde_T", analysis.gaps.delta_tilde_T},
                        {"eta_T", analysis.gaps.eta_T},
                        {"omega", analysis.observable.omega},
                        {"short_window", analysis.short_window},
                        {"warnings", analysis.warnings}};
  return summary.dump();
}

// Tracks files written into the output directory and removes them unless
// the run completes.
class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    created_dir_ = !fs::exists(dir_, ec);
    fs::create_directories(dir_, ec);
    require(!ec && fs::is_directory(dir_), ErrorCode::kIo,
            "cannot create output directory " + dir_.string());
  }
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;

  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& file : files_) fs::remove(dir_ / file, ec);
    if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
  }

  void add(const fs::path& file) { files_.push_back(file); }
  const std::vector<fs::path>& files() const { return files_; }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

}  // namespace

ReportBundle run_pipeline(const PipelineConfig& config) {
  validate_config(config);
  if (config.threads > 0) set_num_threads(config.threads);
  ReportBundle bundle;
  bundle.output_dir = config.output_dir;
  const fs::path& dir = config.output_dir;
  OutputGuard guard(dir);

  const StateTrajectory traj = stage_generate(config);
  guard.add(kTrajectoryFile);
  guard.add(sidecar_path(kTrajectoryFile));
  in_stage("export", [&] { write_trajectory_artifact(dir, traj); });

  const auto graph = std::make_shared<const SparseDistanceGraph>(stage_embed(config, traj));
  guard.add(kGraphFile);
  in_stage("export", [&] { save_graph(*graph, dir / kGraphFile); });

  bundle.kernel = stage_kernel(config, graph);
  guard.add(kTuningFile);
  guard.add(kFactorFile);
  in_stage("export", [&] { write_kernel_artifacts(dir, bundle.kernel); });

  bundle.eig = stage_eigs(config, *bundle.kernel.factor);
  guard.add(kEigenFile);
  in_stage("export", [&] { save_eigenpairs(bundle.eig, dir / kEigenFile); });

  bundle.analysis = stage_analyze(config, traj, *graph, bundle.kernel, bundle.eig);
  for (const char* name :
       {kGapFile, kCoherenceJsonFile, kCoherenceCsvFile, kExtractFile, kModelFile}) {
    guard.add(name);
  }
  in_stage("export", [&] {
    write_analysis_artifacts(dir, config, bundle.analysis);
    const std::vector<fs::path> listed = guard.files();
    guard.add(kManifestFile);
    write_manifest(dir, config, listed, summary_json(bundle.kernel, bundle.eig, bundle.analysis));
  });
  bundle.files = guard.files();
  guard.commit();
  return bundle;
}

std::vector<SweepRow> sweep_windows(const PipelineConfig& config,
                                    const std::vector<double>& windows) {
  require(!windows.empty(), ErrorCode::kConfig, "window list is empty");
  if (config.threads > 0) set_num_threads(config.threads);
  PipelineConfig base = config;
  base.window.reset();
  base.delays.reset();

  // Resolve dt and the largest delay count before generating the data.
  std::optional<StateTrajectory> loaded;
  if (base.source.generator.empty()) {
    PipelineConfig probe = base;
    probe.num_samples.reset();
    probe.delays = 1;
    loaded = stage_generate(probe);
    base.dt = loaded->dt();
  }
  require(base.dt.has_value(), ErrorCode::kConfig, "dt is not set");
  std::vector<std::size_t> delays(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    delays[w] = DelayConfig::from_window(windows[w], *base.dt).delays();
  }
  const std::size_t q_max = *std::max_element(delays.begin(), delays.end());
  if (!base.num_samples) {
    require(loaded.has_value() && loaded->size() >= q_max + 2, ErrorCode::kConfig,
            "trajectory too short for the largest window");
    base.num_samples = loaded->size() - q_max + 1;
  }
  const std::size_t n = *base.num_samples;
  PipelineConfig longest = base;
  longest.delays = q_max;
  const StateTrajectory full = loaded ? loaded->head(n + q_max - 1) : stage_generate(longest);

  std::vector<SweepRow> rows(windows.size());
  Eigen::MatrixXd previous;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    SweepRow& row = rows[w];
    row.T = windows[w];
    row.delays = delays[w];
    try {
      PipelineConfig c = base;
      c.delays = delays[w];
      const StateTrajectory traj = full.head(n + delays[w] - 1);
      const auto graph = std::make_shared<const SparseDistanceGraph>(stage_embed(c, traj));
      const KernelBuild kernel = stage_kernel(c, graph);
      const EigenDecomposition eig = stage_eigs(c, *kernel.factor);
      row.gaps = in_stage("gaps", [&] { return spectral_gaps(eig, 2, 1, c.effective_window()); });
      const Eigen::MatrixXd tracked = eig.eigenvectors.middleCols(1, 2);
      if (previous.size() > 0) {
        const Eigen::Matrix2d overlap =
            previous.transpose() * tracked / static_cast<double>(tracked.rows());
        row.subspace_overlap = overlap.squaredNorm() / 2.0;
        row.possible_crossing = row.subspace_overlap < 0.5;
      }
      previous = tracked;
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "T,Q,ok,lambda_T,nu_T,gamma_T,delta_T,delta_over_gamma,delta_tilde_T,eta_T,"
         "subspace_overlap,possible_crossing\n";
  for (const auto& r : rows) {
    out << io::format_double(r.T) << ',' << r.delays << ',' << (r.ok ? 1 : 0);
    if (r.ok) {
      out << ',' << io::format_double(r.gaps.lambda_T) << ',' << io::format_double(r.gaps.nu_T)
          << ',' << io::format_double(r.gaps.gamma_T) << ',' << io::format_double(r.gaps.delta_T)
          << ',' << io::format_double(r.gaps.delta_T / r.gaps.gamma_T) << ','
          << io::format_double(r.gaps.delta_tilde_T) << ',' << io::format_double(r.gaps.eta_T)
          << ',' << io::format_double(r.subspace_overlap) << ',' << (r.possible_crossing ? 1 : 0);
    } else {
      out << ",,,,,,,,,";
    }
    out << '\n';
  }
  return out.str();
}

std::string sweep_json(const std::vector<SweepRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"T", r.T}, {"Q", r.delays}, {"ok", r.ok}};
    if (r.ok) {
      row["gaps"] = json::parse(gap_report_json(r.gaps));
      row["subspace_overlap"] = r.subspace_overlap;
      row["possible_crossing"] = r.possible_crossing;
    } else {
      row["error"] = r.error;
    }
    out.push_back(row);
  }
  const json root = {{"tracking", "sorted index: lambda = lambda_2, nu = lambda_1"},
                     {"windows", out}};
  return root.dump(2) + "\n";
}

}  // namespace coherence
