#include "coherence/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {
namespace {

// exp(-x) is exactly zero in double precision beyond this argument.
constexpr double kExpUnderflow = 746.0;

std::vector<double> scaled_distances(const SparseDistanceGraph& graph,
                                     std::span<const double> rho) {
  std::vector<double> scaled(graph.sq_dists);
  if (rho.empty()) return scaled;
  for (std::size_t i = 0; i < graph.n; ++i) {
    for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
      scaled[p] = graph.sq_dists[p] / (rho[i] * rho[graph.cols[p]]);
    }
  }
  return scaled;
}

double median_positive(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !(v > 0.0); });
  if (values.empty()) return 0.0;
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
  std::nth_element(values.begin(), mid, values.end());
  double median = *mid;
  if (values.size() % 2 == 0) {
    median = 0.5 * (median + *std::max_element(values.begin(), mid));
  }
  return median;
}

}  // namespace

BandwidthTuning tune_bandwidth(const SparseDistanceGraph& graph, std::span<const double> rho,
                               BandwidthRole role) {
  require(graph.n > 0 && graph.nnz() > 0, ErrorCode::kInput, "distance graph is empty");
  if (!rho.empty()) {
    require(rho.size() == graph.n, ErrorCode::kShape, "bandwidth vector has the wrong length");
    for (double r : rho) {
      require(r > 0.0 && std::isfinite(r), ErrorCode::kInput,
              "bandwidth function must be strictly positive");
    }
  }
  const std::vector<double> scaled = scaled_distances(graph, rho);
  const double median = median_positive(scaled);
  require(median > 0.0, ErrorCode::kDegenerateData, "all stored distances are zero");

  BandwidthTuning tuning;
  tuning.role = role;
  tuning.median_sq_dist = median;
  const std::size_t g_count = kTuningGridSize;
  std::vector<double> eps(g_count);
  tuning.grid.resize(g_count);
  tuning.kernel_sums.resize(g_count);
  tuning.slopes.resize(g_count);
  for (std::size_t g = 0; g < g_count; ++g) {
    const double exponent = -3.0 + 6.0 * static_cast<double>(g) / static_cast<double>(g_count - 1);
    eps[g] = median * std::pow(10.0, exponent);
    tuning.grid[g] = std::sqrt(eps[g]);
  }

  // Ascending order lets each sum stop once exp(-a / eps) underflows to zero.
  std::vector<double> sorted = scaled;
  std::sort(sorted.begin(), sorted.end());
  const double inv_count = 1.0 / static_cast<double>(sorted.size());
  parallel_for(0, g_count, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t g = begin; g < end; ++g) {
      const double inv_eps = 1.0 / eps[g];
      double sum = 0.0;
      for (double a : sorted) {
        const double x = a * inv_eps;
        if (x > kExpUnderflow) break;
        sum += std::exp(-x);
      }
      tuning.kernel_sums[g] = sum * inv_count;
    }
  });
  for (double s : tuning.kernel_sums) {
    require(s > 0.0, ErrorCode::kDegenerateData, "kernel sum vanished on the tuning grid");
  }

  for (std::size_t g = 0; g < g_count; ++g) {
    const std::size_t lo = g == 0 ? 0 : g - 1;
    const std::size_t hi = g + 1 == g_count ? g : g + 1;
    tuning.slopes[g] = (std::log(tuning.kernel_sums[hi]) - std::log(tuning.kernel_sums[lo])) /
                       (std::log(eps[hi]) - std::log(eps[lo]));
  }
  const auto best = static_cast<std::size_t>(
      std::max_element(tuning.slopes.begin(), tuning.slopes.end()) - tuning.slopes.begin());
  tuning.max_slope = tuning.slopes[best];
  tuning.m_est = 2.0 * tuning.max_slope;
  if (tuning.max_slope < kFlatSlopeThreshold) {
    tuning.flat_spectrum = true;
    tuning.sigma_star = std::sqrt(median);
  } else {
    tuning.sigma_star = tuning.grid[best];
  }
  return tuning;
}

std::vector<double> bandwidth_function(const SparseDistanceGraph& graph, double sigma_bar,
                                       double m) {
  require(sigma_bar > 0.0 && std::isfinite(sigma_bar), ErrorCode::kInput,
          "sigma_bar must be positive");
  require(m > 0.0 && std::isfinite(m), ErrorCode::kInput, "dimension must be positive");
  const double inv_eps = 1.0 / (sigma_bar * sigma_bar);
  const double inv_n = 1.0 / static_cast<double>(graph.n);
  std::vector<double> rho(graph.n);
  for (std::size_t i = 0; i < graph.n; ++i) {
    double sum = 0.0;
    for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
      sum += std::exp(-graph.sq_dists[p] * inv_eps);
    }
    sum *= inv_n;
    require(sum > 0.0, ErrorCode::kIsolatedSample,
            "kernel row sum underflowed at row " + std::to_string(i));
    rho[i] = std::pow(sum, -1.0 / m);
    require(std::isfinite(rho[i]), ErrorCode::kIsolatedSample,
            "bandwidth function overflowed at row " + std::to_string(i));
  }
  return rho;
}

SparseKernel variable_bandwidth_kernel(std::shared_ptr<const SparseDistanceGraph> graph,
                                       double sigma, std::span<const double> rho) {
  require(graph != nullptr, ErrorCode::kInput, "missing graph");
  require(sigma > 0.0 && std::isfinite(sigma), ErrorCode::kInput, "sigma must be positive");
  const SparseDistanceGraph& g = *graph;
  if (!rho.empty()) {
    require(rho.size() == g.n, ErrorCode::kShape, "bandwidth vector has the wrong length");
    for (double r : rho) {
      require(r > 0.0 && std::isfinite(r), ErrorCode::kInput,
              "bandwidth function must be strictly positive");
    }
  }
  SparseKernel kernel;
  kernel.kind = rho.empty() ? KernelKind::kBaseGaussian : KernelKind::kVariableBandwidth;
  kernel.values.resize(g.nnz());
  const double sigma2 = sigma * sigma;
  parallel_for(0, g.n, 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t p = g.row_begin(i); p < g.row_end(i); ++p) {
        const double scale = rho.empty() ? sigma2 : sigma2 * (rho[i] * rho[g.cols[p]]);
        kernel.values[p] = std::exp(-g.sq_dists[p] / scale);
      }
    }
  });
  kernel.topology = std::move(graph);
  return kernel;
}

BistochasticFactor::BistochasticFactor(SparseKernel kappa, std::vector<double> u,
                                       std::vector<double> v)
    : kappa_(std::move(kappa)), u_(std::move(u)), v_(std::move(v)) {
  require(kappa_.topology != nullptr, ErrorCode::kInput, "kernel has no topology");
  const std::size_t count = kappa_.n();
  require(u_.size() == count && v_.size() == count, ErrorCode::kShape,
          "normalization vectors have the wrong length");
  inv_u_.resize(count);
  inv_sqrt_v_.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    require(u_[i] > 0.0 && v_[i] > 0.0, ErrorCode::kIsolatedSample,
            "non-positive normalization at sample " + std::to_string(i));
    inv_u_[i] = 1.0 / u_[i];
    inv_sqrt_v_[i] = 1.0 / std::sqrt(v_[i]);
  }
  kappa_.kind = KernelKind::kBistochasticFactor;
}

double BistochasticFactor::g_entry(std::size_t i, std::size_t p) const {
  const auto l = kappa_.topology->cols[p];
  return kappa_.values[p] * inv_u_[i] * inv_sqrt_v_[l] / static_cast<double>(n());
}

void BistochasticFactor::apply_g(std::span<const double> x, std::span<double> y) const {
  const SparseDistanceGraph& g = *kappa_.topology;
  const double inv_n = 1.0 / static_cast<double>(n());
  parallel_for(0, n(), 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double acc = 0.0;
      for (std::size_t p = g.row_begin(i); p < g.row_end(i); ++p) {
        const auto l = g.cols[p];
        acc += kappa_.values[p] * inv_sqrt_v_[l] * x[l];
      }
      y[i] = acc * inv_u_[i] * inv_n;
    }
  });
}

void BistochasticFactor::apply_gt(std::span<const double> x, std::span<double> y) const {
  // (G^T x)_l = (1/n) v_l^{-1/2} sum_i kappa_li x_i / u_i, using kappa symmetric.
  const SparseDistanceGraph& g = *kappa_.topology;
  const double inv_n = 1.0 / static_cast<double>(n());
  parallel_for(0, n(), 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t l = begin; l < end; ++l) {
      double acc = 0.0;
      for (std::size_t p = g.row_begin(l); p < g.row_end(l); ++p) {
        const auto i = g.cols[p];
        acc += kappa_.values[p] * inv_u_[i] * x[i];
      }
      y[l] = acc * inv_sqrt_v_[l] * inv_n;
    }
  });
}

void BistochasticFactor::apply_markov(std::span<const double> x, std::span<double> y,
                                      std::span<double> scratch) const {
  apply_gt(x, scratch);
  apply_g(scratch, y);
}

Eigen::MatrixXd BistochasticFactor::dense_g() const {
  const SparseDistanceGraph& g = *kappa_.topology;
  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n()),
                                                static_cast<Eigen::Index>(n()));
  for (std::size_t i = 0; i < n(); ++i) {
    for (std::size_t p = g.row_begin(i); p < g.row_end(i); ++p) {
      dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g.cols[p])) = g_entry(i, p);
    }
  }
  return dense;
}

Eigen::MatrixXd BistochasticFactor::dense_markov() const {
  const Eigen::MatrixXd g = dense_g();
  Eigen::MatrixXd k = g * g.transpose();
  // Symmetrize the rounding of the product.
  return 0.5 * (k + k.transpose());
}

BistochasticFactor bistochastic_factor(SparseKernel kappa) {
  require(kappa.topology != nullptr, ErrorCode::kInput, "kernel has no topology");
  const SparseDistanceGraph& g = *kappa.topology;
  const std::size_t count = g.n;
  const double inv_n = 1.0 / static_cast<double>(count);
  std::vector<double> u(count), v(count);
  for (std::size_t i = 0; i < count; ++i) {
    require(g.row_end(i) > g.row_begin(i), ErrorCode::kIsolatedSample,
            "row " + std::to_string(i) + " has no stored entries");
    double acc = 0.0;
    for (std::size_t p = g.row_begin(i); p < g.row_end(i); ++p) acc += kappa.values[p];
    u[i] = acc * inv_n;
    require(u[i] > 0.0, ErrorCode::kIsolatedSample, "zero row sum at sample " + std::to_string(i));
  }
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.0;
    for (std::size_t p = g.row_begin(i); p < g.row_end(i); ++p) {
      acc += kappa.values[p] / u[g.cols[p]];
    }
    v[i] = acc * inv_n;
    require(v[i] > 0.0, ErrorCode::kIsolatedSample, "zero column sum at sample " + std::to_string(i));
  }
  return BistochasticFactor(std::move(kappa), std::move(u), std::move(v));
}

std::vector<double> markov_row_sums(const BistochasticFactor& factor) {
  std::vector<double> ones(factor.n(), 1.0), out(factor.n()), scratch(factor.n());
  factor.apply_markov(ones, out, scratch);
  return out;
}

KernelBuild build_kernel(std::shared_ptr<const SparseDistanceGraph> graph,
                         const KernelSettings& settings) {
  require(graph != nullptr, ErrorCode::kInput, "missing graph");
  require(graph->symmetrized, ErrorCode::kInput, "kernel construction needs a symmetrized graph");
  KernelBuild build;
  build.mode = settings.mode;
  build.base_tuning = tune_bandwidth(*graph, {}, BandwidthRole::kBase);
  if (build.base_tuning.flat_spectrum) {
    build.warnings.push_back("flat kernel-sum slope in base tuning; sigma set to median distance");
  }
  build.sigma_bar = build.base_tuning.sigma_star;
  build.m = settings.dimension.value_or(build.base_tuning.m_est);
  require(build.m > 0.0, ErrorCode::kDegenerateData, "dimension estimate is not positive");

  if (settings.mode == BandwidthMode::kFixed) {
    build.sigma = settings.sigma.value_or(build.sigma_bar);
    build.rho.assign(graph->n, 1.0);
    auto kappa = variable_bandwidth_kernel(graph, build.sigma);
    build.factor = std::make_shared<const BistochasticFactor>(bistochastic_factor(std::move(kappa)));
    return build;
  }

  build.rho = bandwidth_function(*graph, build.sigma_bar, build.m);
  if (settings.sigma) {
    build.sigma = *settings.sigma;
  } else {
    build.final_tuning = tune_bandwidth(*graph, build.rho, BandwidthRole::kFinal);
    if (build.final_tuning->flat_spectrum) {
      build.warnings.push_back("flat kernel-sum slope in final tuning; sigma set to median distance");
    }
    build.sigma = build.final_tuning->sigma_star;
  }
  auto kappa = variable_bandwidth_kernel(graph, build.sigma, build.rho);
  build.factor = std::make_shared<const BistochasticFactor>(bistochastic_factor(std::move(kappa)));
  return build;
}

namespace {

nlohmann::json tuning_json(const BandwidthTuning& t) {
  return {{"role", t.role == BandwidthRole::kBase ? "base" : "final"},
          {"grid", t.grid},
          {"sums", t.kernel_sums},
          {"slopes", t.slopes},
          {"median_sq_dist", t.median_sq_dist},
          {"sigma_star", t.sigma_star},
          {"m_est", t.m_est},
          {"max_slope", t.max_slope},
          {"flat_spectrum", t.flat_spectrum}};
}

}  // namespace

std::string tuning_report_json(const KernelBuild& build) {
  nlohmann::json report = {
      {"mode", build.mode == BandwidthMode::kVariable ? "variable" : "fixed"},
      {"sigma_bar", build.sigma_bar},
      {"sigma", build.sigma},
      {"m", build.m},
      {"rho", build.rho},
      {"base", tuning_json(build.base_tuning)},
      {"warnings", build.warnings}};
  if (build.final_tuning) report["final"] = tuning_json(*build.final_tuning);
  return report.dump(2) + "\n";
}

void save_factor(const BistochasticFactor& factor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  const SparseDistanceGraph& g = *factor.kappa().topology;
  const nlohmann::json header = {{"format", "coherence-factor"},
                                 {"version", 1},
                                 {"n", g.n},
                                 {"k", g.k},
                                 {"Q", g.delays},
                                 {"dt", g.dt},
                                 {"nnz", g.nnz()}};
  out << header.dump() << '\n';
  io::write_block(out, std::span<const std::uint64_t>(g.row_ptr));
  io::write_block(out, std::span<const std::uint32_t>(g.cols));
  io::write_block(out, std::span<const double>(g.sq_dists));
  io::write_block(out, std::span<const double>(factor.kappa().values));
  io::write_block(out, std::span<const double>(factor.u()));
  io::write_block(out, std::span<const double>(factor.v()));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

BistochasticFactor load_factor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": bad factor header: " + e.what());
  }
  require(header.value("format", "") == "coherence-factor", ErrorCode::kParse,
          path.string() + " is not a factor file");
  auto graph = std::make_shared<SparseDistanceGraph>();
  graph->n = header.at("n").get<std::size_t>();
  graph->k = header.at("k").get<std::size_t>();
  graph->delays = header.at("Q").get<std::size_t>();
  graph->dt = header.at("dt").get<double>();
  graph->symmetrized = true;
  const auto nnz = header.at("nnz").get<std::size_t>();
  graph->row_ptr.resize(graph->n + 1);
  graph->cols.resize(nnz);
  graph->sq_dists.resize(nnz);
  io::read_block(in, std::span<std::uint64_t>(graph->row_ptr));
  io::read_block(in, std::span<std::uint32_t>(graph->cols));
  io::read_block(in, std::span<double>(graph->sq_dists));
  SparseKernel kappa;
  kappa.values.resize(nnz);
  io::read_block(in, std::span<double>(kappa.values));
  std::vector<double> u(graph->n), v(graph->n);
  io::read_block(in, std::span<double>(u));
  io::read_block(in, std::span<double>(v));
  kappa.topology = std::move(graph);
  kappa.kind = KernelKind::kVariableBandwidth;
  return BistochasticFactor(std::move(kappa), std::move(u), std::move(v));
}

}  // namespace coherence
