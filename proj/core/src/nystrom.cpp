#include "coherence/nystrom.hpp"

#include <cmath>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

FeatureModel build_feature_model(const StateTrajectory& traj, const DelayConfig& cfg,
                                 const KernelBuild& kernel, const CoherentObservable& z) {
  require(kernel.factor != nullptr, ErrorCode::kInput, "kernel has no factor");
  const BistochasticFactor& factor = *kernel.factor;
  const std::size_t n = factor.n();
  require(embedded_count(traj, cfg) == n, ErrorCode::kShape,
          "trajectory does not match the kernel");
  require(static_cast<std::size_t>(z.phi.size()) == n, ErrorCode::kShape,
          "observable does not match the kernel");
  require(z.phi_eigenvalue > 0.0 && z.psi_eigenvalue > 0.0, ErrorCode::kDegeneratePair,
          "pair eigenvalue is not positive");

  FeatureModel model;
  model.states = traj.states().topRows(static_cast<Eigen::Index>(n + cfg.delays() - 1));
  model.delays = cfg.delays();
  model.dt = cfg.dt();
  model.mode = kernel.mode;
  model.sigma_bar = kernel.sigma_bar;
  model.m = kernel.m;
  model.sigma = kernel.sigma;
  model.rho = kernel.rho;
  model.u = factor.u();
  model.v = factor.v();
  model.phi = z.phi;
  model.psi = z.psi;
  model.phi_eigenvalue = z.phi_eigenvalue;
  model.psi_eigenvalue = z.psi_eigenvalue;
  model.omega = z.omega;

  const SparseDistanceGraph& graph = *factor.kappa().topology;
  const std::vector<double>& kappa = factor.kappa().values;
  const double inv_n = 1.0 / static_cast<double>(n);
  model.w.resize(static_cast<Eigen::Index>(n));
  for (std::size_t l = 0; l < n; ++l) {
    Complex acc = 0.0;
    for (std::size_t p = graph.row_begin(l); p < graph.row_end(l); ++p) {
      const auto j = static_cast<Eigen::Index>(graph.cols[p]);
      const Complex c(model.phi[j] / model.phi_eigenvalue, model.psi[j] / model.psi_eigenvalue);
      acc += kappa[p] * c / model.u[static_cast<std::size_t>(j)];
    }
    model.w[static_cast<Eigen::Index>(l)] = acc * inv_n;
  }
  return model;
}

Complex extend_feature(const FeatureModel& model, const StateMatrix& query) {
  const std::size_t n = model.n();
  require(static_cast<std::size_t>(query.rows()) == model.delays &&
              query.cols() == model.states.cols(),
          ErrorCode::kShape,
          "query must hold " + std::to_string(model.delays) + " rows of dimension " +
              std::to_string(model.states.cols()));
  require(query.allFinite(), ErrorCode::kNonFinite, "query has non-finite entries");

  const double inv_q = 1.0 / static_cast<double>(model.delays);
  std::vector<double> d2(n);
  for (std::size_t l = 0; l < n; ++l) {
    double sum = 0.0;
    for (std::size_t q = 0; q < model.delays; ++q) {
      const auto row = static_cast<Eigen::Index>(q);
      sum += (query.row(row) - model.states.row(static_cast<Eigen::Index>(l + q))).squaredNorm();
    }
    d2[l] = sum * inv_q;
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  double rho_x = 1.0;
  if (model.mode == BandwidthMode::kVariable) {
    const double inv_eps = 1.0 / (model.sigma_bar * model.sigma_bar);
    double density = 0.0;
    for (std::size_t l = 0; l < n; ++l) density += std::exp(-d2[l] * inv_eps);
    density *= inv_n;
    require(density > 0.0, ErrorCode::kOutOfDistribution,
            "query is too far from the training data (bandwidth density underflow)");
    rho_x = std::pow(density, -1.0 / model.m);
  }

  const double sigma2 = model.sigma * model.sigma;
  double u_x = 0.0;
  Complex acc = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    const double rho_l = model.rho.empty() ? 1.0 : model.rho[l];
    const double kappa = std::exp(-d2[l] / (sigma2 * rho_x * rho_l));
    u_x += kappa;
    acc += kappa * model.w[static_cast<Eigen::Index>(l)] / model.v[l];
  }
  u_x *= inv_n;
  require(u_x > 0.0 && std::isfinite(u_x), ErrorCode::kOutOfDistribution,
          "query is too far from the training data (kernel row sum underflow)");
  return acc * inv_n / (u_x * std::sqrt(2.0));
}

std::vector<Complex> extend_features(const FeatureModel& model,
                                     const std::vector<StateMatrix>& queries) {
  std::vector<Complex> out(queries.size());
  parallel_for(0, queries.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = extend_feature(model, queries[i]);
  });
  return out;
}

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string feature_model_json(const FeatureModel& model) {
  nlohmann::json states = nlohmann::json::array();
  for (Eigen::Index r = 0; r < model.states.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < model.states.cols(); ++c) row.push_back(model.states(r, c));
    states.push_back(std::move(row));
  }
  std::vector<double> w_re(static_cast<std::size_t>(model.w.size()));
  std::vector<double> w_im(w_re.size());
  for (Eigen::Index i = 0; i < model.w.size(); ++i) {
    w_re[static_cast<std::size_t>(i)] = model.w[i].real();
    w_im[static_cast<std::size_t>(i)] = model.w[i].imag();
  }
  const nlohmann::json json = {
      {"format", "coherence-feature-model"},
      {"version", 1},
      {"delays", model.delays},
      {"dt", model.dt},
      {"mode", model.mode == BandwidthMode::kVariable ? "variable" : "fixed"},
      {"sigma_bar", model.sigma_bar},
      {"m", model.m},
      {"sigma", model.sigma},
      {"phi_eigenvalue", model.phi_eigenvalue},
      {"psi_eigenvalue", model.psi_eigenvalue},
      {"omega", model.omega},
      {"rho", model.rho},
      {"u", model.u},
      {"v", model.v},
      {"phi", to_vector(model.phi)},
      {"psi", to_vector(model.psi)},
      {"w_re", w_re},
      {"w_im", w_im},
      {"states", states}};
  return json.dump() + "\n";
}

FeatureModel parse_feature_model(const std::string& json_text) {
  FeatureModel model;
  try {
    const auto json = nlohmann::json::parse(json_text);
    require(json.value("format", "") == "coherence-feature-model", ErrorCode::kParse,
            "not a feature model");
    model.delays = json.at("delays").get<std::size_t>();
    model.dt = json.at("dt").get<double>();
    model.mode = json.at("mode").get<std::string>() == "fixed" ? BandwidthMode::kFixed
                                                                : BandwidthMode::kVariable;
    model.sigma_bar = json.at("sigma_bar").get<double>();
    model.m = json.at("m").get<double>();
    model.sigma = json.at("sigma").get<double>();
    model.phi_eigenvalue = json.at("phi_eigenvalue").get<double>();
    model.psi_eigenvalue = json.at("psi_eigenvalue").get<double>();
    model.omega = json.at("omega").get<double>();
    model.rho = json.at("rho").get<std::vector<double>>();
    model.u = json.at("u").get<std::vector<double>>();
    model.v = json.at("v").get<std::vector<double>>();
    model.phi = to_eigen(json.at("phi").get<std::vector<double>>());
    model.psi = to_eigen(json.at("psi").get<std::vector<double>>());
    const auto w_re = json.at("w_re").get<std::vector<double>>();
    const auto w_im = json.at("w_im").get<std::vector<double>>();
    const auto rows = json.at("states").get<std::vector<std::vector<double>>>();
    const std::size_t n = model.u.size();
    require(n > 0 && model.v.size() == n && w_re.size() == n && w_im.size() == n &&
                static_cast<std::size_t>(model.phi.size()) == n &&
                static_cast<std::size_t>(model.psi.size()) == n &&
                (model.rho.empty() || model.rho.size() == n) &&
                rows.size() == n + model.delays - 1,
            ErrorCode::kParse, "feature model arrays have inconsistent lengths");
    model.w.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) model.w[static_cast<Eigen::Index>(i)] = {w_re[i], w_im[i]};
    const std::size_t dim = rows.front().size();
    model.states.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(rows[r].size() == dim, ErrorCode::kRaggedRows, "ragged state rows in model");
      for (std::size_t c = 0; c < dim; ++c) {
        model.states(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad feature model: ") + e.what());
  }
  return model;
}

void save_feature_model(const FeatureModel& model, const std::filesystem::path& path) {
  io::write_text(path, feature_model_json(model));
}

FeatureModel load_feature_model(const std::filesystem::path& path) {
  return parse_feature_model(io::read_text(path));
}

}  // namespace coherence
