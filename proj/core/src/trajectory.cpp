#include "coherence/trajectory.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"

namespace coherence {

VectorField lorenz63_field() {
  return VectorField{3, [](std::span<const double> x, std::span<double> dx) {
                       dx[0] = 10.0 * (x[1] - x[0]);
                       dx[1] = 28.0 * x[0] - x[1] - x[0] * x[2];
                       dx[2] = x[0] * x[1] - 8.0 * x[2] / 3.0;
                     }};
}

StateTrajectory::StateTrajectory(StateMatrix states, double dt, double spinup,
                                 std::string source)
    : states_(std::move(states)), dt_(dt), spinup_(spinup), source_(std::move(source)) {
  require(states_.rows() >= 2, ErrorCode::kInput, "a trajectory needs at least 2 states");
  require(states_.cols() >= 1, ErrorCode::kInput, "states must have dimension >= 1");
  require(std::isfinite(dt_) && dt_ > 0.0, ErrorCode::kInput, "dt must be positive");
  require(std::isfinite(spinup_) && spinup_ >= 0.0, ErrorCode::kInput,
          "spinup must be non-negative");
  require(states_.allFinite(), ErrorCode::kNonFinite, "trajectory has non-finite entries");
}

StateTrajectory StateTrajectory::observe(std::span<const std::size_t> columns) const {
  require(!columns.empty(), ErrorCode::kInput, "observation mask is empty");
  StateMatrix observed(states_.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    require(columns[c] < dimension(), ErrorCode::kRange, "observation column out of range");
    observed.col(static_cast<Eigen::Index>(c)) = states_.col(static_cast<Eigen::Index>(columns[c]));
  }
  return StateTrajectory(std::move(observed), dt_, spinup_, source_);
}

StateTrajectory StateTrajectory::head(std::size_t count) const {
  require(count >= 2 && count <= size(), ErrorCode::kRange, "head count out of range");
  return StateTrajectory(states_.topRows(static_cast<Eigen::Index>(count)), dt_, spinup_,
                         source_);
}

namespace {

class Rk4Stepper {
 public:
  explicit Rk4Stepper(const VectorField& field)
      : field_(field), k1_(field.dimension), k2_(field.dimension), k3_(field.dimension),
        k4_(field.dimension), tmp_(field.dimension) {}

  void step(std::vector<double>& x, double h) {
    const std::size_t d = x.size();
    field_.evaluate(x, k1_);
    for (std::size_t i = 0; i < d; ++i) tmp_[i] = x[i] + 0.5 * h * k1_[i];
    field_.evaluate(tmp_, k2_);
    for (std::size_t i = 0; i < d; ++i) tmp_[i] = x[i] + 0.5 * h * k2_[i];
    field_.evaluate(tmp_, k3_);
    for (std::size_t i = 0; i < d; ++i) tmp_[i] = x[i] + h * k3_[i];
    field_.evaluate(tmp_, k4_);
    for (std::size_t i = 0; i < d; ++i) {
      x[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
  }

 private:
  const VectorField& field_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

bool all_finite(const std::vector<double>& x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

StateTrajectory integrate_generic(const VectorField& field, std::span<const double> x0,
                                  double dt, std::size_t n_samples, double spinup,
                                  std::optional<double> max_substep) {
  require(field.dimension > 0 && static_cast<bool>(field.evaluate), ErrorCode::kInput,
          "vector field is empty");
  require(x0.size() == field.dimension, ErrorCode::kShape,
          "initial state length does not match the field dimension");
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::kInput, "dt must be positive");
  require(n_samples >= 2, ErrorCode::kInput, "need at least 2 samples");
  require(std::isfinite(spinup) && spinup >= 0.0, ErrorCode::kInput,
          "spinup must be non-negative");
  const double cap = max_substep.value_or(dt);
  require(cap > 0.0, ErrorCode::kInput, "substep must be positive");

  const auto substeps = static_cast<std::size_t>(std::ceil(dt / cap - 1e-12));
  const double h = dt / static_cast<double>(std::max<std::size_t>(substeps, 1));
  Rk4Stepper stepper(field);
  std::vector<double> x(x0.begin(), x0.end());

  // Spinup: whole substeps, then one partial step for any remainder.
  const auto spin_steps = static_cast<std::size_t>(std::floor(spinup / h + 1e-9));
  for (std::size_t s = 0; s < spin_steps; ++s) {
    stepper.step(x, h);
    if ((s & 1023) == 0 && !all_finite(x)) {
      fail(ErrorCode::kIntegrationDiverged, "state left the finite range during spinup");
    }
  }
  const double remainder = spinup - static_cast<double>(spin_steps) * h;
  if (remainder > 1e-12 * std::max(1.0, spinup)) stepper.step(x, remainder);
  if (!all_finite(x)) fail(ErrorCode::kIntegrationDiverged, "state diverged during spinup");

  const std::size_t d = field.dimension;
  StateMatrix states(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(d));
  for (std::size_t n = 0; n < n_samples; ++n) {
    if (n > 0) {
      for (std::size_t s = 0; s < substeps; ++s) stepper.step(x, h);
    }
    if (!all_finite(x)) {
      fail(ErrorCode::kIntegrationDiverged, "state diverged at sample " + std::to_string(n));
    }
    for (std::size_t c = 0; c < d; ++c) {
      states(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = x[c];
    }
  }
  return StateTrajectory(std::move(states), dt, spinup, "rk4");
}

StateTrajectory integrate_l63(std::span<const double> x0, double dt, std::size_t n_samples,
                              double spinup) {
  require(x0.size() == 3, ErrorCode::kShape, "Lorenz 63 state has 3 components");
  const VectorField field = lorenz63_field();
  auto traj = integrate_generic(field, x0, dt, n_samples, spinup,
                                std::min(dt, kL63MaxSubstep));
  return StateTrajectory(traj.states(), traj.dt(), traj.spinup(), "l63");
}

StateMatrix circle_states(double freq, double dt, std::size_t n_samples) {
  require(freq != 0.0 && std::isfinite(freq), ErrorCode::kInput, "frequency must be nonzero");
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::kInput, "dt must be positive");
  require(n_samples >= 1, ErrorCode::kInput, "need at least one sample");
  StateMatrix states(static_cast<Eigen::Index>(n_samples), 2);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double angle = freq * static_cast<double>(n) * dt;
    states(static_cast<Eigen::Index>(n), 0) = std::cos(angle);
    states(static_cast<Eigen::Index>(n), 1) = std::sin(angle);
  }
  return states;
}

StateTrajectory circle_flow(double freq, double dt, std::size_t n_samples) {
  require(n_samples >= 2, ErrorCode::kInput, "a trajectory needs at least 2 states");
  return StateTrajectory(circle_states(freq, dt, n_samples), dt, 0.0, "circle");
}

std::optional<TrajectoryFormat> parse_trajectory_format(std::string_view name) {
  if (name == "csv") return TrajectoryFormat::kCsv;
  if (name == "raw" || name == "raw-float64") return TrajectoryFormat::kRawFloat64;
  return std::nullopt;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

namespace {

constexpr char kRawMagic[4] = {'C', 'T', 'R', 'J'};

StateTrajectory load_csv(const std::filesystem::path& path, std::optional<double> dt_override) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = io::split_csv_line(line);
    if (rows == 0) cols = cells.size();
    if (cells.size() != cols) {
      fail(ErrorCode::kRaggedRows, path.string() + ":" + std::to_string(line_no) + " has " +
                                       std::to_string(cells.size()) + " cells, expected " +
                                       std::to_string(cols));
    }
    for (const auto& cell : cells) {
      double v = 0.0;
      if (!io::parse_double(cell, v)) {
        fail(ErrorCode::kParse,
             path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "'");
      }
      if (!std::isfinite(v)) {
        fail(ErrorCode::kNonFinite,
             path.string() + ":" + std::to_string(line_no) + ": non-finite entry");
      }
      values.push_back(v);
    }
    ++rows;
  }
  require(rows >= 2, ErrorCode::kParse, path.string() + " needs at least 2 rows");

  double dt = 0.0;
  double spinup = 0.0;
  bool have_dt = false;
  const auto sidecar = sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(io::read_text(sidecar));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, sidecar.string() + ": " + e.what());
    }
    if (meta.contains("dt") && meta["dt"].is_number()) {
      dt = meta["dt"].get<double>();
      have_dt = true;
    }
    if (meta.contains("spinup") && meta["spinup"].is_number()) {
      spinup = meta["spinup"].get<double>();
    }
  }
  if (dt_override) {
    dt = *dt_override;
    have_dt = true;
  }
  require(have_dt, ErrorCode::kMissingDt,
          "no dt for " + path.string() + " (sidecar or override required)");

  StateMatrix states = Eigen::Map<const StateMatrix>(values.data(),
                                                     static_cast<Eigen::Index>(rows),
                                                     static_cast<Eigen::Index>(cols));
  return StateTrajectory(std::move(states), dt, spinup, path.filename().string());
}

StateTrajectory load_raw(const std::filesystem::path& path, std::optional<double> dt_override) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  require(in.gcount() == 4 && std::equal(magic, magic + 4, kRawMagic), ErrorCode::kParse,
          path.string() + " is not a CTRJ trajectory");
  const std::uint32_t rows = io::read_u32(in);
  const std::uint32_t cols = io::read_u32(in);
  (void)io::read_u32(in);  // reserved
  double dt = io::read_f64(in);
  require(rows >= 2 && cols >= 1, ErrorCode::kParse, path.string() + " has an invalid shape");
  StateMatrix states(rows, cols);
  io::read_block(in, std::span<double>(states.data(), static_cast<std::size_t>(states.size())));
  require(states.allFinite(), ErrorCode::kNonFinite, path.string() + " has non-finite entries");
  if (dt_override) dt = *dt_override;
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::kMissingDt,
          path.string() + " stores no valid dt");
  double spinup = 0.0;
  if (std::filesystem::exists(sidecar_path(path))) {
    try {
      auto meta = nlohmann::json::parse(io::read_text(sidecar_path(path)));
      if (meta.contains("spinup") && meta["spinup"].is_number()) spinup = meta["spinup"];
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, e.what());
    }
  }
  return StateTrajectory(std::move(states), dt, spinup, path.filename().string());
}

}  // namespace

StateTrajectory load_trajectory(const std::filesystem::path& path, TrajectoryFormat format,
                                std::optional<double> dt_override) {
  require(std::filesystem::exists(path), ErrorCode::kIo, path.string() + " does not exist");
  if (dt_override) {
    require(std::isfinite(*dt_override) && *dt_override > 0.0, ErrorCode::kInput,
            "dt override must be positive");
  }
  return format == TrajectoryFormat::kCsv ? load_csv(path, dt_override)
                                          : load_raw(path, dt_override);
}

void save_trajectory(const StateTrajectory& trajectory, const std::filesystem::path& path,
                     TrajectoryFormat format) {
  const StateMatrix& x = trajectory.states();
  if (format == TrajectoryFormat::kCsv) {
    std::string text;
    text.reserve(static_cast<std::size_t>(x.size()) * 24);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (c > 0) text += ',';
        text += io::format_double(x(r, c));
      }
      text += '\n';
    }
    io::write_text(path, text);
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
    out.write(kRawMagic, 4);
    io::write_u32(out, static_cast<std::uint32_t>(x.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(x.cols()));
    io::write_u32(out, 0);
    io::write_f64(out, trajectory.dt());
    io::write_block(out, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
  }
  nlohmann::json meta = {{"dt", trajectory.dt()},
                         {"spinup", trajectory.spinup()},
                         {"source", trajectory.source()}};
  io::write_text(sidecar_path(path), meta.dump(2) + "\n");
}

}  // namespace coherence
