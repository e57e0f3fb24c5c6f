#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace coherence {

/// Row n holds the state x_n.
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Autonomous vector field on R^d. `evaluate(x, dx)` writes the tangent at x
/// into dx; both spans have length `dimension`.
struct VectorField {
  std::size_t dimension = 0;
  std::function<void(std::span<const double>, std::span<double>)> evaluate;
};

/// The Lorenz 63 field with the standard parameters (10, 28, 8/3).
VectorField lorenz63_field();

/// Uniformly sampled states of a flow. Immutable once constructed.
class StateTrajectory {
 public:
  StateTrajectory(StateMatrix states, double dt, double spinup = 0.0,
                  std::string source = "unknown");

  const StateMatrix& states() const noexcept { return states_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(states_.rows()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(states_.cols()); }
  double dt() const noexcept { return dt_; }
  double spinup() const noexcept { return spinup_; }
  const std::string& source() const noexcept { return source_; }

  /// Partial observation: keeps only the listed state columns.
  StateTrajectory observe(std::span<const std::size_t> columns) const;

  /// The first `count` samples.
  StateTrajectory head(std::size_t count) const;

 private:
  StateMatrix states_;
  double dt_;
  double spinup_;
  std::string source_;
};

/// Fixed-step classical RK4. Each sampling interval dt is split into
/// ceil(dt / max_substep) equal substeps; spinup is integrated with the same
/// substep and discarded, so the first returned state is the flow of x0 by
/// time spinup.
StateTrajectory integrate_generic(const VectorField& field, std::span<const double> x0,
                                  double dt, std::size_t n_samples, double spinup,
                                  std::optional<double> max_substep = std::nullopt);

/// Lorenz 63 trajectory with RK4 substep min(dt, 1e-3).
StateTrajectory integrate_l63(std::span<const double> x0, double dt, std::size_t n_samples,
                              double spinup);

inline constexpr double kL63MaxSubstep = 1e-3;

/// Points (cos(freq n dt), sin(freq n dt)) on the unit circle, n >= 1.
StateMatrix circle_states(double freq, double dt, std::size_t n_samples);

/// circle_states wrapped as a trajectory (n >= 2).
StateTrajectory circle_flow(double freq, double dt, std::size_t n_samples);

enum class TrajectoryFormat { kCsv, kRawFloat64 };

std::optional<TrajectoryFormat> parse_trajectory_format(std::string_view name);

/// CSV: one state per line, no header, dt/spinup read from "<path>.json".
/// Raw: 24-byte little-endian header (magic "CTRJ", u32 rows, u32 cols,
/// u32 reserved, f64 dt) followed by row-major float64 states.
/// `dt_override` takes precedence over any stored dt.
StateTrajectory load_trajectory(const std::filesystem::path& path, TrajectoryFormat format,
                                std::optional<double> dt_override = std::nullopt);

void save_trajectory(const StateTrajectory& trajectory, const std::filesystem::path& path,
                     TrajectoryFormat format);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace coherence
