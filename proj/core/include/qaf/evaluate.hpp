#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qaf/conformal.hpp"
#include "qaf/model.hpp"
#include "qaf/scenario.hpp"

namespace qaf {

/// Fraction of targets inside the closed interval [lo, hi].
double picp(std::span<const double> targets, std::span<const double> lowers,
            std::span<const double> uppers);

/// Mean width divided by the range of `targets`. Throws DegenerateRangeError
/// when the targets are constant.
double pinaw(std::span<const double> targets, std::span<const double> lowers,
             std::span<const double> uppers);

/// Fraction of raw pairs with lo > hi.
double crossing_rate(std::span<const double> raw_lowers, std::span<const double> raw_uppers);

/// Intervals over the dense query grid of one trajectory.
struct TrajectoryIntervals {
  std::uint64_t bus_id = 0;
  std::size_t index = 0;
  std::vector<double> times;
  std::vector<double> targets;
  std::vector<double> lo_raw;
  std::vector<double> hi_raw;
  std::vector<double> lo;  ///< order-fixed, widened by q_hat when calibrated
  std::vector<double> hi;
};

struct TrajectoryMetrics {
  std::uint64_t bus_id = 0;
  std::size_t index = 0;
  std::size_t points = 0;
  double picp = 0.0;
  double pinaw = 0.0;
  double crossing_rate = 0.0;
};

struct IntervalReport {
  std::string stage = "model";
  bool calibrated = false;
  double alpha = 0.05;
  double q_hat = 0.0;
  double dt_obs = 0.0;
  std::size_t dataset_size = 0;  ///< trajectories per bus used for training, when known
  std::vector<TrajectoryMetrics> rows;
  double mean_picp = 0.0;
  double mean_pinaw = 0.0;
  double mean_crossing_rate = 0.0;
};

/// Per-trajectory metrics and their plain means, in input order.
IntervalReport build_report(std::span<const TrajectoryIntervals> trajectories);

struct EvalOptions {
  double dt_obs = 0.5;
  std::size_t threads = 1;
  std::string stage = "model";
  std::size_t dataset_size = 0;
};

/// Queries every grid point after t_cl + dt_obs.
TrajectoryIntervals trajectory_intervals(const QafModel& model, const CalibrationResult* calib,
                                         const Trajectory& traj, double dt_obs);

/// Raw intervals when `calib` is null, conformal ones otherwise.
IntervalReport evaluate_model(const QafModel& model, const CalibrationResult* calib,
                              std::span<const Trajectory> test, const EvalOptions& opts);

std::string report_csv(const IntervalReport& report);

/// Columns t, truth, lo_raw, hi_raw, lo_cal, hi_cal for one trajectory.
/// Without calibration lo_cal/hi_cal repeat the order-fixed raw interval.
std::string plot_csv(const TrajectoryIntervals& ti);

// --- sweep -----------------------------------------------------------------

struct SweepCell {
  double dt_obs = 0.0;
  std::size_t dataset_size = 0;
  std::string stage;
  bool present = false;
  double mean_picp = 0.0;
  double mean_pinaw = 0.0;
};

/// Returns the report for one cell or nullopt when its artifacts are missing.
using CellEvaluator = std::function<std::optional<IntervalReport>(
    double dt_obs, std::size_t dataset_size, const std::string& stage)>;

/// Cells in (dt, size, stage) order; absent cells are kept and marked.
std::vector<SweepCell> sweep(std::span<const double> dt_obs, std::span<const std::size_t> sizes,
                             std::span<const std::string> stages, const CellEvaluator& eval);

std::string sweep_csv(std::span<const SweepCell> cells);

}  // namespace qaf
