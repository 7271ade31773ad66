#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qaf/model.hpp"
#include "qaf/scenario.hpp"

namespace qaf {

struct DatasetMeta {
  std::size_t m = 256;
  std::size_t n_loc = 32;
  double dt_obs = 0.5;
  double grid_step = 0.01;
  std::uint64_t seed = 0;
  double t_max_input = 2.333;
  double horizon = 8.5;
  Split split = Split::train;
  std::vector<std::uint64_t> buses;

  friend bool operator==(const DatasetMeta&, const DatasetMeta&) = default;
};

/// Triplets (u, t, G) over a shared pool of padded inputs. Each input comes
/// from one trajectory; `input_bus` / `input_traj` record where.
struct TripletDataset {
  DatasetMeta meta;
  std::vector<PaddedInput> inputs;
  std::vector<std::uint64_t> input_bus;
  std::vector<std::size_t> input_traj;
  std::vector<Triplet> triplets;

  TripletBatch view() const { return {inputs, triplets}; }
  TripletBatch view(std::span<const Triplet> subset) const { return {inputs, subset}; }

  friend bool operator==(const TripletDataset&, const TripletDataset&) = default;
};

/// Resamples observed samples (grid times i * grid_step, all <= observed_until)
/// onto m uniform sensors over [0, t_max_input]. Sensors past observed_until
/// are zero; sensors between the last observed grid point and observed_until
/// hold the last observed value, so nothing from the unobserved part leaks in.
PaddedInput build_padded_input(std::span<const double> observed, double grid_step,
                               double observed_until, std::size_t m, double t_max_input);

PaddedInput make_padded_input(const Trajectory& traj, double dt_obs, std::size_t m,
                              double t_max_input);

/// Sensor time of index j on the uniform grid over [0, t_max_input].
double sensor_time(std::size_t j, std::size_t m, double t_max_input);

struct AssembleOptions {
  double dt_obs = 0.5;
  std::size_t m = 256;
  std::size_t n_loc = 32;
  double t_max_input = 2.333;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

/// n_loc query times per trajectory, drawn uniformly from the grid points of
/// (t_cl + dt_obs, T] (without replacement when enough points exist). The
/// draw for trajectory (bus, index) uses its own stream.
TripletDataset assemble_triplets(std::span<const Trajectory> trajs, const AssembleOptions& opts);

// --- files -----------------------------------------------------------------

std::string serialize_dataset(const TripletDataset& ds);
TripletDataset parse_dataset(std::string_view text, const std::string& source = "<dataset>");
void save_dataset(const TripletDataset& ds, const std::filesystem::path& path);
TripletDataset load_dataset(const std::filesystem::path& path);

struct TrajectorySet {
  double grid_step = 0.01;
  double horizon = 8.5;
  std::uint64_t seed = 0;
  Split split = Split::train;
  std::vector<Trajectory> trajectories;

  friend bool operator==(const TrajectorySet&, const TrajectorySet&) = default;
};

std::string serialize_trajectories(const TrajectorySet& set);
TrajectorySet parse_trajectories(std::string_view text, const std::string& source = "<trajectories>");
void save_trajectories(const TrajectorySet& set, const std::filesystem::path& path);
TrajectorySet load_trajectories(const std::filesystem::path& path);

/// The observable prefix of one trajectory, as consumed by `predict`.
struct ObservedTrajectory {
  double grid_step = 0.01;
  double t_cl = 0.0;
  double dt_obs = 0.0;
  std::vector<double> values;  ///< samples at i * grid_step up to t_cl + dt_obs
};

ObservedTrajectory observe(const Trajectory& traj, double dt_obs);
std::string serialize_observed(const ObservedTrajectory& obs);
ObservedTrajectory parse_observed(std::string_view text, const std::string& source = "<observed>");
void save_observed(const ObservedTrajectory& obs, const std::filesystem::path& path);
ObservedTrajectory load_observed(const std::filesystem::path& path);

}  // namespace qaf
