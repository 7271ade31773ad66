#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "qaf/rng.hpp"

namespace qaf {

/// Per-bus offsets applied on top of the shared sampling ranges. They give
/// each bus its own operating regime so a model trained on neighbours has
/// something left to adapt to on the target bus.
struct BusBias {
  double depth_shift = 0.0;    ///< added to the sampled fault depth
  double damping_shift = 0.0;  ///< added to the sampled damping ratio (stable branch)
  double freq_shift = 0.0;     ///< added to the sampled oscillation frequency [rad/s]
  double settle_shift = 0.0;   ///< added to the post-fault settling drop ratio
  double v0_shift = 0.0;       ///< added to the pre-fault voltage [p.u.]

  friend bool operator==(const BusBias&, const BusBias&) = default;
};

/// Deterministic bias for a bus id; distinct ids give distinct regimes.
BusBias default_bus_bias(std::uint64_t bus_id);

/// Sampling ranges for the surrogate three-stage generator.
struct GeneratorParams {
  double grid_step = 0.01;  ///< [s]
  double horizon = 8.5;     ///< T [s]
  double p_stable = 0.8;
  double fault_start_min = 0.5;
  double fault_start_max = 1.5;
  double clearing_min = 0.100;
  double clearing_max = 0.333;
  double load_min = 0.7;
  double load_max = 1.3;
  double depth_min = 0.3;
  double depth_max = 0.9;
  double damping_min = 0.05;
  double damping_max = 0.35;
  double unstable_damping_min = -0.04;
  double freq_min = 4.0;
  double freq_max = 10.0;
  double recovery_min = 0.6;
  double recovery_max = 0.9;
  double settle_min = 0.02;
  double settle_max = 0.08;
  double noise_std = 0.0;  ///< optional additive measurement noise [p.u.]

  /// Smallest input window that holds the longest possible observation.
  double default_t_max_input(double dt_obs) const {
    return fault_start_max + clearing_max + dt_obs;
  }

  void validate() const;

  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

/// One randomised fault. Stage times satisfy 0 < t_f < t_cl.
struct GridScenario {
  std::uint64_t bus_id = 0;
  double load_scale = 1.0;    ///< demand multiplier in [0.7, 1.3]
  double fault_depth = 0.5;   ///< relative voltage dip while the fault is on
  double t_f = 1.0;           ///< fault onset [s]
  double t_cl = 1.2;          ///< clearing instant [s]
  double damping = 0.1;       ///< zeta; <= 0 marks an unstable post-fault response
  double osc_freq = 6.0;      ///< omega [rad/s]
  double v_pre = 1.0;         ///< pre-fault voltage [p.u.]
  double settle_ratio = 0.05; ///< post-fault steady-state drop per unit of fault depth
  double recovery = 0.75;     ///< share of the dip recovered instantly at clearing
  bool stable = true;

  double v_fault() const { return v_pre * (1.0 - fault_depth); }
  double v_settle() const { return v_pre * (1.0 - settle_ratio * fault_depth); }
  double v_clear() const { return v_fault() + recovery * (v_settle() - v_fault()); }

  /// Throws ScenarioError when stage times are out of order or parameters
  /// are outside their physical ranges.
  void validate() const;

  friend bool operator==(const GridScenario&, const GridScenario&) = default;
};

inline constexpr double kVoltageFloor = 0.0;
inline constexpr double kVoltageCeiling = 1.45;

/// Voltage on a uniform time grid over [0, horizon].
struct Trajectory {
  GridScenario scenario;
  std::size_t index = 0;  ///< position within its generated set
  double grid_step = 0.01;
  std::vector<double> values;

  double time(std::size_t i) const { return static_cast<double>(i) * grid_step; }
  double horizon() const { return values.empty() ? 0.0 : time(values.size() - 1); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Draws one scenario for `bus_id`.
GridScenario sample_scenario(std::uint64_t bus_id, const BusBias& bias,
                             const GeneratorParams& params, Rng& rng);

/// Draws `n` scenarios sequentially from `rng`. n == 0 is a contract error.
std::vector<GridScenario> sample_scenarios(std::uint64_t bus_id, std::size_t n,
                                           const BusBias& bias, const GeneratorParams& params,
                                           Rng& rng);

/// Closed-form surrogate:
///   t < t_f          : v_pre
///   t_f <= t < t_cl  : v_pre (1 - depth)
///   t >= t_cl        : v_settle + (v_clear - v_settle) e^{-zeta w t'} cos(w_d t'),
///                      t' = t - t_cl, w_d = w sqrt(1 - zeta^2), clipped to [0, 1.45].
/// `rng` is consumed only when `noise_std` > 0.
Trajectory simulate_trajectory(const GridScenario& scenario, double grid_step, double horizon,
                               Rng& rng, double noise_std = 0.0);

/// Dataset partition; part of every per-trajectory stream key.
enum class Split : std::uint64_t { train = 0, cal = 1, test = 2 };

const char* to_string(Split split);
Split parse_split(std::string_view text);

/// Generates `n` trajectories for a bus. Trajectory i uses its own stream
/// derived from (seed, bus_id, split, i), so any subset can be regenerated
/// independently and parallel generation matches serial generation.
std::vector<Trajectory> generate_bus(std::uint64_t bus_id, std::size_t n, const BusBias& bias,
                                     const GeneratorParams& params, std::uint64_t seed,
                                     Split split);

/// Observed prefix u over [0, t_cl + dt_obs] and unobserved suffix v.
struct Segments {
  std::size_t boundary = 0;  ///< first index of v
  std::vector<double> u;
  std::vector<double> v;
  double observed_until = 0.0;  ///< t_cl + dt_obs
};

/// Splits at t_cl + dt_obs; the grid point at exactly that time belongs to u.
/// Throws SegmentationError when nothing would remain to predict.
Segments segment(const Trajectory& traj, double dt_obs);

}  // namespace qaf
