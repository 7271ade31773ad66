#include "qaf/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qaf/errors.hpp"

namespace qaf {
namespace {

// Grid times are i * step; allow for the rounding in that product when
// deciding which side of a stage boundary a sample falls on.
constexpr double kTimeTolerance = 1e-9;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double surrogate_voltage(const GridScenario& s, double t) {
  if (t + kTimeTolerance < s.t_f) return s.v_pre;
  if (t + kTimeTolerance < s.t_cl) return s.v_fault();
  const double tp = std::max(0.0, t - s.t_cl);
  const double zeta = s.damping;
  const double wd = s.osc_freq * std::sqrt(1.0 - zeta * zeta);
  const double v = s.v_settle() +
                   (s.v_clear() - s.v_settle()) * std::exp(-zeta * s.osc_freq * tp) *
                       std::cos(wd * tp);
  return std::clamp(v, kVoltageFloor, kVoltageCeiling);
}

}  // namespace

BusBias default_bus_bias(std::uint64_t bus_id) {
  Rng rng = make_rng(0xB1A5, {bus_id});
  BusBias b;
  b.depth_shift = uniform(rng, -0.15, 0.15);
  b.damping_shift = uniform(rng, -0.04, 0.08);
  b.freq_shift = uniform(rng, -2.0, 3.0);
  b.settle_shift = uniform(rng, -0.015, 0.015);
  b.v0_shift = uniform(rng, -0.02, 0.02);
  return b;
}

void GeneratorParams::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("generator: " + what); };
  if (!(grid_step > 0.0)) fail("grid_step must be > 0");
  if (!(horizon > grid_step)) fail("horizon must exceed grid_step");
  if (!(p_stable >= 0.0 && p_stable <= 1.0)) fail("p_stable must lie in [0, 1]");
  if (!(fault_start_min > 0.0 && fault_start_min <= fault_start_max)) fail("fault start range");
  if (!(clearing_min > 0.0 && clearing_min <= clearing_max)) fail("clearing range");
  if (!(load_min > 0.0 && load_min <= load_max)) fail("load range");
  if (!(depth_min >= 0.0 && depth_min <= depth_max && depth_max < 1.0)) fail("depth range");
  if (!(damping_min > 0.0 && damping_min <= damping_max && damping_max < 1.0)) fail("damping range");
  if (!(unstable_damping_min > -1.0 && unstable_damping_min <= 0.0)) fail("unstable damping");
  if (!(freq_min > 0.0 && freq_min <= freq_max)) fail("frequency range");
  if (!(recovery_min >= 0.0 && recovery_min <= recovery_max && recovery_max <= 1.0)) fail("recovery");
  if (!(settle_min >= 0.0 && settle_min <= settle_max)) fail("settle range");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
  if (!(fault_start_max + clearing_max < horizon)) fail("faults must clear before the horizon");
}

void GridScenario::validate() const {
  auto fail = [](const std::string& what) { throw ScenarioError("scenario: " + what); };
  if (!(t_f > 0.0 && t_f < t_cl)) fail("stage times must satisfy 0 < t_f < t_cl");
  if (!(fault_depth >= 0.0 && fault_depth < 1.0)) fail("fault_depth must lie in [0, 1)");
  if (!(osc_freq > 0.0)) fail("osc_freq must be > 0");
  if (!(damping > -1.0 && damping < 1.0)) fail("damping must lie in (-1, 1)");
  if (!(v_pre > 0.0)) fail("v_pre must be > 0");
  if (!(recovery >= 0.0 && recovery <= 1.0)) fail("recovery must lie in [0, 1]");
  if (!(settle_ratio >= 0.0 && settle_ratio < 1.0)) fail("settle_ratio must lie in [0, 1)");
}

GridScenario sample_scenario(std::uint64_t bus_id, const BusBias& bias,
                             const GeneratorParams& p, Rng& rng) {
  GridScenario s;
  s.bus_id = bus_id;
  s.load_scale = uniform(rng, p.load_min, p.load_max);
  s.t_f = uniform(rng, p.fault_start_min, p.fault_start_max);
  s.t_cl = s.t_f + uniform(rng, p.clearing_min, p.clearing_max);
  s.fault_depth = std::clamp(uniform(rng, p.depth_min, p.depth_max) + bias.depth_shift, 0.05, 0.95);
  s.v_pre = std::clamp(1.0 + 0.05 * (1.0 - s.load_scale) / 0.3 + bias.v0_shift, 0.9, 1.1);
  s.settle_ratio =
      std::max(0.0, uniform(rng, p.settle_min, p.settle_max) * s.load_scale + bias.settle_shift);
  s.recovery = uniform(rng, p.recovery_min, p.recovery_max);
  s.osc_freq = std::max(1.0, uniform(rng, p.freq_min, p.freq_max) + bias.freq_shift);
  s.stable = std::bernoulli_distribution(p.p_stable)(rng);
  if (s.stable) {
    s.damping = std::clamp(uniform(rng, p.damping_min, p.damping_max) + bias.damping_shift, 0.01, 0.95);
  } else {
    s.damping = uniform(rng, p.unstable_damping_min, 0.0);
  }
  return s;
}

std::vector<GridScenario> sample_scenarios(std::uint64_t bus_id, std::size_t n,
                                           const BusBias& bias, const GeneratorParams& params,
                                           Rng& rng) {
  if (n == 0) throw ContractError("sample_scenarios requires n >= 1");
  std::vector<GridScenario> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_scenario(bus_id, bias, params, rng));
  return out;
}

Trajectory simulate_trajectory(const GridScenario& scenario, double grid_step, double horizon,
                               Rng& rng, double noise_std) {
  scenario.validate();
  if (!(grid_step > 0.0) || !(horizon > scenario.t_cl)) {
    throw ScenarioError("horizon must extend past the clearing time");
  }
  Trajectory traj;
  traj.scenario = scenario;
  traj.grid_step = grid_step;
  const auto n = static_cast<std::size_t>(std::llround(horizon / grid_step)) + 1;
  traj.values.resize(n);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = traj.time(i);
    double v = surrogate_voltage(scenario, t);
    if (noise_std > 0.0) v = std::clamp(v + noise(rng), kVoltageFloor, kVoltageCeiling);
    traj.values[i] = v;
  }
  return traj;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::cal: return "cal";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "cal") return Split::cal;
  if (text == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(text) + "' (train|cal|test)");
}

std::vector<Trajectory> generate_bus(std::uint64_t bus_id, std::size_t n, const BusBias& bias,
                                     const GeneratorParams& params, std::uint64_t seed,
                                     Split split) {
  if (n == 0) throw ContractError("generate_bus requires n >= 1");
  params.validate();
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, {bus_id, static_cast<std::uint64_t>(split), i});
    GridScenario s = sample_scenario(bus_id, bias, params, rng);
    Trajectory t = simulate_trajectory(s, params.grid_step, params.horizon, rng, params.noise_std);
    t.index = i;
    out.push_back(std::move(t));
  }
  return out;
}

Segments segment(const Trajectory& traj, double dt_obs) {
  if (!(dt_obs >= 0.0)) throw SegmentationError("dt_obs must be >= 0");
  const double until = traj.scenario.t_cl + dt_obs;
  if (!(until < traj.horizon())) {
    throw SegmentationError("t_cl + dt_obs = " + std::to_string(until) +
                            " s leaves no post-fault samples before the horizon");
  }
  std::size_t boundary = 0;
  while (boundary < traj.values.size() && traj.time(boundary) <= until + kTimeTolerance) {
    ++boundary;
  }
  Segments seg;
  seg.boundary = boundary;
  seg.observed_until = until;
  seg.u.assign(traj.values.begin(), traj.values.begin() + static_cast<std::ptrdiff_t>(boundary));
  seg.v.assign(traj.values.begin() + static_cast<std::ptrdiff_t>(boundary), traj.values.end());
  return seg;
}

}  // namespace qaf
