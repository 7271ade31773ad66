#include "qaf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qaf/errors.hpp"
#include "qaf/io.hpp"

namespace qaf {
namespace {

constexpr double kTimeTolerance = 1e-9;
constexpr std::uint64_t kQueryStream = 0x7171;

std::vector<std::uint64_t> parse_u64_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  text = io::trim(text);
  if (text == "-" || text.empty()) return out;
  for (auto part : io::split(text, ',')) out.push_back(io::parse_u64(part));
  return out;
}

std::string join_u64(std::span<const std::uint64_t> v) {
  if (v.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

double sensor_time(std::size_t j, std::size_t m, double t_max_input) {
  if (m < 2) return 0.0;
  return t_max_input * static_cast<double>(j) / static_cast<double>(m - 1);
}

PaddedInput build_padded_input(std::span<const double> observed, double grid_step,
                               double observed_until, std::size_t m, double t_max_input) {
  if (observed.empty()) throw SegmentationError("no observed samples");
  if (m == 0) throw ContractError("sensor count must be >= 1");
  if (observed_until > t_max_input + kTimeTolerance) {
    throw SegmentationError("observation ends at " + std::to_string(observed_until) +
                            " s, beyond the input window of " + std::to_string(t_max_input) + " s");
  }
  PaddedInput u;
  u.values.assign(m, 0.0);
  const double last_time = static_cast<double>(observed.size() - 1) * grid_step;
  std::size_t j = 0;
  for (; j < m; ++j) {
    const double tau = sensor_time(j, m, t_max_input);
    if (tau > observed_until + kTimeTolerance) break;
    if (tau >= last_time) {
      u.values[j] = observed.back();
      continue;
    }
    const double x = tau / grid_step;
    const auto i0 = static_cast<std::size_t>(std::floor(x));
    const double w = x - static_cast<double>(i0);
    u.values[j] = i0 + 1 < observed.size() ? (1.0 - w) * observed[i0] + w * observed[i0 + 1]
                                           : observed[i0];
  }
  u.valid_len = j;
  return u;
}

PaddedInput make_padded_input(const Trajectory& traj, double dt_obs, std::size_t m,
                              double t_max_input) {
  Segments seg = segment(traj, dt_obs);
  return build_padded_input(seg.u, traj.grid_step, seg.observed_until, m, t_max_input);
}

TripletDataset assemble_triplets(std::span<const Trajectory> trajs, const AssembleOptions& opts) {
  if (trajs.empty()) throw ContractError("assemble_triplets needs at least one trajectory");
  if (opts.m == 0 || opts.n_loc == 0) throw ContractError("m and n_loc must be >= 1");

  TripletDataset ds;
  ds.meta.m = opts.m;
  ds.meta.n_loc = opts.n_loc;
  ds.meta.dt_obs = opts.dt_obs;
  ds.meta.grid_step = trajs.front().grid_step;
  ds.meta.seed = opts.seed;
  ds.meta.t_max_input = opts.t_max_input;
  ds.meta.horizon = trajs.front().horizon();
  ds.meta.split = opts.split;
  ds.inputs.reserve(trajs.size());
  ds.triplets.reserve(trajs.size() * opts.n_loc);

  for (const Trajectory& traj : trajs) {
    if (traj.grid_step != ds.meta.grid_step) {
      throw ContractError("trajectories use different grid steps");
    }
    Segments seg = segment(traj, opts.dt_obs);
    const std::size_t input_id = ds.inputs.size();
    ds.inputs.push_back(
        build_padded_input(seg.u, traj.grid_step, seg.observed_until, opts.m, opts.t_max_input));
    ds.input_bus.push_back(traj.scenario.bus_id);
    ds.input_traj.push_back(traj.index);
    if (std::find(ds.meta.buses.begin(), ds.meta.buses.end(), traj.scenario.bus_id) ==
        ds.meta.buses.end()) {
      ds.meta.buses.push_back(traj.scenario.bus_id);
    }

    Rng rng = make_rng(opts.seed, {traj.scenario.bus_id, static_cast<std::uint64_t>(opts.split),
                                   traj.index, kQueryStream});
    const std::size_t available = traj.values.size() - seg.boundary;
    std::vector<std::size_t> picks;
    if (available >= opts.n_loc) {
      // Partial Fisher-Yates over the post-observation grid indices.
      std::vector<std::size_t> pool(available);
      std::iota(pool.begin(), pool.end(), seg.boundary);
      for (std::size_t k = 0; k < opts.n_loc; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, available - 1);
        std::swap(pool[k], pool[pick(rng)]);
        picks.push_back(pool[k]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> pick(seg.boundary, traj.values.size() - 1);
      for (std::size_t k = 0; k < opts.n_loc; ++k) picks.push_back(pick(rng));
    }
    for (std::size_t idx : picks) {
      ds.triplets.push_back({input_id, traj.time(idx), traj.values[idx]});
    }
  }
  return ds;
}

// --- dataset file ----------------------------------------------------------

std::string serialize_dataset(const TripletDataset& ds) {
  const auto& m = ds.meta;
  std::string out = "qaf-dataset 1\n";
  out += "m " + std::to_string(m.m) + "\n";
  out += "n_loc " + std::to_string(m.n_loc) + "\n";
  out += "dt_obs " + io::format_double(m.dt_obs) + "\n";
  out += "grid_step " + io::format_double(m.grid_step) + "\n";
  out += "seed " + std::to_string(m.seed) + "\n";
  out += "t_max_input " + io::format_double(m.t_max_input) + "\n";
  out += "horizon " + io::format_double(m.horizon) + "\n";
  out += std::string("split ") + to_string(m.split) + "\n";
  out += "buses " + join_u64(m.buses) + "\n";
  out += "inputs " + std::to_string(ds.inputs.size()) + "\n";
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) {
    const PaddedInput& u = ds.inputs[i];
    out += "input " + std::to_string(ds.input_bus[i]) + " " + std::to_string(ds.input_traj[i]) +
           " " + std::to_string(u.valid_len) + " " +
           io::join_doubles(std::span<const double>(u.values.data(), u.valid_len)) + "\n";
  }
  out += "triplets " + std::to_string(ds.triplets.size()) + "\n";
  for (const Triplet& t : ds.triplets) {
    out += std::to_string(t.input) + " " + io::format_double(t.t) + " " +
           io::format_double(t.target) + "\n";
  }
  out += "end\n";
  return out;
}

TripletDataset parse_dataset(std::string_view text, const std::string& source) {
  io::LineReader in(text, source);
  if (in.next() != "qaf-dataset 1") in.fail("not a qaf dataset (or unsupported version)");
  TripletDataset ds;
  auto& m = ds.meta;
  m.m = io::parse_size(in.expect("m"));
  m.n_loc = io::parse_size(in.expect("n_loc"));
  m.dt_obs = io::parse_double(in.expect("dt_obs"));
  m.grid_step = io::parse_double(in.expect("grid_step"));
  m.seed = io::parse_u64(in.expect("seed"));
  m.t_max_input = io::parse_double(in.expect("t_max_input"));
  m.horizon = io::parse_double(in.expect("horizon"));
  m.split = parse_split(io::trim(in.expect("split")));
  m.buses = parse_u64_list(in.expect("buses"));

  const std::size_t n_inputs = io::parse_size(in.expect("inputs"));
  ds.inputs.reserve(n_inputs);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    auto fields = io::split(in.expect("input"), ' ');
    if (fields.size() < 3) in.fail("truncated input record");
    const std::size_t valid = io::parse_size(fields[2]);
    if (valid == 0 || valid > m.m || fields.size() != 3 + valid) in.fail("bad input record length");
    PaddedInput u;
    u.values.assign(m.m, 0.0);
    u.valid_len = valid;
    for (std::size_t k = 0; k < valid; ++k) u.values[k] = io::parse_double(fields[3 + k]);
    ds.input_bus.push_back(io::parse_u64(fields[0]));
    ds.input_traj.push_back(io::parse_size(fields[1]));
    ds.inputs.push_back(std::move(u));
  }
  const std::size_t n_triplets = io::parse_size(in.expect("triplets"));
  ds.triplets.reserve(n_triplets);
  for (std::size_t i = 0; i < n_triplets; ++i) {
    auto fields = io::split(in.next(), ' ');
    if (fields.size() != 3) in.fail("triplet record needs 3 fields");
    Triplet t{io::parse_size(fields[0]), io::parse_double(fields[1]), io::parse_double(fields[2])};
    if (t.input >= ds.inputs.size()) in.fail("triplet refers to a missing input");
    ds.triplets.push_back(t);
  }
  if (in.next() != "end") in.fail("missing end marker");
  return ds;
}

void save_dataset(const TripletDataset& ds, const std::filesystem::path& path) {
  io::write_file(path, serialize_dataset(ds));
}

TripletDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path), path.string());
}

// --- trajectory file -------------------------------------------------------

std::string serialize_trajectories(const TrajectorySet& set) {
  std::string out = "qaf-trajectories 1\n";
  out += "grid_step " + io::format_double(set.grid_step) + "\n";
  out += "horizon " + io::format_double(set.horizon) + "\n";
  out += "seed " + std::to_string(set.seed) + "\n";
  out += std::string("split ") + to_string(set.split) + "\n";
  out += "count " + std::to_string(set.trajectories.size()) + "\n";
  for (const Trajectory& t : set.trajectories) {
    const GridScenario& s = t.scenario;
    const double fields[] = {s.load_scale, s.fault_depth, s.t_f,     s.t_cl,        s.damping,
                             s.osc_freq,   s.v_pre,       s.settle_ratio, s.recovery};
    out += "traj " + std::to_string(s.bus_id) + " " + std::to_string(t.index) + " " +
           io::join_doubles(fields) + " " + (s.stable ? "1" : "0") + " " +
           std::to_string(t.values.size()) + " " + io::join_doubles(t.values) + "\n";
  }
  out += "end\n";
  return out;
}

TrajectorySet parse_trajectories(std::string_view text, const std::string& source) {
  io::LineReader in(text, source);
  if (in.next() != "qaf-trajectories 1") in.fail("not a qaf trajectory file");
  TrajectorySet set;
  set.grid_step = io::parse_double(in.expect("grid_step"));
  set.horizon = io::parse_double(in.expect("horizon"));
  set.seed = io::parse_u64(in.expect("seed"));
  set.split = parse_split(io::trim(in.expect("split")));
  const std::size_t count = io::parse_size(in.expect("count"));
  set.trajectories.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto f = io::split(in.expect("traj"), ' ');
    if (f.size() < 13) in.fail("truncated trajectory record");
    Trajectory t;
    GridScenario& s = t.scenario;
    s.bus_id = io::parse_u64(f[0]);
    t.index = io::parse_size(f[1]);
    s.load_scale = io::parse_double(f[2]);
    s.fault_depth = io::parse_double(f[3]);
    s.t_f = io::parse_double(f[4]);
    s.t_cl = io::parse_double(f[5]);
    s.damping = io::parse_double(f[6]);
    s.osc_freq = io::parse_double(f[7]);
    s.v_pre = io::parse_double(f[8]);
    s.settle_ratio = io::parse_double(f[9]);
    s.recovery = io::parse_double(f[10]);
    s.stable = f[11] == "1";
    const std::size_t n = io::parse_size(f[12]);
    if (f.size() != 13 + n) in.fail("trajectory value count mismatch");
    t.grid_step = set.grid_step;
    t.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) t.values.push_back(io::parse_double(f[13 + k]));
    set.trajectories.push_back(std::move(t));
  }
  if (in.next() != "end") in.fail("missing end marker");
  return set;
}

void save_trajectories(const TrajectorySet& set, const std::filesystem::path& path) {
  io::write_file(path, serialize_trajectories(set));
}

TrajectorySet load_trajectories(const std::filesystem::path& path) {
  return parse_trajectories(io::read_file(path), path.string());
}

// --- observed prefix ---------------------------------------------------------

ObservedTrajectory observe(const Trajectory& traj, double dt_obs) {
  Segments seg = segment(traj, dt_obs);
  return {traj.grid_step, traj.scenario.t_cl, dt_obs, std::move(seg.u)};
}

std::string serialize_observed(const ObservedTrajectory& obs) {
  std::string out = "qaf-observed 1\n";
  out += "grid_step " + io::format_double(obs.grid_step) + "\n";
  out += "t_cl " + io::format_double(obs.t_cl) + "\n";
  out += "dt_obs " + io::format_double(obs.dt_obs) + "\n";
  out += "values " + std::to_string(obs.values.size()) + " " + io::join_doubles(obs.values) + "\n";
  out += "end\n";
  return out;
}

ObservedTrajectory parse_observed(std::string_view text, const std::string& source) {
  io::LineReader in(text, source);
  if (in.next() != "qaf-observed 1") in.fail("not a qaf observed-trajectory file");
  ObservedTrajectory obs;
  obs.grid_step = io::parse_double(in.expect("grid_step"));
  obs.t_cl = io::parse_double(in.expect("t_cl"));
  obs.dt_obs = io::parse_double(in.expect("dt_obs"));
  auto f = io::split(in.expect("values"), ' ');
  if (f.empty() || f.size() != 1 + io::parse_size(f[0])) in.fail("value count mismatch");
  for (std::size_t k = 1; k < f.size(); ++k) obs.values.push_back(io::parse_double(f[k]));
  if (obs.values.empty()) in.fail("no observed values");
  if (in.next() != "end") in.fail("missing end marker");
  return obs;
}

void save_observed(const ObservedTrajectory& obs, const std::filesystem::path& path) {
  io::write_file(path, serialize_observed(obs));
}

ObservedTrajectory load_observed(const std::filesystem::path& path) {
  return parse_observed(io::read_file(path), path.string());
}

}  // namespace qaf
