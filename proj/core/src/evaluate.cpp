#include "qaf/evaluate.hpp"

#include <algorithm>
#include <future>

#include "qaf/dataset.hpp"
#include "qaf/errors.hpp"
#include "qaf/io.hpp"

namespace qaf {
namespace {

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a == 0) throw ContractError("interval metrics need at least one target");
  if (a != b || a != c) {
    throw ContractError("targets, lowers and uppers differ in length (" + std::to_string(a) + ", " +
                        std::to_string(b) + ", " + std::to_string(c) + ")");
  }
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double picp(std::span<const double> targets, std::span<const double> lowers,
            std::span<const double> uppers) {
  check_lengths(targets.size(), lowers.size(), uppers.size());
  std::size_t inside = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (lowers[i] <= targets[i] && targets[i] <= uppers[i]) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(targets.size());
}

double pinaw(std::span<const double> targets, std::span<const double> lowers,
             std::span<const double> uppers) {
  check_lengths(targets.size(), lowers.size(), uppers.size());
  const auto [mn, mx] = std::minmax_element(targets.begin(), targets.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) throw DegenerateRangeError("targets are constant; PINAW is undefined");
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) sum += uppers[i] - lowers[i];
  return sum / static_cast<double>(targets.size()) / range;
}

double crossing_rate(std::span<const double> raw_lowers, std::span<const double> raw_uppers) {
  if (raw_lowers.size() != raw_uppers.size()) throw ContractError("bound lengths differ");
  if (raw_lowers.empty()) return 0.0;
  std::size_t crossed = 0;
  for (std::size_t i = 0; i < raw_lowers.size(); ++i) {
    if (raw_lowers[i] > raw_uppers[i]) ++crossed;
  }
  return static_cast<double>(crossed) / static_cast<double>(raw_lowers.size());
}

IntervalReport build_report(std::span<const TrajectoryIntervals> trajectories) {
  if (trajectories.empty()) throw ContractError("report needs at least one trajectory");
  IntervalReport r;
  std::vector<double> picps;
  std::vector<double> pinaws;
  std::vector<double> crossings;
  for (const auto& ti : trajectories) {
    TrajectoryMetrics m;
    m.bus_id = ti.bus_id;
    m.index = ti.index;
    m.points = ti.targets.size();
    m.picp = picp(ti.targets, ti.lo, ti.hi);
    m.pinaw = pinaw(ti.targets, ti.lo, ti.hi);
    m.crossing_rate = crossing_rate(ti.lo_raw, ti.hi_raw);
    picps.push_back(m.picp);
    pinaws.push_back(m.pinaw);
    crossings.push_back(m.crossing_rate);
    r.rows.push_back(m);
  }
  r.mean_picp = mean_of(picps);
  r.mean_pinaw = mean_of(pinaws);
  r.mean_crossing_rate = mean_of(crossings);
  return r;
}

TrajectoryIntervals trajectory_intervals(const QafModel& model, const CalibrationResult* calib,
                                         const Trajectory& traj, double dt_obs) {
  const ModelConfig& cfg = model.config();
  const Segments seg = segment(traj, dt_obs);
  std::vector<PaddedInput> inputs{
      build_padded_input(seg.u, traj.grid_step, seg.observed_until, cfg.m, cfg.t_max_input)};

  TrajectoryIntervals ti;
  ti.bus_id = traj.scenario.bus_id;
  ti.index = traj.index;
  std::vector<Triplet> queries;
  for (std::size_t i = seg.boundary; i < traj.values.size(); ++i) {
    queries.push_back({0, traj.time(i), traj.values[i]});
    ti.times.push_back(traj.time(i));
    ti.targets.push_back(traj.values[i]);
  }
  const std::vector<QuantilePair> q = predict_batch(model, {inputs, queries});
  const double q_hat = calib != nullptr ? calib->q_hat : 0.0;
  for (const QuantilePair& p : q) {
    ti.lo_raw.push_back(p.lo);
    ti.hi_raw.push_back(p.hi);
    const Interval iv = inference_interval(p.lo, p.hi, q_hat);
    ti.lo.push_back(iv.lo);
    ti.hi.push_back(iv.hi);
  }
  return ti;
}

IntervalReport evaluate_model(const QafModel& model, const CalibrationResult* calib,
                              std::span<const Trajectory> test, const EvalOptions& opts) {
  if (test.empty()) throw ContractError("no test trajectories");
  std::vector<TrajectoryIntervals> all(test.size());
  const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, test.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < test.size(); ++i) {
      all[i] = trajectory_intervals(model, calib, test[i], opts.dt_obs);
    }
  } else {
    std::vector<std::future<void>> tasks;
    for (std::size_t w = 0; w < workers; ++w) {
      tasks.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < test.size(); i += workers) {
          all[i] = trajectory_intervals(model, calib, test[i], opts.dt_obs);
        }
      }));
    }
    for (auto& t : tasks) t.get();
  }
  IntervalReport r = build_report(all);
  r.stage = opts.stage;
  r.calibrated = calib != nullptr;
  r.alpha = calib != nullptr ? calib->alpha : model.config().alpha;
  r.q_hat = calib != nullptr ? calib->q_hat : 0.0;
  r.dt_obs = opts.dt_obs;
  r.dataset_size = opts.dataset_size;
  return r;
}

std::string report_csv(const IntervalReport& r) {
  std::string out = "# qafdon interval report\n";
  out += "# stage " + r.stage + "\n";
  out += std::string("# calibrated ") + (r.calibrated ? "1" : "0") + "\n";
  out += "# alpha " + io::format_double(r.alpha) + "\n";
  out += "# q_hat " + io::format_double(r.q_hat) + "\n";
  out += "# dt_obs " + io::format_double(r.dt_obs) + "\n";
  out += "# dataset_size " + std::to_string(r.dataset_size) + "\n";
  out += "# trajectories " + std::to_string(r.rows.size()) + "\n";
  out += "# pinaw_range per-trajectory true min/max\n";
  out += "# intervals order-fixed (min, max) of the raw heads\n";
  out += "bus,index,points,picp,pinaw,crossing_rate\n";
  for (const auto& m : r.rows) {
    out += std::to_string(m.bus_id) + "," + std::to_string(m.index) + "," +
           std::to_string(m.points) + "," + io::format_double(m.picp) + "," +
           io::format_double(m.pinaw) + "," + io::format_double(m.crossing_rate) + "\n";
  }
  out += "mean,," + std::to_string(r.rows.size()) + "," + io::format_double(r.mean_picp) + "," +
         io::format_double(r.mean_pinaw) + "," + io::format_double(r.mean_crossing_rate) + "\n";
  return out;
}

std::string plot_csv(const TrajectoryIntervals& ti) {
  std::string out = "# bus " + std::to_string(ti.bus_id) + " index " + std::to_string(ti.index) +
                    "\nt,truth,lo_raw,hi_raw,lo_cal,hi_cal\n";
  for (std::size_t i = 0; i < ti.times.size(); ++i) {
    out += io::format_double(ti.times[i]) + "," + io::format_double(ti.targets[i]) + "," +
           io::format_double(ti.lo_raw[i]) + "," + io::format_double(ti.hi_raw[i]) + "," +
           io::format_double(ti.lo[i]) + "," + io::format_double(ti.hi[i]) + "\n";
  }
  return out;
}

std::vector<SweepCell> sweep(std::span<const double> dt_obs, std::span<const std::size_t> sizes,
                             std::span<const std::string> stages, const CellEvaluator& eval) {
  std::vector<SweepCell> cells;
  cells.reserve(dt_obs.size() * sizes.size() * stages.size());
  for (double dt : dt_obs) {
    for (std::size_t n : sizes) {
      for (const std::string& stage : stages) {
        SweepCell cell{dt, n, stage, false, 0.0, 0.0};
        std::optional<IntervalReport> r;
        try {
          r = eval(dt, n, stage);
        } catch (const FormatError&) {
          r.reset();
        } catch (const ArtifactError&) {
          r.reset();
        }
        if (r) {
          cell.present = true;
          cell.mean_picp = r->mean_picp;
          cell.mean_pinaw = r->mean_pinaw;
        }
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

std::string sweep_csv(std::span<const SweepCell> cells) {
  std::string out = "dt_obs,dataset_size,stage,present,mean_picp,mean_pinaw\n";
  for (const auto& c : cells) {
    out += io::format_double(c.dt_obs) + "," + std::to_string(c.dataset_size) + "," + c.stage +
           "," + (c.present ? "1" : "0") + "," +
           (c.present ? io::format_double(c.mean_picp) : std::string("")) + "," +
           (c.present ? io::format_double(c.mean_pinaw) : std::string("")) + "\n";
  }
  return out;
}

}  // namespace qaf
