#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qaf/checkpoint.hpp"
#include "qaf/conformal.hpp"
#include "qaf/dataset.hpp"
#include "qaf/errors.hpp"
#include "qaf/evaluate.hpp"
#include "qaf/federated.hpp"
#include "qaf/finetune.hpp"
#include "qaf/io.hpp"
#include "qaf/run_config.hpp"

namespace qaf::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Context {
  RunConfig cfg;
  bool force = false;
  std::ostream& out;
};

// --- paths -----------------------------------------------------------------

fs::path bus_file(const fs::path& dir, std::uint64_t bus, Split split, const char* ext) {
  return dir / ("bus" + std::to_string(bus) + "_" + to_string(split) + ext);
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path s = p;
  s.replace_filename(p.stem().string() + suffix);
  return s;
}

void require_input(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ArtifactError(what + " not found: " + p.string());
}

void claim_output(const Context& ctx, const fs::path& p) {
  if (fs::exists(p) && !ctx.force) {
    throw ArtifactError(p.string() + " already exists (pass --force-overwrite to replace it)");
  }
}

void write_output(const Context& ctx, const fs::path& p, std::string_view text) {
  claim_output(ctx, p);
  io::write_file(p, text);
}

void persist_config(const Context& ctx, const fs::path& output) {
  const fs::path p = sibling(output, ".config.ini");
  io::write_file(p, serialize_run_config(ctx.cfg));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// --- gen-data --------------------------------------------------------------

struct GenOptions {
  std::vector<std::uint64_t> buses;
  std::optional<std::size_t> n_per_bus;
  std::string split = "train";
  std::string out;
};

void write_bus(Context& ctx, const fs::path& dir, std::uint64_t bus, std::size_t n, Split split) {
  const RunConfig& c = ctx.cfg;
  TrajectorySet set;
  set.grid_step = c.generator.grid_step;
  set.horizon = c.generator.horizon;
  set.seed = c.seed;
  set.split = split;
  set.trajectories = generate_bus(bus, n, c.bias_for(bus), c.generator, c.seed, split);
  const TripletDataset ds = assemble_triplets(set.trajectories, c.assemble_options(split));
  const fs::path traj = bus_file(dir, bus, split, ".traj");
  const fs::path data = bus_file(dir, bus, split, ".data");
  claim_output(ctx, traj);
  claim_output(ctx, data);
  io::write_file(traj, serialize_trajectories(set));
  io::write_file(data, serialize_dataset(ds));
  ctx.out << "bus " << bus << " " << to_string(split) << ": " << n << " trajectories, "
          << ds.triplets.size() << " triplets -> " << data.string() << "\n";
}

void gen_data(Context& ctx, const GenOptions& o) {
  const fs::path dir = o.out.empty() ? ctx.cfg.data_dir : fs::path(o.out);
  if (o.n_per_bus && *o.n_per_bus == 0) throw UsageError("--n-per-bus must be at least 1");
  if (!o.buses.empty()) {
    const Split split = parse_split(o.split);
    const std::size_t n = o.n_per_bus.value_or(ctx.cfg.n_per_bus);
    for (std::uint64_t bus : o.buses) write_bus(ctx, dir, bus, n, split);
  } else {
    if (o.n_per_bus) ctx.cfg.n_per_bus = *o.n_per_bus;
    const RunConfig& c = ctx.cfg;
    if (c.buses.empty()) throw UsageError("no neighbour buses configured (data.buses)");
    for (std::uint64_t bus : c.buses) write_bus(ctx, dir, bus, c.n_per_bus, Split::train);
    write_bus(ctx, dir, c.target_bus, c.n_target, Split::train);
    write_bus(ctx, dir, c.target_bus, c.n_cal, Split::cal);
    write_bus(ctx, dir, c.target_bus, c.n_test, Split::test);
  }
  persist_config(ctx, dir / "gen-data");
}

// --- training --------------------------------------------------------------

TripletDataset load_checked_dataset(const Context& ctx, const fs::path& p) {
  require_input(p, "dataset");
  TripletDataset ds = load_dataset(p);
  const ModelConfig m = ctx.cfg.resolved_model();
  if (ds.meta.m != m.m || ds.meta.t_max_input != m.t_max_input || ds.meta.dt_obs != ctx.cfg.dt_obs) {
    throw ContractError(p.string() + " was built for m = " + std::to_string(ds.meta.m) +
                        ", t_max_input = " + io::format_double(ds.meta.t_max_input) +
                        ", dt_obs = " + io::format_double(ds.meta.dt_obs) +
                        "; the config expects m = " + std::to_string(m.m) + ", t_max_input = " +
                        io::format_double(m.t_max_input) +
                        ", dt_obs = " + io::format_double(ctx.cfg.dt_obs));
  }
  return ds;
}

QafModel load_model(const fs::path& p) {
  require_input(p, "checkpoint");
  return load_checkpoint(p);
}

struct PretrainOptions {
  std::vector<std::string> data;
  std::string out;
  std::string sync_dir;
};

void pretrain_cmd(Context& ctx, const PretrainOptions& o) {
  const RunConfig& c = ctx.cfg;
  std::vector<fs::path> files(o.data.begin(), o.data.end());
  if (files.empty()) {
    for (std::uint64_t bus : c.buses) files.push_back(bus_file(c.data_dir, bus, Split::train, ".data"));
  }
  if (files.empty()) throw UsageError("no client datasets given");
  std::vector<TripletDataset> datasets;
  for (const auto& f : files) datasets.push_back(load_checked_dataset(ctx, f));

  const fs::path out = o.out.empty() ? c.checkpoint_dir / "pretrained.ckpt" : fs::path(o.out);
  claim_output(ctx, out);
  PretrainHooks hooks;
  if (!o.sync_dir.empty()) {
    hooks.on_sync = [&](std::size_t event, std::size_t, const QafModel& m) {
      save_checkpoint(m, fs::path(o.sync_dir) / ("sync_" + std::to_string(event) + ".ckpt"));
    };
  }
  PretrainResult r = pretrain(c.resolved_model(), c.fed, datasets, hooks);
  save_checkpoint(r.model, out);
  io::write_file(sibling(out, "_telemetry.csv"), telemetry_csv(r.telemetry));
  persist_config(ctx, out);
  ctx.out << "pretrained " << datasets.size() << " clients for " << c.fed.total_rounds
          << " rounds; averaging events " << r.sync_rounds.size() << ", parameter messages "
          << r.log.messages().size() << ", data records exchanged "
          << r.log.data_record_transfers() << "\n"
          << "checkpoint " << out.string() << " (" << checkpoint_hash(r.model) << ")\n";
}

struct FineTuneOptions {
  std::string base;
  std::string data;
  std::string out;
};

void finetune_cmd(Context& ctx, const FineTuneOptions& o) {
  const RunConfig& c = ctx.cfg;
  const fs::path base = o.base.empty() ? c.checkpoint_dir / "pretrained.ckpt" : fs::path(o.base);
  const fs::path data =
      o.data.empty() ? bus_file(c.data_dir, c.target_bus, Split::train, ".data") : fs::path(o.data);
  const fs::path out = o.out.empty() ? c.checkpoint_dir / "finetuned.ckpt" : fs::path(o.out);
  const QafModel model = load_model(base);
  const TripletDataset ds = load_checked_dataset(ctx, data);
  claim_output(ctx, out);
  FineTuneResult r = finetune(model, ds, c.finetune);
  save_checkpoint(r.model, out);
  std::string hist = "epoch,train_loss,val_loss,improved\n";
  for (const auto& e : r.history) {
    hist += std::to_string(e.epoch) + "," + io::format_double(e.train_loss) + "," +
            io::format_double(e.val_loss) + "," + (e.improved ? "1" : "0") + "\n";
  }
  io::write_file(sibling(out, "_history.csv"), hist);
  persist_config(ctx, out);
  ctx.out << "fine-tuned for " << r.history.size() - 1 << " epochs; best epoch " << r.best_epoch
          << " (val loss " << io::format_double(r.best_val_loss) << ")\n"
          << "checkpoint " << out.string() << "\n";
}

struct CalibrateOptions {
  std::string model;
  std::string data;
  std::string out;
  std::string mode;
};

void calibrate_cmd(Context& ctx, const CalibrateOptions& o) {
  const RunConfig& c = ctx.cfg;
  const fs::path model_path =
      o.model.empty() ? c.checkpoint_dir / "finetuned.ckpt" : fs::path(o.model);
  const fs::path data =
      o.data.empty() ? bus_file(c.data_dir, c.target_bus, Split::cal, ".data") : fs::path(o.data);
  fs::path out = o.out.empty() ? model_path : fs::path(o.out);
  if (o.out.empty()) out.replace_extension(".cal");
  const CalibrationMode mode = o.mode.empty() ? c.calibration_mode : parse_calibration_mode(o.mode);
  const QafModel model = load_model(model_path);
  const TripletDataset ds = load_checked_dataset(ctx, data);
  claim_output(ctx, out);
  const CalibrationResult r = calibrate(model, ds, c.alpha, mode, c.seed);
  save_calibration(r, out);
  persist_config(ctx, out);
  ctx.out << "calibrated on " << r.n_cal << " scores (" << to_string(mode) << " mode): k = " << r.k
          << ", q_hat = " << io::format_double(r.q_hat) << "\ncalibration " << out.string() << "\n";
}

// --- evaluation ------------------------------------------------------------

std::vector<Trajectory> load_test(const fs::path& p) {
  require_input(p, "trajectory file");
  return load_trajectories(p).trajectories;
}

std::optional<CalibrationResult> resolve_calibration(const fs::path& model_path,
                                                     const QafModel& model,
                                                     const std::string& given, bool required) {
  fs::path p = given;
  if (p.empty()) {
    if (!required) return std::nullopt;
    p = model_path;
    p.replace_extension(".cal");
  }
  if (!fs::exists(p)) {
    throw ArtifactError("--calibrated needs a calibration artifact, but " + p.string() +
                        " does not exist (run calibrate first)");
  }
  CalibrationResult r = load_calibration(p);
  require_matching_model(r, model);
  return r;
}

struct EvaluateOptions {
  std::string model;
  std::string calibration;
  bool calibrated = false;
  std::string trajectories;
  std::string out;
  std::string plot_dir;
  std::size_t plots = 3;
  std::string stage;
};

IntervalReport evaluate_cmd(Context& ctx, const EvaluateOptions& o) {
  const RunConfig& c = ctx.cfg;
  const fs::path model_path =
      o.model.empty() ? c.checkpoint_dir / "finetuned.ckpt" : fs::path(o.model);
  const fs::path traj = o.trajectories.empty()
                            ? bus_file(c.data_dir, c.target_bus, Split::test, ".traj")
                            : fs::path(o.trajectories);
  const QafModel model = load_model(model_path);
  const auto calib = resolve_calibration(model_path, model, o.calibration, o.calibrated);
  const std::vector<Trajectory> test = load_test(traj);

  EvalOptions eo;
  eo.dt_obs = c.dt_obs;
  eo.threads = c.threads;
  eo.stage = !o.stage.empty() ? o.stage : calib ? "conformal" : model_path.stem().string();
  eo.dataset_size = c.n_target;
  const fs::path out =
      o.out.empty() ? c.report_dir / (eo.stage + "_report.csv") : fs::path(o.out);
  claim_output(ctx, out);
  IntervalReport r = evaluate_model(model, calib ? &*calib : nullptr, test, eo);
  io::write_file(out, report_csv(r));
  if (!o.plot_dir.empty()) {
    for (std::size_t i = 0; i < std::min(o.plots, test.size()); ++i) {
      const TrajectoryIntervals ti =
          trajectory_intervals(model, calib ? &*calib : nullptr, test[i], c.dt_obs);
      io::write_file(fs::path(o.plot_dir) / (eo.stage + "_traj" + std::to_string(test[i].index) + ".csv"),
                     plot_csv(ti));
    }
  }
  persist_config(ctx, out);
  ctx.out << eo.stage << ": mean PICP " << fmt(r.mean_picp) << ", mean PINAW " << fmt(r.mean_pinaw)
          << ", crossing rate " << fmt(r.mean_crossing_rate) << " over " << r.rows.size()
          << " trajectories -> " << out.string() << "\n";
  return r;
}

struct PredictOptions {
  std::string model;
  std::string calibration;
  std::string observed;
  std::string out;
};

void predict_cmd(Context& ctx, const PredictOptions& o) {
  const RunConfig& c = ctx.cfg;
  const fs::path model_path =
      o.model.empty() ? c.checkpoint_dir / "finetuned.ckpt" : fs::path(o.model);
  const QafModel model = load_model(model_path);
  const auto calib = resolve_calibration(model_path, model, o.calibration, false);
  require_input(o.observed, "observed trajectory");
  const ObservedTrajectory obs = load_observed(o.observed);
  const ModelConfig& mc = model.config();
  std::vector<PaddedInput> inputs{build_padded_input(obs.values, obs.grid_step,
                                                     obs.t_cl + obs.dt_obs, mc.m, mc.t_max_input)};
  const auto last = static_cast<std::size_t>(std::llround(mc.horizon / obs.grid_step));
  std::vector<Triplet> queries;
  for (std::size_t i = obs.values.size(); i <= last; ++i) {
    queries.push_back({0, static_cast<double>(i) * obs.grid_step, 0.0});
  }
  if (queries.empty()) throw SegmentationError("the observation already covers the horizon");
  const std::vector<QuantilePair> q = predict_batch(model, {inputs, queries});
  const double q_hat = calib ? calib->q_hat : 0.0;
  std::string csv = std::string("# calibrated ") + (calib ? "1" : "0") + "\n# q_hat " +
                    io::format_double(q_hat) + "\nt,lo_raw,hi_raw,lo,hi\n";
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Interval iv = inference_interval(q[i].lo, q[i].hi, q_hat);
    csv += io::format_double(queries[i].t) + "," + io::format_double(q[i].lo) + "," +
           io::format_double(q[i].hi) + "," + io::format_double(iv.lo) + "," +
           io::format_double(iv.hi) + "\n";
  }
  if (o.out.empty()) {
    ctx.out << csv;
  } else {
    write_output(ctx, o.out, csv);
    ctx.out << q.size() << " interval points -> " << o.out << "\n";
  }
}

struct ObserveOptions {
  std::string trajectories;
  std::size_t index = 0;
  std::string out;
};

void observe_cmd(Context& ctx, const ObserveOptions& o) {
  const std::vector<Trajectory> all = load_test(o.trajectories);
  if (o.index >= all.size()) {
    throw UsageError("--index " + std::to_string(o.index) + " out of range (file holds " +
                     std::to_string(all.size()) + " trajectories)");
  }
  write_output(ctx, o.out, serialize_observed(observe(all[o.index], ctx.cfg.dt_obs)));
  ctx.out << "observed prefix -> " << o.out << "\n";
}

struct SweepOptions {
  std::string root;
  std::vector<double> dts;
  std::vector<std::size_t> sizes;
  std::vector<std::string> stages{"pretrained", "finetuned", "conformal"};
  std::string trajectories;
  std::string out;
};

void sweep_cmd(Context& ctx, const SweepOptions& o) {
  const std::vector<Trajectory> test = load_test(o.trajectories);
  const std::vector<double> dts = o.dts.empty() ? std::vector<double>{ctx.cfg.dt_obs} : o.dts;
  const std::vector<std::size_t> sizes =
      o.sizes.empty() ? std::vector<std::size_t>{ctx.cfg.n_target} : o.sizes;
  auto eval = [&](double dt, std::size_t n, const std::string& stage) -> std::optional<IntervalReport> {
    const fs::path cell = fs::path(o.root) / ("dt_" + io::format_double(dt)) / ("n_" + std::to_string(n));
    const bool conformal = stage == "conformal";
    const fs::path ckpt = cell / ((conformal ? std::string("finetuned") : stage) + ".ckpt");
    if (!fs::exists(ckpt)) return std::nullopt;
    const QafModel model = load_checkpoint(ckpt);
    std::optional<CalibrationResult> calib;
    if (conformal) {
      const fs::path cal = cell / "finetuned.cal";
      if (!fs::exists(cal)) return std::nullopt;
      calib = load_calibration(cal);
      require_matching_model(*calib, model);
    }
    EvalOptions eo{dt, ctx.cfg.threads, stage, n};
    return evaluate_model(model, calib ? &*calib : nullptr, test, eo);
  };
  const std::vector<SweepCell> cells = sweep(dts, sizes, o.stages, eval);
  write_output(ctx, o.out, sweep_csv(cells));
  std::size_t present = 0;
  for (const auto& cell : cells) present += cell.present ? 1 : 0;
  ctx.out << cells.size() << " sweep cells (" << present << " evaluated) -> " << o.out << "\n";
}

// --- pipeline --------------------------------------------------------------

void pipeline_cmd(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  gen_data(ctx, {});
  pretrain_cmd(ctx, {});
  finetune_cmd(ctx, {});
  calibrate_cmd(ctx, {});
  EvaluateOptions zs;
  zs.model = (c.checkpoint_dir / "pretrained.ckpt").string();
  zs.stage = "pretrained";
  const IntervalReport r0 = evaluate_cmd(ctx, zs);
  EvaluateOptions ft;
  ft.stage = "finetuned";
  const IntervalReport r1 = evaluate_cmd(ctx, ft);
  EvaluateOptions cf;
  cf.calibrated = true;
  cf.stage = "conformal";
  const IntervalReport r2 = evaluate_cmd(ctx, cf);
  std::string summary = "stage,mean_picp,mean_pinaw,mean_crossing_rate\n";
  for (const IntervalReport* r : {&r0, &r1, &r2}) {
    summary += r->stage + "," + io::format_double(r->mean_picp) + "," +
               io::format_double(r->mean_pinaw) + "," + io::format_double(r->mean_crossing_rate) + "\n";
  }
  write_output(ctx, c.report_dir / "summary.csv", summary);
}

// --- plumbing --------------------------------------------------------------

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const CalibrationError*>(&e)) return kCalibration;
  if (dynamic_cast<const TrainingError*>(&e) || dynamic_cast<const FederationError*>(&e)) {
    return kTraining;
  }
  if (dynamic_cast<const ArtifactError*>(&e)) return kArtifact;
  if (dynamic_cast<const Error*>(&e)) return kData;
  return kInternal;
}

const char* label_for(int code) {
  switch (code) {
    case kUsage: return "usage error";
    case kData: return "data error";
    case kTraining: return "training error";
    case kCalibration: return "calibration error";
    case kArtifact: return "artifact error";
    default: return "internal error";
  }
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Federated quantile operator networks with conformal calibration", "qafdon"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
  bool force = false;
  app.add_option("--config", config_path, "INI config file (default: $" + std::string(kConfigEnvVar) + ")");
  app.add_option("--set", overrides, "Override a config key, e.g. --set fed.total_rounds=100");
  app.add_option("--threads", threads, "Worker cap; 1 guarantees bit-reproducibility");
  app.add_option("--seed", seed, "Master seed");
  app.add_flag("--force-overwrite", force, "Replace existing outputs");

  std::function<void(Context&)> action;

  GenOptions gen;
  auto* g = app.add_subcommand("gen-data", "Generate surrogate trajectories and triplet datasets");
  g->add_option("--buses", gen.buses, "Bus ids (default: neighbours + target from the config)")->delimiter(',');
  g->add_option("--n-per-bus", gen.n_per_bus, "Trajectories per bus");
  g->add_option("--split", gen.split, "train, cal or test (with --buses)");
  g->add_option("--out", gen.out, "Output directory (default: paths.data_dir)");
  g->callback([&] { action = [&](Context& c) { gen_data(c, gen); }; });

  PretrainOptions pre;
  auto* p = app.add_subcommand("pretrain", "Federated pre-training over neighbour buses");
  p->add_option("--data", pre.data, "Client dataset files (default: one per configured bus)");
  p->add_option("--out", pre.out, "Output checkpoint");
  p->add_option("--sync-checkpoints", pre.sync_dir, "Directory for a checkpoint per averaging event");
  p->callback([&] { action = [&](Context& c) { pretrain_cmd(c, pre); }; });

  FineTuneOptions ft;
  auto* f = app.add_subcommand("finetune", "Fine-tune a pre-trained model on the target bus");
  f->add_option("--base", ft.base, "Pre-trained checkpoint");
  f->add_option("--data", ft.data, "Target-bus training dataset");
  f->add_option("--out", ft.out, "Output checkpoint");
  f->callback([&] { action = [&](Context& c) { finetune_cmd(c, ft); }; });

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "Split-conformal calibration");
  c->add_option("--model", cal.model, "Checkpoint to calibrate");
  c->add_option("--data", cal.data, "Calibration dataset");
  c->add_option("--out", cal.out, "Calibration file (default: checkpoint with .cal)");
  c->add_option("--mode", cal.mode, "triplet or trajectory");
  c->callback([&] { action = [&](Context& ctx) { calibrate_cmd(ctx, cal); }; });

  EvaluateOptions ev;
  auto* e = app.add_subcommand("evaluate", "PICP/PINAW report over test trajectories");
  e->add_option("--model", ev.model, "Checkpoint");
  e->add_option("--calibration", ev.calibration, "Calibration file");
  e->add_flag("--calibrated", ev.calibrated, "Require and apply the model's calibration");
  e->add_option("--trajectories", ev.trajectories, "Test trajectory file");
  e->add_option("--out", ev.out, "Report CSV");
  e->add_option("--plot-dir", ev.plot_dir, "Write per-trajectory plot data here");
  e->add_option("--plots", ev.plots, "Number of plot-data files");
  e->add_option("--stage", ev.stage, "Stage label in the report");
  e->callback([&] { action = [&](Context& ctx) { evaluate_cmd(ctx, ev); }; });

  PredictOptions pr;
  auto* d = app.add_subcommand("predict", "Interval curve for one observed trajectory");
  d->add_option("--model", pr.model, "Checkpoint");
  d->add_option("--calibration", pr.calibration, "Calibration file");
  d->add_option("--observed", pr.observed, "Observed-trajectory file")->required();
  d->add_option("--out", pr.out, "Output CSV (default: stdout)");
  d->callback([&] { action = [&](Context& ctx) { predict_cmd(ctx, pr); }; });

  ObserveOptions ob;
  auto* o = app.add_subcommand("observe", "Extract the observed prefix of a stored trajectory");
  o->add_option("--trajectories", ob.trajectories, "Trajectory file")->required();
  o->add_option("--index", ob.index, "Position in the file");
  o->add_option("--out", ob.out, "Observed-trajectory file")->required();
  o->callback([&] { action = [&](Context& ctx) { observe_cmd(ctx, ob); }; });

  SweepOptions sw;
  auto* s = app.add_subcommand("sweep", "Mean PICP/PINAW over a grid of trained artifacts");
  s->add_option("--root", sw.root, "Root holding dt_<dt>/n_<size>/ artifact cells")->required();
  s->add_option("--dt", sw.dts, "Observation windows")->delimiter(',');
  s->add_option("--sizes", sw.sizes, "Target dataset sizes")->delimiter(',');
  s->add_option("--stages", sw.stages, "pretrained, finetuned, conformal")->delimiter(',');
  s->add_option("--trajectories", sw.trajectories, "Test trajectory file")->required();
  s->add_option("--out", sw.out, "Sweep CSV")->required();
  s->callback([&] { action = [&](Context& ctx) { sweep_cmd(ctx, sw); }; });

  auto* pl = app.add_subcommand("pipeline", "gen-data, pretrain, finetune, calibrate and evaluate");
  pl->callback([&] { action = [&](Context& ctx) { pipeline_cmd(ctx); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') {
        config_path = env;
      }
    }
    if (threads) overrides.push_back("run.threads=" + std::to_string(*threads));
    if (seed) overrides.push_back("run.seed=" + std::to_string(*seed));
    Context ctx{config_path.empty() ? parse_run_config("", overrides)
                                    : load_run_config(config_path, overrides),
                force, out};
    action(ctx);
    return kOk;
  } catch (const std::exception& ex) {
    const int code = exit_code_for(ex);
    err << "qafdon: " << label_for(code) << ": " << ex.what() << "\n";
    if (const auto* ce = dynamic_cast<const CalibrationError*>(&ex)) {
      err << "qafdon: minimum calibration size for alpha is " << ce->minimum_n() << "\n";
    }
    return code;
  }
}

}  // namespace qaf::cli
