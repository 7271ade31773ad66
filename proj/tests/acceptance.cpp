// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "qaf/conformal.hpp"
#include "qaf/dataset.hpp"
#include "qaf/evaluate.hpp"
#include "qaf/federated.hpp"
#include "qaf/io.hpp"
#include "qaf/model.hpp"
#include "qaf/run_config.hpp"
#include "qaf/scenario.hpp"

namespace fs = std::filesystem;
using namespace qaf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

PaddedInput random_input(std::size_t m, std::size_t valid_len, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.2);
  PaddedInput in;
  in.values.assign(m, 0.0);
  in.valid_len = valid_len;
  for (std::size_t i = 0; i < valid_len; ++i) in.values[i] = u(rng);
  return in;
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_check() {
  ModelConfig c;
  c.m = 64;
  c.token_size = 8;
  c.d = 16;
  c.p = 8;
  c.s = 8;
  c.fourier_m = 16;
  c.t_max_input = 2.0;
  c.horizon = 8.5;
  QafModel model(c, 101);
  std::mt19937_64 rng(5);
  std::vector<PaddedInput> inputs{random_input(c.m, 20, rng), random_input(c.m, 45, rng)};
  const std::vector<Triplet> ts{{0, 2.3, 0.95}, {1, 4.1, 1.02}, {0, 7.7, 0.88}, {1, 0.6, 0.4}};
  const TripletBatch batch{inputs, ts};
  const LossGradient lg = batch_loss_gradient(model, batch);

  const double h = 1e-6;
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    for (std::size_t j = 0; j < model.params()[p].size(); ++j) {
      double& w = model.params()[p][j];
      const double orig = w;
      w = orig + h;
      const double up = batch_loss(model, batch);
      w = orig - h;
      const double down = batch_loss(model, batch);
      w = orig;
      const double fd = (up - down) / (2 * h);
      const double ad = lg.grads[p][j];
      const double scale = std::max(std::abs(ad), std::abs(fd));
      // Entries whose true value is near zero are judged on FD noise level.
      const double err = std::abs(ad - fd);
      const bool ok = err <= 1e-4 * scale + 1e-8;
      if (scale > 1e-6) worst = std::max(worst, err / scale);
      bad += !ok;
      ++checked;
    }
  }
  return {bad == 0, std::to_string(checked) + " gradients, " + std::to_string(bad) +
                        " outside rel 1e-4, worst rel " + fmt("%.2e", worst)};
}

// --- 2 ---------------------------------------------------------------------

Outcome pinball_oracle() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> tau_d(0.0, 1.0), val(-3.0, 3.0);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const double tau = tau_d(rng), y = val(rng), yhat = val(rng);
    const double direct = y > yhat ? tau * (y - yhat) : (1.0 - tau) * (yhat - y);
    mismatches += pinball_loss(tau, y, yhat) != direct;
  }

  std::normal_distribution<double> nd(1.0, 0.2);
  std::vector<double> ys(200);
  for (auto& y : ys) y = nd(rng);
  std::vector<double> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front() - 0.1, hi = sorted.back() + 0.1, step = 1e-4;
  std::size_t scan_fail = 0;
  for (double tau : {0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975, 0.333}) {
    double best = lo, best_loss = INFINITY;
    for (double q = lo; q <= hi; q += step) {
      double s = 0;
      for (double y : ys) s += pinball_loss(tau, y, q);
      if (s < best_loss) best_loss = s, best = q;
    }
    // Minimisers form [y_(ceil(n tau)), y_(floor(n tau) + 1)].
    const double nt = 200.0 * tau;
    const double a = sorted[static_cast<std::size_t>(std::ceil(nt - 1e-9)) - 1];
    const double b = sorted[std::min<std::size_t>(static_cast<std::size_t>(std::floor(nt + 1e-9)), 199)];
    if (best < a - step || best > std::max(a, b) + step) ++scan_fail;
  }
  return {mismatches == 0 && scan_fail == 0,
          std::to_string(mismatches) + "/1000 formula mismatches, " + std::to_string(scan_fail) +
              "/10 grid scans off the empirical quantile"};
}

// --- 3 ---------------------------------------------------------------------

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

/// Central band of the beta-binomial law of the number of covered test points.
std::pair<std::size_t, std::size_t> beta_binomial_band(std::size_t n, double a, double b, double tail) {
  std::vector<double> pmf(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double kd = static_cast<double>(k), nd = static_cast<double>(n);
    const double log_choose = std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1);
    pmf[k] = std::exp(log_choose + log_beta(kd + a, nd - kd + b) - log_beta(a, b));
  }
  double cdf = 0;
  std::size_t lo = 0, hi = n;
  bool have_lo = false;
  for (std::size_t k = 0; k <= n; ++k) {
    cdf += pmf[k];
    if (!have_lo && cdf >= tail) lo = k, have_lo = true;
    if (cdf >= 1.0 - tail) {
      hi = k;
      break;
    }
  }
  return {lo, hi};
}

struct SharedModel {
  RunConfig run;
  QafModel model;
};

const SharedModel& shared_model() {
  static const SharedModel s = [] {
    SharedModel out;
    const ModelConfig mc = out.run.resolved_model();
    const auto trajs = generate_bus(18, 60, out.run.bias_for(18), out.run.generator, 3, Split::train);
    const TripletDataset d = assemble_triplets(trajs, out.run.assemble_options(Split::train));
    FedConfig fed = out.run.fed;
    fed.total_rounds = 300;
    fed.seed = 3;
    out.model = train_centralized(mc, fed, d, 18);
    return out;
  }();
  return s;
}

Outcome coverage_guarantee() {
  const SharedModel& sm = shared_model();
  const RunConfig& run = sm.run;
  const double alpha = 0.05;
  const std::size_t n_cal = 200, n_test = 5000;
  const std::size_t k = conformal_rank(n_cal, alpha);
  const auto [band_lo, band_hi] = beta_binomial_band(n_test, static_cast<double>(k),
                                                     static_cast<double>(n_cal + 1 - k), 0.0005);
  AssembleOptions opts = run.assemble_options(Split::cal);
  opts.n_loc = 1;

  double sum = 0;
  std::size_t out_of_band = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    opts.seed = seed;
    opts.split = Split::cal;
    const auto cal_traj = generate_bus(18, n_cal, run.bias_for(18), run.generator, seed, Split::cal);
    const TripletDataset cal = assemble_triplets(cal_traj, opts);
    const CalibrationResult cr = calibrate(sm.model, cal.view(), alpha);

    opts.split = Split::test;
    const auto test_traj = generate_bus(18, n_test, run.bias_for(18), run.generator, seed, Split::test);
    const TripletDataset test = assemble_triplets(test_traj, opts);
    const auto q = predict_batch(sm.model, test.view());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double y = test.triplets[i].target;
      hits += (q[i].lo - cr.q_hat <= y && y <= q[i].hi + cr.q_hat);
    }
    sum += static_cast<double>(hits) / static_cast<double>(n_test);
    if (hits < band_lo || hits > band_hi) {
      ++out_of_band;
      per_seed += " seed " + std::to_string(seed) + " hits " + std::to_string(hits);
    }
  }
  const double mean = sum / 20.0;
  return {mean >= 0.94 && out_of_band == 0,
          "mean coverage " + fmt("%.4f", mean) + " (>= 0.94), per-seed band [" +
              std::to_string(band_lo) + ", " + std::to_string(band_hi) + "]/5000, " +
              std::to_string(out_of_band) + " seeds outside" + per_seed};
}

// --- 4 ---------------------------------------------------------------------

Outcome conformal_arithmetic() {
  std::vector<double> scores(99);
  std::iota(scores.begin(), scores.end(), 1.0);
  const CalibrationResult cr = calibrate_scores(scores, 0.05);
  // Enumeration: smallest score whose count of scores at or below it reaches
  // ceil((n + 1)(1 - alpha)).
  const auto need = static_cast<std::size_t>(std::ceil(100 * 0.95 - 1e-9));
  double oracle = NAN;
  for (double s : scores) {
    const auto below = static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(),
                                                              [&](double v) { return v <= s; }));
    if (below >= need) {
      oracle = s;
      break;
    }
  }

  const SharedModel& sm = shared_model();
  const auto test = generate_bus(18, 25, sm.run.bias_for(18), sm.run.generator, 4, Split::test);
  CalibrationResult widen;
  widen.q_hat = 0.0123;
  double worst = 0;
  for (const auto& tr : test) {
    const auto raw = trajectory_intervals(sm.model, nullptr, tr, sm.run.dt_obs);
    const auto cal = trajectory_intervals(sm.model, &widen, tr, sm.run.dt_obs);
    const auto [mn, mx] = std::minmax_element(raw.targets.begin(), raw.targets.end());
    const double diff = pinaw(cal.targets, cal.lo, cal.hi) - pinaw(raw.targets, raw.lo, raw.hi);
    worst = std::max(worst, std::abs(diff - 2 * widen.q_hat / (*mx - *mn)));
  }
  const bool ok = cr.q_hat == 95.0 && oracle == 95.0 && worst <= 1e-12;
  return {ok, "q_hat " + fmt("%g", cr.q_hat) + " (enumeration " + fmt("%g", oracle) +
                  "), inflation identity max error " + fmt("%.2e", worst) + " over 25 trajectories"};
}

// --- 5, 6 ------------------------------------------------------------------

TripletDataset bus_dataset(const RunConfig& run, std::uint64_t bus, std::size_t n, std::uint64_t seed) {
  const auto trajs = generate_bus(bus, n, run.bias_for(bus), run.generator, seed, Split::train);
  return assemble_triplets(trajs, run.assemble_options(Split::train));
}

Outcome federated_equivalence() {
  const RunConfig run;
  const ModelConfig mc = run.resolved_model();
  const TripletDataset d = bus_dataset(run, 2, 20, 9);
  FedConfig fed = run.fed;
  fed.k_local = 1;
  fed.total_rounds = 50;
  fed.seed = 9;
  fed.threads = 1;
  const std::vector<TripletDataset> clients(3, d);
  const PretrainResult fr = pretrain(mc, fed, clients);
  const QafModel central = train_centralized(mc, fed, d, 2);
  const auto a = fr.model.flat_params(), b = central.flat_params();
  const bool identical = a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
                           return std::memcmp(&x, &y, sizeof x) == 0;
                         });
  return {identical && fr.model == central,
          std::to_string(a.size()) + " parameters, 50 rounds, " +
              (identical ? "bit-identical" : "differ")};
}

Outcome federation_schedule() {
  const RunConfig run;
  const ModelConfig mc = run.resolved_model();
  std::vector<TripletDataset> ds;
  for (std::uint64_t bus : {1, 2, 3}) ds.push_back(bus_dataset(run, bus, 10, 5));
  FedConfig fed = run.fed;
  fed.k_local = 5;
  fed.total_rounds = 20;
  fed.seed = 5;
  std::size_t hook_events = 0;
  PretrainHooks hooks;
  hooks.on_sync = [&](std::size_t, std::size_t, const QafModel&) { ++hook_events; };
  const PretrainResult r = pretrain(mc, fed, ds, hooks);
  const std::size_t events = r.sync_rounds.size();
  const std::size_t uploads = r.log.count(Message::Kind::param_upload);
  const std::size_t records = r.log.data_record_transfers();
  const bool ok = events == 4 && hook_events == 4 && uploads == 12 && records == 0;
  return {ok, std::to_string(events) + " averaging events, " + std::to_string(uploads) +
                  " parameter uploads, " + std::to_string(records) + " data-record transfers"};
}

// --- 7, 9 ------------------------------------------------------------------

struct CliRun {
  int code = 0;
  std::string err;
};

CliRun run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, err.str()};
}

std::vector<std::string> paths_under(const fs::path& root) {
  return {"--set", "paths.data_dir=" + (root / "data").string(),
          "--set", "paths.checkpoint_dir=" + (root / "checkpoints").string(),
          "--set", "paths.report_dir=" + (root / "reports").string()};
}

std::map<std::string, double> read_summary(const fs::path& p) {
  std::map<std::string, double> picp;
  const std::string text = io::read_file(p);
  for (const auto line : io::split(text, '\n')) {
    const auto f = io::split(line, ',');
    if (f.size() < 2 || f[0] == "stage") continue;
    picp[std::string(f[0])] = std::stod(std::string(f[1]));
  }
  return picp;
}

fs::path scratch_root() {
  static const fs::path root = [] {
    const fs::path p = fs::temp_directory_path() /
                       ("qafdon_acceptance_" + std::to_string(std::random_device{}()));
    fs::create_directories(p);
    return p;
  }();
  return root;
}

Outcome synthetic_reproduction() {
  double zs = 0, ft = 0, cf = 0;
  std::string per_seed;
  bool cf_each = true;
  for (int seed = 1; seed <= 5; ++seed) {
    const fs::path root = scratch_root() / ("seed" + std::to_string(seed));
    std::vector<std::string> args{"--seed", std::to_string(seed)};
    const auto paths = paths_under(root);
    args.insert(args.end(), paths.begin(), paths.end());
    args.push_back("pipeline");
    const CliRun r = run_cli(args);
    if (r.code != 0) return {false, "pipeline failed for seed " + std::to_string(seed) + ": " + r.err};
    auto s = read_summary(root / "reports" / "summary.csv");
    zs += s["pretrained"];
    ft += s["finetuned"];
    cf += s["conformal"];
    cf_each = cf_each && std::abs(s["conformal"] - 0.95) <= 0.03;
    per_seed += " [" + std::to_string(seed) + ": " + fmt("%.4f", s["pretrained"]) + " " +
                fmt("%.4f", s["finetuned"]) + " " + fmt("%.4f", s["conformal"]) + "]";
  }
  zs /= 5;
  ft /= 5;
  cf /= 5;
  const bool ok = ft > zs && std::abs(cf - 0.95) <= 0.03 && ft < 0.95;
  return {ok, "mean PICP zero-shot " + fmt("%.4f", zs) + " < fine-tuned " + fmt("%.4f", ft) +
                  " < 0.95, conformal " + fmt("%.4f", cf) + " within 0.95 +/- 0.03" +
                  (cf_each ? "" : " (not every seed)") + "; per seed (zs ft cf)" + per_seed};
}

Outcome determinism() {
  const fs::path first = scratch_root() / "seed1";
  const fs::path persisted = first / "checkpoints" / "pretrained.config.ini";
  if (!fs::exists(persisted)) return {false, "no persisted config from the seed-1 pipeline"};
  const fs::path second = scratch_root() / "rerun";
  std::vector<std::string> args{"--config", persisted.string(), "--threads", "1"};
  const auto paths = paths_under(second);
  args.insert(args.end(), paths.begin(), paths.end());
  args.push_back("pipeline");
  const CliRun r = run_cli(args);
  if (r.code != 0) return {false, "rerun failed: " + r.err};

  std::size_t compared = 0, differing = 0;
  std::string which;
  for (const auto& entry : fs::recursive_directory_iterator(first)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), first);
    // Persisted configs name their own output directories.
    if (rel.string().ends_with(".config.ini")) continue;
    ++compared;
    const fs::path other = second / rel;
    if (!fs::exists(other) || io::read_file(entry.path()) != io::read_file(other)) {
      ++differing;
      which += " " + rel.string();
    }
  }
  return {compared > 0 && differing == 0,
          std::to_string(compared) + " dataset/checkpoint/calibration/report files compared, " +
              std::to_string(differing) + " differ" + which};
}

// --- 8 ---------------------------------------------------------------------

Outcome metric_oracles() {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::size_t> len(2, 80);
  std::uniform_real_distribution<double> val(0.4, 1.2), half(0.0, 0.1), off(-0.08, 0.08), delta(1e-4, 0.2);
  std::size_t mismatches = 0, not_monotone = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = len(rng);
    std::vector<double> y(n), lo(n), hi(n);
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = val(rng);
      const double c = y[j] + off(rng), w = half(rng);
      lo[j] = c - w;
      hi[j] = c + w;
    }
    std::size_t inside = 0;
    double ymin = y[0], ymax = y[0], width = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (y[j] >= lo[j] && y[j] <= hi[j]) ++inside;
      ymin = std::min(ymin, y[j]);
      ymax = std::max(ymax, y[j]);
      width += hi[j] - lo[j];
    }
    const double picp_o = static_cast<double>(inside) / static_cast<double>(n);
    const double pinaw_o = width / static_cast<double>(n) / (ymax - ymin);
    const double p0 = picp(y, lo, hi), w0 = pinaw(y, lo, hi);
    mismatches += (p0 != picp_o) + (w0 != pinaw_o);

    const double d = delta(rng);
    std::vector<double> lo2(lo), hi2(hi);
    for (std::size_t j = 0; j < n; ++j) lo2[j] -= d, hi2[j] += d;
    not_monotone += !(picp(y, lo2, hi2) >= p0 && pinaw(y, lo2, hi2) > w0);
  }
  return {mismatches == 0 && not_monotone == 0,
          std::to_string(mismatches) + " oracle mismatches over 100 instances, " +
              std::to_string(not_monotone) + "/100 widenings not monotone"};
}

}  // namespace

int main(int argc, char** argv) {
  // Optional arguments select criteria by number.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  ::unsetenv(kConfigEnvVar);
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, gradient_check},      {2, pinball_oracle},         {3, coverage_guarantee},
      {4, conformal_arithmetic}, {5, federated_equivalence},  {6, federation_schedule},
      {7, synthetic_reproduction}, {8, metric_oracles},       {9, determinism},
  };
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s  (%.1fs)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  return failures == 0 ? 0 : 1;
}
