#include "qaf/conformal.hpp"

#include <algorithm>
#include <cmath>

#include "qaf/checkpoint.hpp"
#include "qaf/errors.hpp"
#include "qaf/io.hpp"
#include "qaf/rng.hpp"

namespace qaf {
namespace {

constexpr std::uint64_t kPickStream = 0xCA1;

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

}  // namespace

const char* to_string(CalibrationMode mode) {
  return mode == CalibrationMode::triplet ? "triplet" : "trajectory";
}

CalibrationMode parse_calibration_mode(std::string_view text) {
  if (text == "triplet") return CalibrationMode::triplet;
  if (text == "trajectory") return CalibrationMode::trajectory;
  throw ConfigError("unknown calibration mode '" + std::string(text) +
                    "' (expected triplet or trajectory)");
}

double conformity_score(double lo, double hi, double y) { return std::max(lo - y, y - hi); }

double score(const QafModel& model, const PaddedInput& u, double t, double target) {
  const QuantilePair q = predict_quantiles(model, u, t);
  return conformity_score(q.lo, q.hi, target);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  check_alpha(alpha);
  const double x = static_cast<double>(n + 1) * (1.0 - alpha);
  // (n+1)(1-alpha) is often an integer in exact arithmetic (e.g. 100 * 0.95)
  // but lands a few ulps above it in floating point.
  const double snapped = std::abs(x - std::round(x)) <= 1e-9 * std::max(1.0, x) ? std::round(x) : x;
  return static_cast<std::size_t>(std::ceil(snapped));
}

std::size_t minimum_calibration_size(double alpha) {
  check_alpha(alpha);
  std::size_t n = 1;
  while (conformal_rank(n, alpha) > n) ++n;
  return n;
}

CalibrationResult calibrate_scores(std::vector<double> scores, double alpha) {
  check_alpha(alpha);
  const std::size_t n = scores.size();
  const std::size_t minimum = minimum_calibration_size(alpha);
  if (n == 0 || conformal_rank(n, alpha) > n) {
    throw CalibrationError("need at least " + std::to_string(minimum) +
                               " calibration scores for alpha = " + io::format_double(alpha) +
                               ", got " + std::to_string(n),
                           minimum);
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw CalibrationError("non-finite calibration score", minimum);
  }
  std::sort(scores.begin(), scores.end());
  CalibrationResult r;
  r.alpha = alpha;
  r.n_cal = n;
  r.k = conformal_rank(n, alpha);
  r.q_hat = scores[r.k - 1];
  r.scores = std::move(scores);
  return r;
}

CalibrationResult calibrate(const QafModel& model, const TripletBatch& cal, double alpha) {
  std::vector<QuantilePair> q = predict_batch(model, cal);
  std::vector<double> scores(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    scores[i] = conformity_score(q[i].lo, q[i].hi, cal.triplets[i].target);
  }
  CalibrationResult r = calibrate_scores(std::move(scores), alpha);
  r.model_hash = checkpoint_hash(model);
  return r;
}

std::vector<Triplet> one_per_trajectory(const TripletDataset& cal, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_input(cal.inputs.size());
  for (std::size_t i = 0; i < cal.triplets.size(); ++i) by_input[cal.triplets[i].input].push_back(i);
  std::vector<Triplet> out;
  for (std::size_t input = 0; input < by_input.size(); ++input) {
    const auto& idx = by_input[input];
    if (idx.empty()) continue;
    Rng rng = make_rng(seed, {kPickStream, input});
    std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
    out.push_back(cal.triplets[idx[pick(rng)]]);
  }
  return out;
}

CalibrationResult calibrate(const QafModel& model, const TripletDataset& cal, double alpha,
                            CalibrationMode mode, std::uint64_t seed) {
  if (cal.triplets.empty()) {
    throw CalibrationError("calibration set is empty", minimum_calibration_size(alpha));
  }
  CalibrationResult r;
  if (mode == CalibrationMode::triplet) {
    r = calibrate(model, cal.view(), alpha);
  } else {
    const std::vector<Triplet> picked = one_per_trajectory(cal, seed);
    r = calibrate(model, cal.view(picked), alpha);
  }
  r.mode = mode;
  return r;
}

Interval calibrated_interval(const QafModel& model, const CalibrationResult& calib,
                             const PaddedInput& u, double t) {
  const QuantilePair q = predict_quantiles(model, u, t);
  return {q.lo - calib.q_hat, q.hi + calib.q_hat};
}

Interval inference_interval(double lo, double hi, double q_hat) {
  return {std::min(lo, hi) - q_hat, std::max(lo, hi) + q_hat};
}

ScoreHistogram score_histogram(std::span<const double> sorted_scores, std::size_t bins) {
  ScoreHistogram h;
  if (sorted_scores.empty() || bins == 0) return h;
  h.lo = sorted_scores.front();
  h.hi = sorted_scores.back();
  h.counts.assign(bins, 0);
  const double span = h.hi - h.lo;
  for (double s : sorted_scores) {
    std::size_t b = 0;
    if (span > 0.0) {
      b = static_cast<std::size_t>((s - h.lo) / span * static_cast<double>(bins));
      b = std::min(b, bins - 1);
    }
    ++h.counts[b];
  }
  return h;
}

std::string serialize_calibration(const CalibrationResult& c) {
  std::string out = "qaf-calibration 1\n";
  out += "alpha " + io::format_double(c.alpha) + "\n";
  out += "n_cal " + std::to_string(c.n_cal) + "\n";
  out += "k " + std::to_string(c.k) + "\n";
  out += "q_hat " + io::format_double(c.q_hat) + "\n";
  out += std::string("mode ") + to_string(c.mode) + "\n";
  out += "model_hash " + (c.model_hash.empty() ? std::string("-") : c.model_hash) + "\n";
  const ScoreHistogram h = score_histogram(c.scores);
  out += "histogram " + std::to_string(h.counts.size()) + " " + io::format_double(h.lo) + " " +
         io::format_double(h.hi) + " " + io::join_sizes(h.counts, ' ') + "\n";
  out += "scores " + std::to_string(c.scores.size()) + " " + io::join_doubles(c.scores) + "\n";
  out += "end\n";
  return out;
}

CalibrationResult parse_calibration(std::string_view text, const std::string& source) {
  io::LineReader in(text, source);
  if (in.next() != "qaf-calibration 1") in.fail("not a qaf calibration file");
  CalibrationResult c;
  c.alpha = io::parse_double(in.expect("alpha"));
  c.n_cal = io::parse_size(in.expect("n_cal"));
  c.k = io::parse_size(in.expect("k"));
  c.q_hat = io::parse_double(in.expect("q_hat"));
  c.mode = parse_calibration_mode(io::trim(in.expect("mode")));
  c.model_hash = std::string(io::trim(in.expect("model_hash")));
  if (c.model_hash == "-") c.model_hash.clear();
  in.expect("histogram");  // derived from the scores; informational only
  auto f = io::split(in.expect("scores"), ' ');
  if (f.empty() || f.size() != 1 + io::parse_size(f[0])) in.fail("score count mismatch");
  for (std::size_t i = 1; i < f.size(); ++i) c.scores.push_back(io::parse_double(f[i]));
  if (in.next() != "end") in.fail("missing end marker");
  if (c.scores.size() != c.n_cal) in.fail("n_cal does not match the stored scores");
  if (c.k == 0 || c.k > c.n_cal || c.scores[c.k - 1] != c.q_hat) {
    in.fail("q_hat is not the k-th stored score");
  }
  if (!std::is_sorted(c.scores.begin(), c.scores.end())) in.fail("scores are not sorted");
  return c;
}

void save_calibration(const CalibrationResult& calib, const std::filesystem::path& path) {
  io::write_file(path, serialize_calibration(calib));
}

CalibrationResult load_calibration(const std::filesystem::path& path) {
  return parse_calibration(io::read_file(path), path.string());
}

void require_matching_model(const CalibrationResult& calib, const QafModel& model) {
  const std::string hash = checkpoint_hash(model);
  if (calib.model_hash != hash) {
    throw ArtifactError("calibration was computed for checkpoint " +
                        (calib.model_hash.empty() ? std::string("<none>") : calib.model_hash) +
                        " but the loaded model hashes to " + hash);
  }
}

}  // namespace qaf
