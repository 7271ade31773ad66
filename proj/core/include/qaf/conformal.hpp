#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qaf/dataset.hpp"
#include "qaf/model.hpp"

namespace qaf {

/// Which triplets of a calibration set are scored.
enum class CalibrationMode {
  triplet,     ///< every triplet
  trajectory,  ///< one random triplet per trajectory, so scores are independent
};

const char* to_string(CalibrationMode mode);
CalibrationMode parse_calibration_mode(std::string_view text);

struct CalibrationResult {
  double alpha = 0.05;
  std::size_t n_cal = 0;
  std::size_t k = 0;  ///< 1-based rank of q_hat among the sorted scores
  double q_hat = 0.0;
  std::vector<double> scores;  ///< ascending
  CalibrationMode mode = CalibrationMode::triplet;
  std::string model_hash;  ///< checkpoint hash of the calibrated model

  friend bool operator==(const CalibrationResult&, const CalibrationResult&) = default;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const noexcept { return hi - lo; }
  bool contains(double y) const noexcept { return lo <= y && y <= hi; }
};

/// max(lo - y, y - hi); negative exactly when y is strictly inside [lo, hi].
double conformity_score(double lo, double hi, double y);
double score(const QafModel& model, const PaddedInput& u, double t, double target);

/// k = ceil((n + 1)(1 - alpha)).
std::size_t conformal_rank(std::size_t n, double alpha);

/// Smallest n with conformal_rank(n, alpha) <= n.
std::size_t minimum_calibration_size(double alpha);

/// q_hat is the k-th smallest score. Throws CalibrationError when k > n.
CalibrationResult calibrate_scores(std::vector<double> scores, double alpha);

CalibrationResult calibrate(const QafModel& model, const TripletBatch& cal, double alpha);

/// Calibrates on a dataset in the given mode. Trajectory mode picks one
/// triplet per input with its own stream keyed by (seed, input id).
CalibrationResult calibrate(const QafModel& model, const TripletDataset& cal, double alpha,
                            CalibrationMode mode, std::uint64_t seed = 0);

/// The triplets trajectory mode would score.
std::vector<Triplet> one_per_trajectory(const TripletDataset& cal, std::uint64_t seed);

/// (lo - q_hat, hi + q_hat) from the raw heads.
Interval calibrated_interval(const QafModel& model, const CalibrationResult& calib,
                             const PaddedInput& u, double t);

/// Inference form: the raw pair is order-fixed to (min, max) and then widened
/// by q_hat on each side. q_hat may be negative.
Interval inference_interval(double lo, double hi, double q_hat);

// --- files -----------------------------------------------------------------

/// Histogram of the sorted scores, for the calibration artifact.
struct ScoreHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::size_t> counts;
};
ScoreHistogram score_histogram(std::span<const double> sorted_scores, std::size_t bins = 20);

std::string serialize_calibration(const CalibrationResult& calib);
CalibrationResult parse_calibration(std::string_view text,
                                    const std::string& source = "<calibration>");
void save_calibration(const CalibrationResult& calib, const std::filesystem::path& path);
CalibrationResult load_calibration(const std::filesystem::path& path);

/// Throws ArtifactError unless `calib` was computed for `model`.
void require_matching_model(const CalibrationResult& calib, const QafModel& model);

}  // namespace qaf
