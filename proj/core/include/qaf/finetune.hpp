#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "qaf/adam.hpp"
#include "qaf/dataset.hpp"
#include "qaf/model.hpp"

namespace qaf {

struct FineTuneConfig {
  std::size_t max_epochs = 60;
  std::size_t patience = 5;
  double val_fraction = 0.2;
  std::size_t batch_size = 64;  ///< 0 means full batch
  AdamOptions adam{.lr = 5e-4};
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const FineTuneConfig&, const FineTuneConfig&) = default;
};

/// Tracks the best validation loss seen so far and how many evaluations in a
/// row failed to beat it.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when `loss` strictly improves on the best so far.
  bool observe(double loss);
  bool should_stop() const noexcept { return bad_ >= patience_; }
  double best() const noexcept { return best_; }
  std::size_t best_index() const noexcept { return best_index_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t bad_ = 0;
  std::size_t best_index_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 0 is the untouched base model
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool improved = false;
};

struct FineTuneResult {
  QafModel model;  ///< parameters from the best-validation checkpoint
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> train_inputs;
  std::vector<std::size_t> val_inputs;
};

/// Replaces the validation loss of an epoch; receives the epoch number and
/// the current model. Used to script loss schedules.
using ValLossHook = std::function<double(std::size_t epoch, const QafModel&)>;

/// Local Adam fine-tuning with early stopping on mean joint pinball loss of a
/// held-out split. The split is by trajectory so validation never shares an
/// input function with training. Epoch 0 scores the base model, so a run
/// that never improves returns the base parameters unchanged.
FineTuneResult finetune(const QafModel& base, const TripletDataset& target,
                        const FineTuneConfig& cfg, const ValLossHook& val_hook = {});

/// (train, val) input ids for a dataset, as finetune() would split it.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_inputs(
    std::size_t n_inputs, double val_fraction, std::uint64_t seed);

}  // namespace qaf
