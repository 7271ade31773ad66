#include "qaf/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "qaf/errors.hpp"
#include "qaf/rng.hpp"

namespace qaf {
namespace {

constexpr std::uint64_t kSplitStream = 0xF1;
constexpr std::uint64_t kEpochStream = 0xF2;

}  // namespace

void FineTuneConfig::validate() const {
  if (patience < 1) throw ConfigError("finetune.patience must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("finetune.val_fraction must lie in (0, 1)");
  }
  if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw ConfigError("finetune lr must be > 0");
}

bool EarlyStopper::observe(double loss) {
  const std::size_t index = seen_++;
  if (loss < best_) {
    best_ = loss;
    best_index_ = index;
    bad_ = 0;
    return true;
  }
  ++bad_;
  return false;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_inputs(
    std::size_t n_inputs, double val_fraction, std::uint64_t seed) {
  if (n_inputs < 2) throw ContractError("fine-tuning needs at least two target trajectories");
  std::vector<std::size_t> order(n_inputs);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, {kSplitStream});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n_inputs)));
  n_val = std::clamp<std::size_t>(n_val, 1, n_inputs - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(val)};
}

FineTuneResult finetune(const QafModel& base, const TripletDataset& target,
                        const FineTuneConfig& cfg, const ValLossHook& val_hook) {
  cfg.validate();
  if (target.triplets.empty()) throw ContractError("target dataset is empty");
  if (target.meta.m != base.config().m) {
    throw ContractError("target dataset sensor count " + std::to_string(target.meta.m) +
                        " does not match model m = " + std::to_string(base.config().m));
  }

  FineTuneResult result;
  std::tie(result.train_inputs, result.val_inputs) =
      split_inputs(target.inputs.size(), cfg.val_fraction, cfg.seed);

  std::vector<bool> is_val(target.inputs.size(), false);
  for (std::size_t i : result.val_inputs) is_val[i] = true;
  std::vector<Triplet> train;
  std::vector<Triplet> val;
  for (const Triplet& t : target.triplets) (is_val[t.input] ? val : train).push_back(t);
  if (train.empty() || val.empty()) throw ContractError("train/validation split left a side empty");

  QafModel current = base;
  AdamState adam(cfg.adam, current.params());
  EarlyStopper stopper(cfg.patience);
  result.model = base;

  auto val_loss = [&](std::size_t epoch) {
    return val_hook ? val_hook(epoch, current) : batch_loss(current, target.view(val));
  };

  const double base_val = val_loss(0);
  stopper.observe(base_val);
  result.history.push_back({0, batch_loss(current, target.view(train)), base_val, true});

  Rng rng = make_rng(cfg.seed, {kEpochStream});
  const std::size_t batch = cfg.batch_size == 0 ? train.size() : cfg.batch_size;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t len = std::min(batch, train.size() - start);
      LossGradient lg = batch_loss_gradient(
          current, target.view(std::span<const Triplet>(train.data() + start, len)));
      if (!std::isfinite(lg.loss)) {
        throw TrainingError("non-finite fine-tuning loss in epoch " + std::to_string(epoch),
                            TrainingError::npos, step);
      }
      adam.update(current.params(), lg.grads);
      loss_sum += lg.loss;
      ++batches;
      ++step;
    }
    const double v = val_loss(epoch);
    const bool improved = stopper.observe(v);
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), v, improved});
    if (improved) result.model = current;
    if (stopper.should_stop()) {
      result.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  result.best_epoch = stopper.best_index();
  result.best_val_loss = stopper.best();
  return result;
}

}  // namespace qaf
