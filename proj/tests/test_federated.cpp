#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "qaf/errors.hpp"
#include "qaf/federated.hpp"
#include "qaf/finetune.hpp"
#include "support.hpp"

namespace qaf {
namespace {

using test::tiny_config;
using test::tiny_dataset;

FedConfig quick_fed(std::size_t rounds, std::size_t k) {
  FedConfig f;
  f.total_rounds = rounds;
  f.k_local = k;
  f.batch_size = 16;
  f.seed = 3;
  return f;
}

TEST(FedConfig, Validation) {
  FedConfig f;
  EXPECT_NO_THROW(f.validate());
  f.k_local = 0;
  EXPECT_THROW(f.validate(), ConfigError);
  f = {};
  f.threads = 0;
  EXPECT_THROW(f.validate(), ConfigError);
  f = {};
  f.adam.beta1 = 1.0;
  EXPECT_THROW(f.validate(), ConfigError);
  EXPECT_EQ(parse_moment_policy("reset"), MomentPolicy::reset);
  EXPECT_THROW(parse_moment_policy("average"), ConfigError);
}

TEST(Averaging, ArithmeticMean) {
  const std::vector<std::vector<double>> v{{1, 3}, {3, 5}};
  EXPECT_EQ(average_flat(v), (std::vector<double>{2, 4}));
  const std::vector<std::vector<double>> one{{0.1, -7.25, 3e10}};
  EXPECT_EQ(average_flat(one), one[0]);
  EXPECT_THROW(average_flat(std::vector<std::vector<double>>{}), FederationError);
  const std::vector<std::vector<double>> ragged{{1, 2}, {1}};
  EXPECT_THROW(average_flat(ragged), FederationError);
}

TEST(Averaging, IdenticalInputsAreBitExact) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(500);
  for (auto& v : x) v = n(rng);
  for (std::size_t clients : {2u, 3u, 6u, 7u}) {
    std::vector<std::vector<double>> vs(clients, x);
    EXPECT_EQ(average_flat(vs), x);
  }
}

TEST(Averaging, ClientsAreSynchronisedAndIdempotent) {
  const ModelConfig c = tiny_config();
  const auto d1 = tiny_dataset(1, 3, 1, c), d2 = tiny_dataset(2, 3, 1, c);
  std::vector<ClientState> clients;
  clients.emplace_back(1, QafModel(c, 1), AdamOptions{}, d1, 1);
  clients.emplace_back(2, QafModel(c, 2), AdamOptions{}, d2, 1);
  const auto mean = average_params(clients);
  EXPECT_EQ(clients[0].model.flat_params(), mean);
  EXPECT_EQ(clients[1].model.flat_params(), mean);
  const auto again = average_params(clients);
  EXPECT_EQ(again, mean);

  ModelConfig wider = c;
  wider.p = c.p + 1;
  clients.emplace_back(3, QafModel(wider, 3), AdamOptions{}, d1, 1);
  EXPECT_THROW(average_params(clients), FederationError);
}

TEST(Batches, DrawWithoutReplacement) {
  const TripletDataset ds = tiny_dataset(1, 5, 2, tiny_config(), 8);
  Rng rng = batch_stream(4, 1);
  std::vector<Triplet> out;
  for (int rep = 0; rep < 20; ++rep) {
    draw_batch(ds, 17, rng, out);
    ASSERT_EQ(out.size(), 17u);
    std::set<std::tuple<std::size_t, double>> seen;
    for (const auto& t : out) seen.insert({t.input, t.t});
    EXPECT_EQ(seen.size(), 17u);
  }
  draw_batch(ds, 0, rng, out);
  EXPECT_EQ(out, ds.triplets);
  draw_batch(ds, 1000, rng, out);
  EXPECT_EQ(out, ds.triplets);
}

TEST(LocalRound, ZeroLearningRateLeavesParamsUnchangedAfterLoss) {
  const ModelConfig c = tiny_config();
  const auto ds = tiny_dataset(1, 3, 1, c);
  ClientState client(1, QafModel(c, 4), AdamOptions{.lr = 1e-300}, ds, 1);
  const auto before = client.model.flat_params();
  local_round(client, 16, 0);
  local_round(client, 16, 1);
  const auto after = client.model.flat_params();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i], before[i], 1e-290);
}

TEST(LocalRound, NonFiniteLossCarriesRound) {
  const ModelConfig c = tiny_config();
  auto ds = tiny_dataset(1, 3, 1, c);
  ds.triplets[0].target = std::numeric_limits<double>::quiet_NaN();
  ClientState client(1, QafModel(c, 4), AdamOptions{}, ds, 1);
  try {
    local_round(client, 0, 17);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.round(), 17u);
  }
}

TEST(Pretrain, ScheduleAndMessageLog) {
  const ModelConfig c = tiny_config();
  std::vector<TripletDataset> ds{tiny_dataset(1, 3, 1, c), tiny_dataset(2, 3, 1, c),
                                 tiny_dataset(3, 3, 1, c)};
  std::vector<std::size_t> hook_events;
  PretrainHooks hooks;
  hooks.on_sync = [&](std::size_t e, std::size_t, const QafModel&) { hook_events.push_back(e); };
  const PretrainResult r = pretrain(c, quick_fed(20, 5), ds, hooks);
  EXPECT_EQ(r.sync_rounds, (std::vector<std::size_t>{4, 9, 14, 19}));
  EXPECT_EQ(hook_events, (std::vector<std::size_t>{0, 1, 2, 3}));
  EXPECT_EQ(r.log.data_record_transfers(), 0u);
  EXPECT_EQ(r.log.count(Message::Kind::param_upload), 12u);
  EXPECT_EQ(r.log.count(Message::Kind::param_broadcast), 12u);
  for (const auto& m : r.log.messages()) EXPECT_EQ(m.payload_scalars, r.model.scalar_count());
  EXPECT_EQ(r.telemetry.size(), 60u);
  std::set<std::uint64_t> buses;
  for (const auto& row : r.telemetry) buses.insert(row.bus_id);
  EXPECT_EQ(buses, (std::set<std::uint64_t>{1, 2, 3}));
}

TEST(Pretrain, TwoClientsTwoRoundsMatchHandTrace) {
  const ModelConfig c = tiny_config();
  const std::vector<TripletDataset> ds{tiny_dataset(1, 2, 1, c, 3), tiny_dataset(2, 2, 1, c, 3)};
  FedConfig fed = quick_fed(2, 2);
  fed.batch_size = 0;
  const PretrainResult r = pretrain(c, fed, ds);

  const QafModel init(c, fed.seed);
  const AdamOptions& o = fed.adam;
  std::vector<double> mean(init.scalar_count(), 0.0);
  for (const auto& d : ds) {
    QafModel model = init;
    std::vector<double> x = model.flat_params(), m(x.size(), 0.0), v(x.size(), 0.0);
    for (int t = 1; t <= 2; ++t) {
      model.set_flat_params(x);
      const auto lg = batch_loss_gradient(model, d.view());
      std::vector<double> g;
      for (const auto& gt : lg.grads) g.insert(g.end(), gt.data().begin(), gt.data().end());
      for (std::size_t i = 0; i < x.size(); ++i) {
        m[i] = o.beta1 * m[i] + (1 - o.beta1) * g[i];
        v[i] = o.beta2 * v[i] + (1 - o.beta2) * g[i] * g[i];
        const double mh = m[i] / (1 - std::pow(o.beta1, t));
        const double vh = v[i] / (1 - std::pow(o.beta2, t));
        x[i] -= o.lr * mh / (std::sqrt(vh) + o.eps);
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] += x[i] / 2.0;
  }
  const auto got = r.model.flat_params();
  ASSERT_EQ(got.size(), mean.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], mean[i], 1e-12) << i;
  EXPECT_EQ(r.sync_rounds, (std::vector<std::size_t>{1}));
}

TEST(Pretrain, PartialFinalPeriodIsSynchronised) {
  const ModelConfig c = tiny_config();
  std::vector<TripletDataset> ds{tiny_dataset(1, 2, 1, c), tiny_dataset(2, 2, 1, c)};
  EXPECT_EQ(pretrain(c, quick_fed(12, 5), ds).sync_rounds, (std::vector<std::size_t>{4, 9, 11}));
  EXPECT_EQ(pretrain(c, quick_fed(7, 7), ds).sync_rounds, (std::vector<std::size_t>{6}));
}

TEST(Pretrain, KOneWithIdenticalClientsEqualsCentralised) {
  const ModelConfig c = tiny_config();
  const auto d = tiny_dataset(4, 3, 1, c);
  for (std::size_t batch : {0u, 16u}) {
    for (MomentPolicy policy : {MomentPolicy::keep, MomentPolicy::reset}) {
      FedConfig fed = quick_fed(25, 1);
      fed.batch_size = batch;
      fed.moment_policy = policy;
      std::vector<TripletDataset> ds(3, d);
      const PretrainResult r = pretrain(c, fed, ds);
      if (policy == MomentPolicy::keep) {
        EXPECT_EQ(r.model, train_centralized(c, fed, d, 4));
      } else {
        // Resetting moments every round differs from plain Adam after step one.
        EXPECT_NE(r.model, train_centralized(c, fed, d, 4));
      }
    }
  }
}

TEST(Pretrain, ThreadCountDoesNotChangeResult) {
  const ModelConfig c = tiny_config();
  std::vector<TripletDataset> ds{tiny_dataset(1, 3, 1, c), tiny_dataset(2, 3, 1, c),
                                 tiny_dataset(3, 3, 1, c)};
  FedConfig one = quick_fed(15, 5);
  FedConfig many = one;
  many.threads = 3;
  const auto a = pretrain(c, one, ds);
  const auto b = pretrain(c, many, ds);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.telemetry.size(), b.telemetry.size());
  for (std::size_t i = 0; i < a.telemetry.size(); ++i) EXPECT_EQ(a.telemetry[i].loss, b.telemetry[i].loss);
}

TEST(Pretrain, RejectsBadInput) {
  const ModelConfig c = tiny_config();
  EXPECT_THROW(pretrain(c, quick_fed(5, 5), std::span<const TripletDataset>{}), ContractError);
  std::vector<TripletDataset> ds{tiny_dataset(1, 2, 1, c)};
  FedConfig f = quick_fed(5, 5);
  f.n_clients = 2;
  EXPECT_THROW(pretrain(c, f, ds), ConfigError);
  ModelConfig other = c;
  other.m = 32;
  EXPECT_THROW(pretrain(other, quick_fed(5, 5), ds), ContractError);
}

TEST(Pretrain, TelemetryCsv) {
  const std::vector<RoundLoss> rows{{0, 1, 0.5}, {0, 2, 0.25}};
  EXPECT_EQ(telemetry_csv(rows), "round,bus,loss\n0,1,0.5\n0,2,0.25\n");
}

// ---------------------------------------------------------------------------

TEST(EarlyStopper, TracksBestAndPatience) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.observe(3.0));
  EXPECT_TRUE(s.observe(2.0));
  EXPECT_FALSE(s.observe(2.0));
  EXPECT_FALSE(s.should_stop());
  EXPECT_FALSE(s.observe(2.5));
  EXPECT_TRUE(s.should_stop());
  EXPECT_EQ(s.best(), 2.0);
  EXPECT_EQ(s.best_index(), 1u);
}

TEST(SplitInputs, DisjointCover) {
  const auto [train, val] = split_inputs(40, 0.2, 5);
  EXPECT_EQ(val.size(), 8u);
  EXPECT_EQ(train.size(), 32u);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  EXPECT_EQ(all.size(), 40u);
  EXPECT_EQ(split_inputs(2, 0.01, 1).second.size(), 1u);
  EXPECT_EQ(split_inputs(2, 0.99, 1).first.size(), 1u);
  EXPECT_THROW(split_inputs(1, 0.2, 1), ContractError);
  EXPECT_EQ(split_inputs(40, 0.2, 5), split_inputs(40, 0.2, 5));
}

class FineTune : public ::testing::Test {
 protected:
  ModelConfig config = tiny_config();
  QafModel base{config, 6};
  TripletDataset target = tiny_dataset(18, 10, 2, config);

  FineTuneConfig cfg(std::size_t epochs, std::size_t patience) const {
    FineTuneConfig f;
    f.max_epochs = epochs;
    f.patience = patience;
    f.batch_size = 16;
    f.adam.lr = 1e-3;
    return f;
  }
};

TEST_F(FineTune, ZeroEpochsReturnsBase) {
  const auto r = finetune(base, target, cfg(0, 3));
  EXPECT_EQ(r.model, base);
  EXPECT_EQ(r.best_epoch, 0u);
  EXPECT_EQ(r.history.size(), 1u);
}

TEST_F(FineTune, RisingValidationLossStopsImmediately) {
  const auto r = finetune(base, target, cfg(20, 1),
                          [](std::size_t epoch, const QafModel&) { return 1.0 + epoch; });
  EXPECT_EQ(r.model, base);
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.history.size(), 2u);
}

TEST_F(FineTune, ImprovingScheduleRunsAllEpochsAndKeepsLast) {
  std::map<std::size_t, QafModel> seen;
  const auto r = finetune(base, target, cfg(6, 2), [&](std::size_t epoch, const QafModel& m) {
    seen[epoch] = m;
    return 10.0 - static_cast<double>(epoch);
  });
  EXPECT_FALSE(r.stopped_early);
  EXPECT_EQ(r.history.size(), 7u);
  EXPECT_EQ(r.best_epoch, 6u);
  EXPECT_EQ(r.model, seen.at(6));
  EXPECT_NE(r.model, base);
}

TEST_F(FineTune, ReturnsMinimumNotLast) {
  const std::vector<double> schedule{5, 4, 3, 3.5, 3.6, 3.7, 1.0};
  std::map<std::size_t, QafModel> seen;
  const auto r = finetune(base, target, cfg(6, 3), [&](std::size_t epoch, const QafModel& m) {
    seen[epoch] = m;
    return schedule[epoch];
  });
  EXPECT_TRUE(r.stopped_early);
  EXPECT_EQ(r.best_epoch, 2u);
  EXPECT_EQ(r.best_val_loss, 3.0);
  EXPECT_EQ(r.model, seen.at(2));
  EXPECT_EQ(r.history.size(), 6u);
}

TEST_F(FineTune, RealValidationLossDoesNotGetWorse) {
  const auto r = finetune(base, target, cfg(15, 3));
  EXPECT_LE(r.best_val_loss, r.history.front().val_loss);
  for (std::size_t i : r.val_inputs) {
    EXPECT_EQ(std::count(r.train_inputs.begin(), r.train_inputs.end(), i), 0);
  }
  EXPECT_EQ(r.model.fourier_matrix(), base.fourier_matrix());
}

TEST_F(FineTune, EmptyTargetIsContractError) {
  TripletDataset empty = target;
  empty.triplets.clear();
  EXPECT_THROW(finetune(base, empty, cfg(3, 1)), ContractError);
}

}  // namespace
}  // namespace qaf
