#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "qaf/dataset.hpp"
#include "qaf/federated.hpp"
#include "qaf/model.hpp"
#include "qaf/run_config.hpp"
#include "qaf/tensor.hpp"

namespace {

qaf::Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  qaf::Tensor t(r, c);
  for (auto& v : t.data()) v = n(rng);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const qaf::Tensor a = random_tensor(n, n, rng), b = random_tensor(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(qaf::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64)->Arg(128);

struct Fixture {
  qaf::RunConfig run;
  qaf::TripletDataset data;

  Fixture() {
    const auto trajs = qaf::generate_bus(1, 16, qaf::default_bus_bias(1), run.generator, run.seed,
                                         qaf::Split::train);
    data = qaf::assemble_triplets(trajs, run.assemble_options(qaf::Split::train));
  }
  static const Fixture& get() {
    static const Fixture f;
    return f;
  }
};

qaf::TripletBatch first_batch(const qaf::TripletDataset& d, std::size_t n) {
  return {d.inputs, std::span(d.triplets).first(std::min(n, d.triplets.size()))};
}

void BM_Forward(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const qaf::QafModel model(f.run.resolved_model(), 1);
  const auto batch = first_batch(f.data, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(qaf::predict_batch(model, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(64);

void BM_ForwardBackward(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const qaf::QafModel model(f.run.resolved_model(), 1);
  const auto batch = first_batch(f.data, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(qaf::batch_loss_gradient(model, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(1)->Arg(64);

void BM_LocalRound(benchmark::State& state) {
  const Fixture& f = Fixture::get();
  const qaf::FedConfig& fed = f.run.fed;
  qaf::ClientState client(1, qaf::QafModel(f.run.resolved_model(), 1), fed.adam, f.data, 1);
  std::size_t round = 0;
  for (auto _ : state) benchmark::DoNotOptimize(qaf::local_round(client, fed.batch_size, round++));
}
BENCHMARK(BM_LocalRound);

}  // namespace

BENCHMARK_MAIN();
