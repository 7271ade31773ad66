#include "qaf/federated.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <future>
#include <numeric>

#include "qaf/errors.hpp"
#include "qaf/io.hpp"

namespace qaf {
namespace {

constexpr std::uint64_t kBatchStream = 0xBA7C;

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split by
// index, so results do not depend on scheduling. The first exception by
// index order is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::future<void>> tasks;
  tasks.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    tasks.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    }));
  }
  for (auto& t : tasks) t.get();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

const char* to_string(MomentPolicy policy) {
  return policy == MomentPolicy::keep ? "keep" : "reset";
}

MomentPolicy parse_moment_policy(std::string_view text) {
  if (text == "keep") return MomentPolicy::keep;
  if (text == "reset") return MomentPolicy::reset;
  throw ConfigError("unknown moment policy '" + std::string(text) + "' (expected keep or reset)");
}

void FedConfig::validate() const {
  if (k_local < 1) throw ConfigError("fed.k_local must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw ConfigError("adam lr must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("adam eps must be > 0");
}

Rng batch_stream(std::uint64_t seed, std::uint64_t bus_id) {
  return make_rng(seed, {kBatchStream, bus_id});
}

ClientState::ClientState(std::uint64_t bus, QafModel init, const AdamOptions& adam,
                         const TripletDataset& d, std::uint64_t seed)
    : bus_id(bus),
      model(std::move(init)),
      optimizer(adam, model.params()),
      data(&d),
      batch_rng(batch_stream(seed, bus)) {}

void draw_batch(const TripletDataset& data, std::size_t batch_size, Rng& rng,
                std::vector<Triplet>& out) {
  const std::size_t n = data.triplets.size();
  if (n == 0) throw ContractError("cannot draw a batch from an empty dataset");
  if (batch_size == 0 || batch_size >= n) {
    out.assign(data.triplets.begin(), data.triplets.end());
    return;
  }
  // Floyd's algorithm: batch_size distinct indices in O(batch_size).
  std::vector<std::size_t> picked;
  picked.reserve(batch_size);
  for (std::size_t j = n - batch_size; j < n; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t r = pick(rng);
    if (std::find(picked.begin(), picked.end(), r) == picked.end()) {
      picked.push_back(r);
    } else {
      picked.push_back(j);
    }
  }
  out.clear();
  for (std::size_t idx : picked) out.push_back(data.triplets[idx]);
}

double local_round(ClientState& client, std::size_t batch_size, std::size_t round) {
  if (client.data == nullptr || client.data->triplets.empty()) {
    throw ContractError("client " + std::to_string(client.bus_id) + " has no training data");
  }
  draw_batch(*client.data, batch_size, client.batch_rng, client.scratch);
  LossGradient lg = batch_loss_gradient(client.model, client.data->view(client.scratch));
  if (!std::isfinite(lg.loss)) {
    throw TrainingError("non-finite loss on bus " + std::to_string(client.bus_id) + " in round " +
                            std::to_string(round),
                        TrainingError::npos, round);
  }
  try {
    client.optimizer.update(client.model.params(), lg.grads);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " (bus " + std::to_string(client.bus_id) +
                            ", round " + std::to_string(round) + ")",
                        e.leaf(), round);
  }
  return lg.loss;
}

std::vector<double> average_flat(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) throw FederationError("nothing to average");
  const std::size_t n = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != n) throw FederationError("parameter vectors differ in length");
  }
  const double count = static_cast<double>(vectors.size());
  std::vector<double> mean(vectors.front());
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = vectors.front()[i];
    double delta = 0.0;
    for (std::size_t c = 1; c < vectors.size(); ++c) delta += vectors[c][i] - x0;
    mean[i] = x0 + delta / count;
  }
  return mean;
}

std::vector<double> average_params(std::span<ClientState> clients) {
  if (clients.empty()) throw FederationError("no clients to average");
  for (std::size_t c = 1; c < clients.size(); ++c) {
    if (!clients[c].model.same_architecture(clients.front().model)) {
      throw FederationError("client on bus " + std::to_string(clients[c].bus_id) +
                            " has a different architecture from bus " +
                            std::to_string(clients.front().bus_id));
    }
  }
  std::vector<std::vector<double>> flats;
  flats.reserve(clients.size());
  for (const auto& c : clients) flats.push_back(c.model.flat_params());
  std::vector<double> mean = average_flat(flats);
  for (auto& c : clients) c.model.set_flat_params(mean);
  return mean;
}

std::size_t MessageLog::data_record_transfers() const noexcept {
  std::size_t total = 0;
  for (const auto& m : messages_) total += m.data_records;
  return total;
}

std::size_t MessageLog::count(Message::Kind kind) const noexcept {
  return static_cast<std::size_t>(std::count_if(
      messages_.begin(), messages_.end(), [kind](const Message& m) { return m.kind == kind; }));
}

PretrainResult pretrain(const ModelConfig& config, const FedConfig& fed,
                        std::span<const TripletDataset> datasets, const PretrainHooks& hooks) {
  fed.validate();
  config.validate();
  if (datasets.empty()) throw ContractError("pretraining needs at least one client dataset");
  if (fed.n_clients != 0 && fed.n_clients != datasets.size()) {
    throw ConfigError("fed.n_clients is " + std::to_string(fed.n_clients) + " but " +
                      std::to_string(datasets.size()) + " datasets were given");
  }
  for (const auto& d : datasets) {
    if (d.triplets.empty()) throw ContractError("a client dataset is empty");
    if (d.meta.m != config.m) {
      throw ContractError("dataset sensor count " + std::to_string(d.meta.m) +
                          " does not match model m = " + std::to_string(config.m));
    }
  }

  const QafModel init(config, fed.seed);
  std::vector<ClientState> clients;
  clients.reserve(datasets.size());
  for (std::size_t c = 0; c < datasets.size(); ++c) {
    const auto& d = datasets[c];
    const std::uint64_t bus = d.meta.buses.size() == 1 ? d.meta.buses.front() : c;
    clients.emplace_back(bus, init, fed.adam, d, fed.seed);
  }

  PretrainResult result;
  std::vector<double> losses(clients.size());
  const std::size_t scalars = init.scalar_count();

  auto synchronise = [&](std::size_t round) {
    for (const auto& c : clients) {
      result.log.record({round, c.bus_id, Message::Kind::param_upload, scalars, 0});
    }
    average_params(clients);
    for (auto& c : clients) {
      result.log.record({round, c.bus_id, Message::Kind::param_broadcast, scalars, 0});
      if (fed.moment_policy == MomentPolicy::reset) c.optimizer.reset();
    }
    result.sync_rounds.push_back(round);
    if (hooks.on_sync) hooks.on_sync(result.sync_rounds.size() - 1, round, clients.front().model);
  };

  for (std::size_t k = 0; k < fed.total_rounds; ++k) {
    parallel_for(clients.size(), fed.threads,
                 [&](std::size_t c) { losses[c] = local_round(clients[c], fed.batch_size, k); });
    for (std::size_t c = 0; c < clients.size(); ++c) {
      result.telemetry.push_back({k, clients[c].bus_id, losses[c]});
    }
    if ((k + 1) % fed.k_local == 0) synchronise(k);
  }
  if (fed.total_rounds % fed.k_local != 0) synchronise(fed.total_rounds - 1);
  result.model = std::move(clients.front().model);
  return result;
}

QafModel train_centralized(const ModelConfig& config, const FedConfig& fed,
                           const TripletDataset& data, std::uint64_t bus_id,
                           std::vector<RoundLoss>* telemetry) {
  fed.validate();
  config.validate();
  ClientState client(bus_id, QafModel(config, fed.seed), fed.adam, data, fed.seed);
  for (std::size_t k = 0; k < fed.total_rounds; ++k) {
    const double loss = local_round(client, fed.batch_size, k);
    if (telemetry != nullptr) telemetry->push_back({k, bus_id, loss});
  }
  return std::move(client.model);
}

std::string telemetry_csv(std::span<const RoundLoss> rows) {
  std::string out = "round,bus,loss\n";
  for (const auto& r : rows) {
    out += std::to_string(r.round) + "," + std::to_string(r.bus_id) + "," +
           io::format_double(r.loss) + "\n";
  }
  return out;
}

}  // namespace qaf
